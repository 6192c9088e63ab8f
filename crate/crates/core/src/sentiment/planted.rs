//! Synthetic reviews whose label is carried by a few marker words.

use rand::seq::SliceRandom;
use rand::Rng;

use super::vocab::LabeledText;
use crate::sample;

pub const POSITIVE_MARKERS: [&str; 5] = ["excellent", "wonderful", "superb", "delightful", "brilliant"];
pub const NEGATIVE_MARKERS: [&str; 5] = ["awful", "terrible", "dreadful", "boring", "horrible"];
pub const FILLER: [&str; 40] = [
    "the",
    "a",
    "movie",
    "film",
    "plot",
    "actor",
    "actress",
    "scene",
    "story",
    "director",
    "camera",
    "music",
    "script",
    "ending",
    "character",
    "cast",
    "studio",
    "sequel",
    "screen",
    "night",
    "city",
    "house",
    "car",
    "dog",
    "friend",
    "family",
    "year",
    "time",
    "was",
    "is",
    "and",
    "with",
    "about",
    "this",
    "that",
    "in",
    "on",
    "of",
    "it",
    "we",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedConfig {
    pub reviews: usize,
    /// Word counts are drawn from this range; shorter reviews get padded.
    pub words: (usize, usize),
    pub markers: (usize, usize),
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self { reviews: 200, words: (16, 16), markers: (4, 8), seed: 7 }
    }
}

/// Balanced corpus: even-indexed reviews are positive.
pub fn planted_corpus(cfg: &PlantedConfig) -> Vec<LabeledText> {
    let mut rng = sample::rng(cfg.seed);
    (0..cfg.reviews)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let markers = if label == 1 { &POSITIVE_MARKERS } else { &NEGATIVE_MARKERS };
            let len = rng.gen_range(cfg.words.0..=cfg.words.1);
            let k = rng.gen_range(cfg.markers.0..=cfg.markers.1).min(len);
            let mut words: Vec<&str> = (0..k).map(|_| *markers.choose(&mut rng).expect("markers")).collect();
            words.extend((k..len).map(|_| *FILLER.choose(&mut rng).expect("filler")));
            words.shuffle(&mut rng);
            LabeledText::new(label, words.join(" "))
        })
        .collect()
}
