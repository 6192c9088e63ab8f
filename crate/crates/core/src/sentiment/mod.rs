//! A tiny sentiment classifier built on the attention dynamics.
//!
//! Words are looked up in an encoder matrix, the resulting tokens go through
//! `K` attention layers with `A = I`, and a logistic readout of the mean token
//! gives `ŷ`. Training uses softmax attention; evaluation can use either mode.

mod check;
mod file;
mod model;
mod planted;
mod train;
mod vocab;

pub use check::{check_gradient, random_problem, GradientCheck, ProblemShape, RELATIVE_FLOOR};
pub use file::{model_from_bytes, model_to_bytes, MAGIC};
pub use model::{
    bce, forward, gradient, loss, loss_and_gradient, review_gradient, sigmoid, ForwardMode, Gradients, SentimentModel,
    PROB_CLAMP,
};
pub use planted::{planted_corpus, PlantedConfig, FILLER, NEGATIVE_MARKERS, POSITIVE_MARKERS};
pub use train::{evaluate, leader_steps, predicted_label, train, EpochStats, Evaluation, LeaderStats, TrainConfig};
pub use vocab::{
    build_vocabulary, dataset_tsv, decode_review, encode_dataset, encode_review, parse_dataset, tokenize, LabeledText,
    Review, Vocabulary, PAD_INDEX, PAD_TOKEN,
};

#[cfg(feature = "parallel")]
fn map_reviews<T: Send>(reviews: &[Review], f: impl Fn(&Review) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    reviews.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_reviews<T>(reviews: &[Review], f: impl Fn(&Review) -> T) -> Vec<T> {
    reviews.iter().map(f).collect()
}
