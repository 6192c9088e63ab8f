//! Finite-difference gradient checks and random small problems to run them on.

use rand::Rng;

use super::model::{loss, loss_and_gradient, ForwardMode, SentimentModel};
use super::vocab::Review;
use crate::error::Result;
use crate::sample;

/// Gradients below this magnitude are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Flat parameter index (see [`SentimentModel::parameters`]) of the worst entry.
    pub worst_parameter: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Central differences with step `h` on every trainable parameter.
pub fn check_gradient(model: &SentimentModel, batch: &[Review], h: f64) -> Result<GradientCheck> {
    let (_, grad) = loss_and_gradient(model, batch)?;
    let analytic = grad.to_dense(model);
    let base = model.parameters();
    let mut probe = model.clone();
    let mut worst = GradientCheck { max_relative_error: 0.0, worst_parameter: 0, analytic: 0.0, numeric: 0.0 };
    for (idx, &a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[idx] = base[idx] + h;
        probe.set_parameters(&p);
        let up = loss(&probe, batch, ForwardMode::Softmax)?;
        p[idx] = base[idx] - h;
        probe.set_parameters(&p);
        let down = loss(&probe, batch, ForwardMode::Softmax)?;
        let numeric = (up - down) / (2.0 * h);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if err > worst.max_relative_error {
            worst = GradientCheck { max_relative_error: err, worst_parameter: idx, analytic: a, numeric };
        }
    }
    Ok(worst)
}

/// Shape of a random problem for [`random_problem`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemShape {
    pub vocab_size: usize,
    pub dim: usize,
    pub review_len: usize,
    pub depth: usize,
    pub tau: f64,
    pub batch: usize,
}

/// Default-initialized encoder with a random decoder, bias and step size, and
/// a batch of random reviews.
pub fn random_problem(seed: u64, shape: &ProblemShape) -> Result<(SentimentModel, Vec<Review>)> {
    let mut model = SentimentModel::new(shape.vocab_size, shape.dim, shape.review_len, shape.depth, shape.tau, seed)?;
    let mut rng = sample::rng(seed.wrapping_add(0x9e37_79b9));
    model.w.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
    model.v = rng.gen_range(-0.5..0.5);
    model.log_alpha = rng.gen_range(0.2f64.ln()..2.0f64.ln());
    let batch = (0..shape.batch)
        .map(|_| Review {
            word_indices: (0..shape.review_len).map(|_| rng.gen_range(0..shape.vocab_size)).collect(),
            label: rng.gen_range(0..=1),
        })
        .collect();
    Ok((model, batch))
}
