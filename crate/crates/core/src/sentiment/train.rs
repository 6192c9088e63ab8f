use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{bce, forward, loss_and_gradient, ForwardMode, SentimentModel};
use super::vocab::Review;
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::geometry::merged;
use crate::sample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter("batch size and epochs must be positive".into()));
        }
        let betas = [self.adam_beta1, self.adam_beta2];
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParameter("Adam needs betas in [0, 1) and a positive epsilon".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Adam on shuffled mini-batches under softmax attention. The history holds
/// the full-dataset softmax loss and accuracy after every epoch.
pub fn train(model: &SentimentModel, data: &[Review], cfg: &TrainConfig) -> Result<(SentimentModel, Vec<EpochStats>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = model.clone();
    let mut params = model.parameters();
    let mut adam = Adam::new(params.len());
    let mut rng = sample::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Review> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = loss_and_gradient(&model, &batch)?;
            let dense = grad.to_dense(&model);
            if !loss.is_finite() || dense.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(&mut params, &dense, cfg);
            model.set_parameters(&params);
        }
        let eval = score(&model, data, ForwardMode::Softmax)?;
        if !eval.0.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        history.push(EpochStats { epoch: epoch + 1, loss: eval.0, accuracy: eval.1 });
    }
    Ok((model, history))
}

fn score(model: &SentimentModel, data: &[Review], mode: ForwardMode) -> Result<(f64, f64)> {
    let preds = super::map_reviews(data, |r| forward(model, r, mode).map(|(y, _)| y));
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (r, p) in data.iter().zip(preds) {
        let p = p?;
        loss += bce(p, r.label);
        correct += usize::from(predicted_label(p) == r.label);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Rounds half up: `ŷ = 0.5` predicts the positive class.
pub fn predicted_label(yhat: f64) -> u8 {
    u8::from(yhat >= 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeaderStats {
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
    pub fraction_at_step0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub leader_stats: LeaderStats,
}

/// First layer at which each token attends only to itself and its exact
/// copies. Repeated words (pads included) share one embedding, so a group of
/// copies plays the role of a single leader.
pub fn leader_steps(traj: &TrajectoryRecord) -> Vec<Option<usize>> {
    let mut first = vec![None; traj.initial.len()];
    let mut current = &traj.initial;
    for outcome in &traj.steps {
        if let Some(sets) = &outcome.attention_sets {
            for set in sets {
                let zi = current.token(set.owner);
                if first[set.owner].is_none() && set.members.iter().all(|&j| merged(current.token(j), zi)) {
                    first[set.owner] = Some(outcome.step);
                }
            }
        }
        current = &outcome.next;
    }
    first
}

/// Loss and rounded accuracy in `mode`; leader statistics always come from
/// the hardmax trajectories.
pub fn evaluate(model: &SentimentModel, data: &[Review], mode: ForwardMode) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (loss, accuracy) = score(model, data, mode)?;
    let counts = super::map_reviews(data, |r| {
        let (_, traj) = forward(model, r, ForwardMode::Hardmax)?;
        let steps = leader_steps(&traj);
        let total = steps.iter().flatten().count();
        let initial = steps.iter().flatten().filter(|&&s| s == 0).count();
        Ok::<_, Error>((total, initial))
    });
    let mut per_review = Vec::with_capacity(data.len());
    let mut at_zero = 0usize;
    for c in counts {
        let (total, initial) = c?;
        per_review.push(total);
        at_zero += initial;
    }
    let n = per_review.len() as f64;
    let sum: usize = per_review.iter().sum();
    let mean = sum as f64 / n;
    let var = per_review.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    let leader_stats = LeaderStats {
        mean,
        std: var.sqrt(),
        min: per_review.iter().copied().min().unwrap_or(0),
        max: per_review.iter().copied().max().unwrap_or(0),
        fraction_at_step0: if sum == 0 { 0.0 } else { at_zero as f64 / sum as f64 },
    };
    Ok(Evaluation { loss, accuracy, leader_stats })
}
