use std::collections::BTreeMap;

use rand::Rng;

use super::vocab::Review;
use crate::dynamics::{step, StopReason, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::geometry::{AttentionSpec, SimilarityMode, SpdMatrix, TokenConfiguration};
use crate::sample;

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Softmax,
    Hardmax,
}

impl std::str::FromStr for ForwardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(ForwardMode::Softmax),
            "hardmax" => Ok(ForwardMode::Hardmax),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

/// Encoder `E` (`W×d`, row-major), step size `α = exp(log_alpha)`, decoder
/// `w`, bias `v`. Every review has exactly `review_len` words.
#[derive(Clone, Debug, PartialEq)]
pub struct SentimentModel {
    vocab_size: usize,
    dim: usize,
    review_len: usize,
    depth: usize,
    tau: f64,
    pub e: Vec<f64>,
    pub w: Vec<f64>,
    pub v: f64,
    pub log_alpha: f64,
}

impl SentimentModel {
    /// `E` uniform on `[-0.5, 0.5]/√d`, `w = 0`, `v = 0`, `α = 0.5`.
    pub fn new(vocab_size: usize, dim: usize, review_len: usize, depth: usize, tau: f64, seed: u64) -> Result<Self> {
        let mut rng = sample::rng(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let e = (0..vocab_size * dim).map(|_| rng.gen_range(-0.5..=0.5) * scale).collect();
        Self::from_parts(vocab_size, dim, review_len, depth, tau, e, vec![0.0; dim], 0.0, 0.5_f64.ln())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        vocab_size: usize,
        dim: usize,
        review_len: usize,
        depth: usize,
        tau: f64,
        e: Vec<f64>,
        w: Vec<f64>,
        v: f64,
        log_alpha: f64,
    ) -> Result<Self> {
        if vocab_size == 0 || dim == 0 || review_len == 0 {
            return Err(Error::InvalidParameter(
                "vocabulary size, dimension and review length must be positive".into(),
            ));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {tau}")));
        }
        if e.len() != vocab_size * dim {
            return Err(Error::DimensionMismatch { expected: vocab_size * dim, found: e.len() });
        }
        if w.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: w.len() });
        }
        if e.iter().chain(&w).chain([&v, &log_alpha]).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        Ok(Self { vocab_size, dim, review_len, depth, tau, e, w, v, log_alpha })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn review_len(&self) -> usize {
        self.review_len
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn embedding(&self, word: usize) -> &[f64] {
        &self.e[word * self.dim..(word + 1) * self.dim]
    }

    pub fn attention_spec(&self, mode: ForwardMode) -> Result<AttentionSpec> {
        let a = SpdMatrix::identity(self.dim);
        match mode {
            ForwardMode::Softmax => AttentionSpec::softmax(a, self.alpha(), self.tau),
            ForwardMode::Hardmax => AttentionSpec::new(a, self.alpha(), SimilarityMode::hardmax()),
        }
    }

    /// Number of trainable scalars: `E`, `w`, `v`, `log α`.
    pub fn num_parameters(&self) -> usize {
        self.e.len() + self.dim + 2
    }

    /// Trainable parameters in the order `E`, `w`, `v`, `log α`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_parameters());
        p.extend_from_slice(&self.e);
        p.extend_from_slice(&self.w);
        p.push(self.v);
        p.push(self.log_alpha);
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_parameters(), "parameter vector length");
        let (e, rest) = p.split_at(self.e.len());
        let (w, rest) = rest.split_at(self.dim);
        self.e.copy_from_slice(e);
        self.w.copy_from_slice(w);
        self.v = rest[0];
        self.log_alpha = rest[1];
    }

    pub(crate) fn check_review(&self, review: &Review) -> Result<()> {
        if review.word_indices.len() != self.review_len {
            return Err(Error::DimensionMismatch { expected: self.review_len, found: review.word_indices.len() });
        }
        if let Some(&index) = review.word_indices.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::IndexOutOfRange { index, n: self.vocab_size });
        }
        Ok(())
    }

    /// `Z⁰`: the encoder rows of the review's words.
    pub fn encode(&self, review: &Review) -> Result<TokenConfiguration> {
        self.check_review(review)?;
        let data = review.word_indices.iter().flat_map(|&i| self.embedding(i).iter().copied()).collect();
        TokenConfiguration::from_flat(self.review_len, self.dim, data)
    }

    /// `σ(z̄ᵀw + v)` with `z̄` the mean of all tokens, pads included.
    pub fn decode(&self, z: &TokenConfiguration) -> f64 {
        sigmoid(self.logit(&mean_token(z)))
    }

    fn logit(&self, zbar: &[f64]) -> f64 {
        zbar.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.v
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mean_token(z: &TokenConfiguration) -> Vec<f64> {
    let mut m = vec![0.0; z.dim()];
    for t in z.tokens() {
        for (acc, x) in m.iter_mut().zip(t) {
            *acc += x;
        }
    }
    let n = z.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

/// Clamped binary cross-entropy.
pub fn bce(yhat: f64, label: u8) -> f64 {
    let p = yhat.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `(ŷ, trajectory)`: encode, `K` attention layers with `A = I`, decode.
pub fn forward(model: &SentimentModel, review: &Review, mode: ForwardMode) -> Result<(f64, TrajectoryRecord)> {
    let z0 = model.encode(review)?;
    let spec = model.attention_spec(mode)?;
    let mut steps = Vec::with_capacity(model.depth);
    let mut z = z0.clone();
    for k in 0..model.depth {
        let mut outcome = step(&z, &spec)?;
        outcome.step = k;
        z = outcome.next.clone();
        steps.push(outcome);
    }
    let yhat = model.decode(&z);
    let converged = steps.last().is_some_and(|s| s.max_displacement == 0.0);
    let traj = TrajectoryRecord {
        initial: z0,
        spec,
        steps,
        converged,
        stop_reason: if converged { StopReason::Converged } else { StopReason::MaxStepsReached },
        steps_taken: model.depth,
    };
    Ok((yhat, traj))
}

/// Mean clamped cross-entropy over the batch.
pub fn loss(model: &SentimentModel, batch: &[Review], mode: ForwardMode) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for r in batch {
        total += bce(forward(model, r, mode)?.0, r.label);
    }
    Ok(total / batch.len() as f64)
}

/// Loss gradient. Encoder rows are sparse: only rows of words that occur.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub e_rows: BTreeMap<usize, Vec<f64>>,
    pub w: Vec<f64>,
    pub v: f64,
    pub log_alpha: f64,
}

impl Gradients {
    fn zeros(d: usize) -> Self {
        Self { e_rows: BTreeMap::new(), w: vec![0.0; d], v: 0.0, log_alpha: 0.0 }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        if self.w.is_empty() {
            self.w = vec![0.0; other.w.len()];
        }
        for (&row, g) in &other.e_rows {
            let acc = self.e_rows.entry(row).or_insert_with(|| vec![0.0; g.len()]);
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        self.w.iter_mut().zip(&other.w).for_each(|(a, b)| *a += b);
        self.v += other.v;
        self.log_alpha += other.log_alpha;
    }

    pub fn scale(&mut self, s: f64) {
        self.e_rows.values_mut().flatten().for_each(|x| *x *= s);
        self.w.iter_mut().for_each(|x| *x *= s);
        self.v *= s;
        self.log_alpha *= s;
    }

    /// Dense vector aligned with [`SentimentModel::parameters`].
    pub fn to_dense(&self, model: &SentimentModel) -> Vec<f64> {
        let d = model.dim;
        let mut g = vec![0.0; model.num_parameters()];
        for (&row, vals) in &self.e_rows {
            g[row * d..(row + 1) * d].copy_from_slice(vals);
        }
        let off = model.e.len();
        g[off..off + d].copy_from_slice(&self.w);
        g[off + d] = self.v;
        g[off + d + 1] = self.log_alpha;
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.e_rows.values().flatten().chain(&self.w).chain([&self.v, &self.log_alpha]).fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Loss and exact gradient for one review under softmax attention.
pub fn review_gradient(model: &SentimentModel, review: &Review) -> Result<(f64, Gradients)> {
    let (n, d) = (model.review_len, model.dim);
    let alpha = model.alpha();
    let tau = model.tau;
    let z0 = model.encode(review)?;
    let spec = model.attention_spec(ForwardMode::Softmax)?;

    let mut zs = vec![z0];
    let mut lams = Vec::with_capacity(model.depth);
    for _ in 0..model.depth {
        let outcome = step(zs.last().expect("nonempty"), &spec)?;
        lams.push(outcome.similarity.expect("softmax step records similarity"));
        zs.push(outcome.next);
    }
    let zk = zs.last().expect("nonempty");
    let zbar = mean_token(zk);
    let yhat = sigmoid(model.logit(&zbar));
    let loss = bce(yhat, review.label);

    let mut grad = Gradients::zeros(d);
    let inside = yhat > PROB_CLAMP && yhat < 1.0 - PROB_CLAMP;
    let g = if inside { yhat - f64::from(review.label) } else { 0.0 };
    if g == 0.0 {
        return Ok((loss, grad));
    }
    grad.v = g;
    grad.w = zbar.iter().map(|z| g * z).collect();

    // dL/dZ^K: every token receives g·w/n.
    let mut gz: Vec<f64> = (0..n).flat_map(|_| model.w.iter().map(|wk| g * wk / n as f64)).collect();
    let mut dalpha = 0.0;
    let c = 1.0 / (1.0 + alpha);
    for k in (0..model.depth).rev() {
        let z = zs[k].as_flat();
        let lam = lams[k].as_flat();
        // Y = ΛZ
        let mut y = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..n {
                let l = lam[i * n + j];
                for t in 0..d {
                    y[i * d + t] += l * z[j * d + t];
                }
            }
        }
        for idx in 0..n * d {
            dalpha += gz[idx] * (y[idx] - z[idx]) * c * c;
        }
        let dy: Vec<f64> = gz.iter().map(|x| alpha * c * x).collect();
        let mut dz: Vec<f64> = gz.iter().map(|x| c * x).collect();
        // dΛ = dY Zᵀ, dZ += Λᵀ dY
        let mut dlam = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for t in 0..d {
                    s += dy[i * d + t] * z[j * d + t];
                    dz[j * d + t] += lam[i * n + j] * dy[i * d + t];
                }
                dlam[i * n + j] = s;
            }
        }
        // Through the row softmax, then S_ij = ⟨z_i, z_j⟩/τ.
        let mut ds = vec![0.0; n * n];
        for i in 0..n {
            let row = &lam[i * n..(i + 1) * n];
            let dot: f64 = row.iter().zip(&dlam[i * n..(i + 1) * n]).map(|(a, b)| a * b).sum();
            for j in 0..n {
                ds[i * n + j] = row[j] * (dlam[i * n + j] - dot);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let s = (ds[i * n + j] + ds[j * n + i]) / tau;
                if s != 0.0 {
                    for t in 0..d {
                        dz[i * d + t] += s * z[j * d + t];
                    }
                }
            }
        }
        gz = dz;
    }
    grad.log_alpha = alpha * dalpha;
    for (i, &word) in review.word_indices.iter().enumerate() {
        let acc = grad.e_rows.entry(word).or_insert_with(|| vec![0.0; d]);
        acc.iter_mut().zip(&gz[i * d..(i + 1) * d]).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

/// Mean loss and gradient over a batch, summed in batch order.
pub fn loss_and_gradient(model: &SentimentModel, batch: &[Review]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts = super::map_reviews(batch, |r| review_gradient(model, r));
    let mut total = Gradients::zeros(model.dim);
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

pub fn gradient(model: &SentimentModel, batch: &[Review]) -> Result<Gradients> {
    Ok(loss_and_gradient(model, batch)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(seed: u64, vocab: usize, d: usize, n: usize, depth: usize, tau: f64) -> SentimentModel {
        let mut rng = sample::rng(seed);
        let mut m = SentimentModel::new(vocab, d, n, depth, tau, seed).unwrap();
        m.e.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        m.w.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        m.v = rng.gen_range(-0.5..0.5);
        m.log_alpha = rng.gen_range(-1.0..0.5);
        m
    }

    fn random_batch(seed: u64, vocab: usize, n: usize, size: usize) -> Vec<Review> {
        let mut rng = sample::rng(seed ^ 0x5eed);
        (0..size)
            .map(|_| Review {
                word_indices: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
                label: rng.gen_range(0..=1),
            })
            .collect()
    }

    #[test]
    fn zero_decoder_gives_half() {
        let m = SentimentModel::new(5, 2, 4, 3, 0.1, 1).unwrap();
        let r = Review { word_indices: vec![1, 2, 0, 0], label: 1 };
        for mode in [ForwardMode::Softmax, ForwardMode::Hardmax] {
            assert_eq!(forward(&m, &r, mode).unwrap().0, 0.5);
        }
        let l = loss(&m, &[r.clone(), Review { label: 0, ..r }], ForwardMode::Softmax).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn depth_zero_decodes_raw_tokens() {
        let mut m = random_model(2, 6, 2, 3, 0, 0.1);
        m.log_alpha = 0.3;
        let r = Review { word_indices: vec![1, 4, 4], label: 0 };
        let (yhat, traj) = forward(&m, &r, ForwardMode::Hardmax).unwrap();
        assert!(traj.steps.is_empty());
        let zbar: Vec<f64> = (0..2).map(|k| (m.e[2 + k] + 2.0 * m.e[8 + k]) / 3.0).collect();
        let expect = sigmoid(zbar[0] * m.w[0] + zbar[1] * m.w[1] + m.v);
        assert!((yhat - expect).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_naive_recomputation() {
        let m = random_model(3, 8, 2, 5, 2, 0.2);
        let batch = random_batch(3, 8, 5, 6);
        let mut naive = 0.0;
        for r in &batch {
            // plain loops, A = I, no compensation
            let mut z: Vec<Vec<f64>> = r.word_indices.iter().map(|&i| m.embedding(i).to_vec()).collect();
            for _ in 0..2 {
                let a = m.alpha();
                let mut next = Vec::new();
                for zi in &z {
                    let s: Vec<f64> = z.iter().map(|zj| (zi[0] * zj[0] + zi[1] * zj[1]) / 0.2).collect();
                    let mx = s.iter().copied().fold(f64::MIN, f64::max);
                    let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
                    let tot: f64 = e.iter().sum();
                    let y: Vec<f64> = (0..2).map(|k| z.iter().zip(&e).map(|(zj, w)| w / tot * zj[k]).sum()).collect();
                    next.push((0..2).map(|k| (zi[k] + a * y[k]) / (1.0 + a)).collect());
                }
                z = next;
            }
            let zbar: Vec<f64> = (0..2).map(|k| z.iter().map(|t| t[k]).sum::<f64>() / 5.0).collect();
            let p = 1.0 / (1.0 + (-(zbar[0] * m.w[0] + zbar[1] * m.w[1] + m.v)).exp());
            let y = f64::from(r.label);
            naive += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        naive /= batch.len() as f64;
        let l = loss(&m, &batch, ForwardMode::Softmax).unwrap();
        assert!((l - naive).abs() < 1e-12, "{l} vs {naive}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = random_model(4, 7, 3, 5, 2, 0.1);
        let batch = random_batch(4, 7, 5, 3);
        let (_, g) = loss_and_gradient(&m, &batch).unwrap();
        let analytic = g.to_dense(&m);
        let p0 = m.parameters();
        let h = 1e-5;
        for (idx, a) in analytic.iter().enumerate() {
            let mut mp = m.clone();
            let mut p = p0.clone();
            p[idx] += h;
            mp.set_parameters(&p);
            let lp = loss(&mp, &batch, ForwardMode::Softmax).unwrap();
            p[idx] -= 2.0 * h;
            mp.set_parameters(&p);
            let lm = loss(&mp, &batch, ForwardMode::Softmax).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((a - fd).abs() <= 1e-6 * a.abs().max(fd.abs()).max(1e-3), "param {idx}: {a} vs {fd}");
        }
    }

    #[test]
    fn saturated_predictions_have_zero_gradient() {
        let mut m = random_model(5, 4, 2, 3, 1, 0.1);
        m.v = 40.0;
        let batch = vec![Review { word_indices: vec![1, 2, 3], label: 1 }];
        let (l, g) = loss_and_gradient(&m, &batch).unwrap();
        assert!(l.is_finite() && l < 1e-11);
        assert!(g.max_abs() <= 1e-10);
        m.v = -800.0;
        let (l, g) = loss_and_gradient(&m, &batch).unwrap();
        assert!((l + PROB_CLAMP.ln()).abs() < 1e-9);
        assert!(g.max_abs() == 0.0);
    }

    #[test]
    fn word_order_does_not_matter() {
        let m = random_model(6, 9, 2, 6, 3, 0.05);
        let r = Review { word_indices: vec![1, 5, 2, 8, 0, 3], label: 1 };
        let s = Review { word_indices: vec![8, 0, 3, 2, 1, 5], label: 1 };
        for mode in [ForwardMode::Softmax, ForwardMode::Hardmax] {
            let a = forward(&m, &r, mode).unwrap().0;
            let b = forward(&m, &s, mode).unwrap().0;
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn bad_reviews_are_rejected() {
        let m = SentimentModel::new(3, 2, 2, 1, 0.1, 0).unwrap();
        assert!(forward(&m, &Review { word_indices: vec![0], label: 0 }, ForwardMode::Softmax).is_err());
        assert!(forward(&m, &Review { word_indices: vec![0, 3], label: 0 }, ForwardMode::Softmax).is_err());
        assert!(SentimentModel::new(3, 2, 2, 1, 0.0, 0).is_err());
    }
}
