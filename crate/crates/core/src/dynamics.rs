//! One transformer layer as a map on token configurations, and the runner
//! that iterates it until the tokens settle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    distance, hardmax_set, merged, softmax_row, AttentionSet, AttentionSpec, SimilarityMatrix, SimilarityMode,
    TokenConfiguration,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepOutcome {
    /// Layer index `k` of the configuration this step started from.
    pub step: usize,
    pub next: TokenConfiguration,
    /// `C_i^k` for every token (hardmax mode).
    pub attention_sets: Option<Vec<AttentionSet>>,
    /// `Λ(Z^k)` (softmax mode).
    pub similarity: Option<SimilarityMatrix>,
    pub max_displacement: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    MaxStepsReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub max_steps: usize,
    pub convergence_tol: f64,
    pub stability_window: usize,
    pub record_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { max_steps: 10_000, convergence_tol: 1e-10, stability_window: 10, record_every: 1 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.stability_window == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter("run limits must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter("convergence tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectoryRecord {
    pub initial: TokenConfiguration,
    pub spec: AttentionSpec,
    pub steps: Vec<StepOutcome>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Total number of layers applied (recorded or not).
    pub steps_taken: usize,
}

impl TrajectoryRecord {
    pub fn final_configuration(&self) -> &TokenConfiguration {
        self.steps.last().map_or(&self.initial, |s| &s.next)
    }

    /// Recorded configurations paired with their layer index, starting with `Z^0`.
    pub fn configurations(&self) -> impl Iterator<Item = (usize, &TokenConfiguration)> + '_ {
        std::iter::once((0, &self.initial)).chain(self.steps.iter().map(|s| (s.step + 1, &s.next)))
    }

    /// Attention sets paired with the layer they were computed at.
    pub fn attention_history(&self) -> impl Iterator<Item = (usize, &[AttentionSet])> + '_ {
        self.steps.iter().filter_map(|s| s.attention_sets.as_deref().map(|sets| (s.step, sets)))
    }

    pub fn is_hardmax(&self) -> bool {
        self.spec.mode().is_hardmax()
    }
}

/// Neumaier-compensated sum. Keeps symmetric configurations symmetric: a token
/// whose attention set is balanced around it does not drift from rounding.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn max_displacement(a: &TokenConfiguration, b: &TokenConfiguration) -> f64 {
    a.tokens().zip(b.tokens()).map(|(x, y)| distance(x, y)).fold(0.0, f64::max)
}

/// Hardmax layer: `z_i ← z_i + α/(1+α) · mean_{j∈C_i}(z_j − z_i)`, all tokens
/// updated from the same `Z^k`. Members merged with `z_i` contribute no pull,
/// so a self-attending token stays bitwise fixed.
pub fn step_hardmax(z: &TokenConfiguration, spec: &AttentionSpec) -> Result<StepOutcome> {
    let SimilarityMode::Hardmax { tie_tol } = spec.mode() else {
        return Err(Error::WrongMode("hardmax"));
    };
    check_dim(z, spec)?;
    Ok(hardmax_layer(z, spec, tie_tol, 0))
}

fn hardmax_layer(z: &TokenConfiguration, spec: &AttentionSpec, tie_tol: f64, step: usize) -> StepOutcome {
    let (n, d) = (z.len(), z.dim());
    let rate = spec.alpha() / (1.0 + spec.alpha());
    let mut sets = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let set = hardmax_set(z, i, spec.a(), tie_tol);
        let zi = z.token(i);
        let weight = rate / set.members.len() as f64;
        for (k, &zik) in zi.iter().enumerate() {
            let pull =
                compensated_sum(set.members.iter().filter(|&&j| !merged(z.token(j), zi)).map(|&j| z.token(j)[k] - zik));
            data.push(zik + weight * pull);
        }
        sets.push(set);
    }
    let next = TokenConfiguration::from_flat(n, d, data).expect("convex combination of finite tokens");
    let max_displacement = max_displacement(z, &next);
    StepOutcome { step, next, attention_sets: Some(sets), similarity: None, max_displacement }
}

/// Softmax layer followed by normalization:
/// `z_i ← (z_i + α Σ_j Λ_ij z_j) / (1+α)`.
pub fn step_softmax(z: &TokenConfiguration, spec: &AttentionSpec) -> Result<StepOutcome> {
    let SimilarityMode::Softmax { tau } = spec.mode() else {
        return Err(Error::WrongMode("softmax"));
    };
    check_dim(z, spec)?;
    Ok(softmax_layer(z, spec, tau, 0))
}

fn softmax_layer(z: &TokenConfiguration, spec: &AttentionSpec, tau: f64, step: usize) -> StepOutcome {
    let (n, d) = (z.len(), z.dim());
    let alpha = spec.alpha();
    let mut lam = vec![0.0; n * n];
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = &mut lam[i * n..(i + 1) * n];
        softmax_row(z, i, spec.a(), tau, row);
        for k in 0..d {
            let avg = compensated_sum(row.iter().enumerate().map(|(j, w)| w * z.token(j)[k]));
            data.push((z.token(i)[k] + alpha * avg) / (1.0 + alpha));
        }
    }
    let next = TokenConfiguration::from_flat(n, d, data).expect("convex combination of finite tokens");
    let max_displacement = max_displacement(z, &next);
    let similarity = SimilarityMatrix::from_parts(n, lam);
    StepOutcome { step, next, attention_sets: None, similarity: Some(similarity), max_displacement }
}

/// One layer in whichever mode `spec` selects.
pub fn step(z: &TokenConfiguration, spec: &AttentionSpec) -> Result<StepOutcome> {
    match spec.mode() {
        SimilarityMode::Hardmax { .. } => step_hardmax(z, spec),
        SimilarityMode::Softmax { .. } => step_softmax(z, spec),
    }
}

fn check_dim(z: &TokenConfiguration, spec: &AttentionSpec) -> Result<()> {
    if z.dim() != spec.a().dim() {
        return Err(Error::DimensionMismatch { expected: spec.a().dim(), found: z.dim() });
    }
    Ok(())
}

fn same_sets(a: &[AttentionSet], b: &[AttentionSet]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.members == y.members)
}

/// Iterates the layer map until convergence or `cfg.max_steps`.
///
/// Converged means `max_displacement ≤ convergence_tol` for `stability_window`
/// consecutive layers with unchanged attention sets (hardmax), or an exact
/// fixed point (zero displacement), which repeats forever.
pub fn run(z0: &TokenConfiguration, spec: &AttentionSpec, cfg: &RunConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_dim(z0, spec)?;
    let mut steps = Vec::new();
    let mut current = z0.clone();
    let mut quiet = 0usize;
    let mut prev_sets: Option<Vec<AttentionSet>> = None;
    let mut converged = false;
    let mut taken = 0;

    for k in 0..cfg.max_steps {
        let outcome = match spec.mode() {
            SimilarityMode::Hardmax { tie_tol } => hardmax_layer(&current, spec, tie_tol, k),
            SimilarityMode::Softmax { tau } => softmax_layer(&current, spec, tau, k),
        };
        taken = k + 1;

        let sets_stable = match (&prev_sets, &outcome.attention_sets) {
            (Some(prev), Some(now)) => same_sets(prev, now),
            (None, Some(_)) => false,
            _ => true,
        };
        if outcome.max_displacement == 0.0 {
            converged = true;
        } else if outcome.max_displacement <= cfg.convergence_tol {
            quiet = if sets_stable { quiet + 1 } else { 1 };
            converged = quiet >= cfg.stability_window;
        } else {
            quiet = 0;
        }

        current = outcome.next.clone();
        prev_sets = outcome.attention_sets.clone();
        if converged || taken % cfg.record_every == 0 || taken == cfg.max_steps {
            steps.push(outcome);
        }
        if converged {
            break;
        }
    }

    Ok(TrajectoryRecord {
        initial: z0.clone(),
        spec: spec.clone(),
        steps,
        converged,
        stop_reason: if converged { StopReason::Converged } else { StopReason::MaxStepsReached },
        steps_taken: taken,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpdMatrix;

    fn cfg(rows: &[&[f64]]) -> TokenConfiguration {
        TokenConfiguration::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn hardmax(d: usize, alpha: f64) -> AttentionSpec {
        AttentionSpec::hardmax(SpdMatrix::identity(d), alpha).unwrap()
    }

    #[test]
    fn example_first_layer() {
        let z = cfg(&[&[-1.0, 1.0], &[0.0, 3.0], &[12.0, 4.0]]);
        let out = step_hardmax(&z, &hardmax(2, 0.5)).unwrap();
        let expected = [[-2.0 / 3.0, 5.0 / 3.0], [4.0, 10.0 / 3.0], [12.0, 4.0]];
        for (i, e) in expected.iter().enumerate() {
            for (got, want) in out.next.token(i).iter().zip(e) {
                assert!((got - want).abs() <= 1e-12);
            }
        }
        assert_eq!(out.next.token(2), z.token(2));
    }

    #[test]
    fn two_tokens_on_a_line() {
        let z = cfg(&[&[1.0, 0.0], &[3.0, 0.0]]);
        let out = step_hardmax(&z, &hardmax(2, 1.0)).unwrap();
        assert_eq!(out.next.token(0), &[2.0, 0.0]);
        assert_eq!(out.next.token(1), &[3.0, 0.0]);
        assert_eq!(out.max_displacement, 1.0);
    }

    #[test]
    fn softmax_fixed_point_and_wrong_mode() {
        let z = cfg(&[&[0.3, -0.7], &[0.3, -0.7], &[0.3, -0.7]]);
        let spec = AttentionSpec::softmax(SpdMatrix::identity(2), 0.8, 0.2).unwrap();
        let out = step_softmax(&z, &spec).unwrap();
        for t in out.next.tokens() {
            assert!((t[0] - 0.3).abs() < 1e-15 && (t[1] + 0.7).abs() < 1e-15);
        }
        assert!(step_hardmax(&z, &spec).is_err());
        assert!(step_softmax(&z, &hardmax(2, 1.0)).is_err());
    }

    #[test]
    fn softmax_high_temperature_moves_towards_centroid() {
        // Deviation from the uniform average is O(max score · max norm / τ),
        // so the tokens are kept at unit scale.
        let z = cfg(&[&[-1.0 / 12.0, 1.0 / 12.0], &[0.0, 0.25], &[1.0, 1.0 / 3.0]]);
        let alpha = 0.5;
        let spec = AttentionSpec::softmax(SpdMatrix::identity(2), alpha, 1e6).unwrap();
        let out = step_softmax(&z, &spec).unwrap();
        let mean = [11.0 / 36.0, 2.0 / 9.0];
        for i in 0..3 {
            for ((got, zk), m) in out.next.token(i).iter().zip(z.token(i)).zip(mean) {
                assert!((got - (zk + alpha * m) / (1.0 + alpha)).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn single_token_converges_immediately() {
        let z = cfg(&[&[0.4, 0.1]]);
        let traj = run(&z, &hardmax(2, 0.5), &RunConfig::default()).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.steps_taken, 1);
        assert_eq!(traj.final_configuration(), &z);
    }

    #[test]
    fn max_steps_without_convergence() {
        let z = cfg(&[&[1.0], &[0.5]]);
        let cfg_short = RunConfig { max_steps: 3, ..RunConfig::default() };
        let traj = run(&z, &hardmax(1, 0.5), &cfg_short).unwrap();
        assert!(!traj.converged);
        assert_eq!(traj.stop_reason, StopReason::MaxStepsReached);
        assert_eq!(traj.steps.len(), 3);
    }

    #[test]
    fn record_every_keeps_last_step() {
        let z = cfg(&[&[1.0], &[0.5], &[-0.25]]);
        let traj = run(&z, &hardmax(1, 0.5), &RunConfig { record_every: 7, ..RunConfig::default() }).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.steps.last().unwrap().step + 1, traj.steps_taken);
        assert!(traj.steps.iter().rev().skip(1).all(|s| (s.step + 1) % 7 == 0));
    }

    #[test]
    fn compensated_sum_cancels_symmetric_terms() {
        let a = 0.6666666666666667_f64;
        assert_eq!(compensated_sum([-1.0, -a, 0.0, a, 1.0].into_iter()), 0.0);
    }

    #[test]
    fn invalid_run_config() {
        let z = cfg(&[&[1.0]]);
        let bad = RunConfig { stability_window: 0, ..RunConfig::default() };
        assert!(run(&z, &hardmax(1, 0.5), &bad).is_err());
    }
}
