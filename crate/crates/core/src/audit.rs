//! Step-by-step checks of a recorded hardmax trajectory against the
//! properties every exact run satisfies.

use serde::{Deserialize, Serialize};

use crate::cluster::detect_leaders;
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::geometry::{convex_hull_2d, hull_contains, merged, TokenConfiguration};

pub const NORM_TOL: f64 = 1e-12;
pub const CERTIFICATE_TOL: f64 = 1e-12;
pub const BOUND_TOL: f64 = 1e-10;
pub const HULL_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectoryAudit {
    pub steps_checked: usize,
    /// `(step, i, j)`: tokens equal at `step` that were not already merged one step earlier.
    pub collisions: Vec<(usize, usize, usize)>,
    /// Pairs that came within the merge tolerance during the run.
    pub float_merges: usize,
    /// Most negative `‖z_i^{k+1}‖²_A − ‖z_i^k‖²_A`, or 0.
    pub worst_norm_drop: f64,
    /// Largest gap between a stepped token and its explicit convex combination.
    pub worst_certificate_error: f64,
    /// Largest `‖z_i^k‖_A − max_ℓ ‖z_ℓ^0‖_A`.
    pub worst_bound_excess: f64,
    /// Tokens outside the previous hull (planar runs only).
    pub hull_escapes: Option<usize>,
    pub persistence_error: Option<String>,
    /// Whether the unique largest initial token attends only to itself at step 0.
    pub max_norm_leader: Option<bool>,
}

impl TrajectoryAudit {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(&(step, i, j)) = self.collisions.first() {
            out.push(format!("{} collisions, first tokens {i} and {j} at step {step}", self.collisions.len()));
        }
        if self.worst_norm_drop < -NORM_TOL {
            out.push(format!("token norm decreased by {:e}", -self.worst_norm_drop));
        }
        if self.worst_certificate_error > CERTIFICATE_TOL {
            out.push(format!("convex-combination mismatch {:e}", self.worst_certificate_error));
        }
        if self.worst_bound_excess > BOUND_TOL {
            out.push(format!("token left the initial ball by {:e}", self.worst_bound_excess));
        }
        if let Some(k) = self.hull_escapes.filter(|&k| k > 0) {
            out.push(format!("{k} tokens left the previous hull"));
        }
        if let Some(e) = &self.persistence_error {
            out.push(e.clone());
        }
        if self.max_norm_leader == Some(false) {
            out.push("largest token is not a leader at step 0".into());
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }
}

/// Runs every check. The trajectory must be hardmax and record every step.
pub fn audit_trajectory(traj: &TrajectoryRecord) -> Result<TrajectoryAudit> {
    if !traj.is_hardmax() {
        return Err(Error::WrongMode("hardmax"));
    }
    if traj.steps.iter().enumerate().any(|(k, s)| s.step != k) {
        return Err(Error::InvalidParameter("audit needs every step recorded".into()));
    }
    let a = traj.spec.a();
    let alpha = traj.spec.alpha();
    let n = traj.initial.len();
    let d = traj.initial.dim();
    let sq_norms = |z: &TokenConfiguration| -> Vec<f64> { z.tokens().map(|t| a.norm(t).powi(2)).collect() };

    let initial_norms = sq_norms(&traj.initial);
    let radius = initial_norms.iter().copied().fold(0.0, f64::max).sqrt();
    let top: Vec<usize> = (0..n).filter(|&i| initial_norms[i] == radius * radius).collect();
    let max_norm_leader = match (top.as_slice(), traj.steps.first()) {
        ([i], Some(first)) => first.attention_sets.as_ref().map(|sets| sets[*i].is_singleton_self()),
        _ => None,
    };

    let mut audit = TrajectoryAudit {
        steps_checked: traj.steps.len(),
        collisions: Vec::new(),
        float_merges: 0,
        worst_norm_drop: 0.0,
        worst_certificate_error: 0.0,
        worst_bound_excess: initial_norms.iter().map(|r| r.sqrt() - radius).fold(f64::NEG_INFINITY, f64::max),
        hull_escapes: (d == 2).then_some(0),
        persistence_error: detect_leaders(traj).err().map(|e| e.to_string()),
        max_norm_leader,
    };

    let mut was_merged: Vec<bool> =
        pairs(n).map(|(i, j)| merged(traj.initial.token(i), traj.initial.token(j))).collect();
    let mut current = &traj.initial;
    let mut norms = initial_norms;
    let rate = alpha / (1.0 + alpha);
    for outcome in &traj.steps {
        let next = &outcome.next;
        let sets = outcome.attention_sets.as_ref().ok_or(Error::WrongMode("hardmax"))?;

        for (p, (i, j)) in pairs(n).enumerate() {
            let now = merged(next.token(i), next.token(j));
            if next.token(i) == next.token(j) && !was_merged[p] {
                audit.collisions.push((outcome.step + 1, i, j));
            }
            if now && !was_merged[p] {
                audit.float_merges += 1;
            }
            was_merged[p] = now;
        }

        let next_norms = sq_norms(next);
        for i in 0..n {
            audit.worst_norm_drop = audit.worst_norm_drop.min(next_norms[i] - norms[i]);
            audit.worst_bound_excess = audit.worst_bound_excess.max(next_norms[i].sqrt() - radius);
            let members = &sets[i].members;
            let w = rate / members.len() as f64;
            for k in 0..d {
                let combo =
                    current.token(i)[k] / (1.0 + alpha) + members.iter().map(|&j| w * current.token(j)[k]).sum::<f64>();
                audit.worst_certificate_error = audit.worst_certificate_error.max((combo - next.token(i)[k]).abs());
            }
        }

        if let Some(escapes) = audit.hull_escapes.as_mut() {
            let hull = convex_hull_2d(&current.points())?;
            *escapes += next.tokens().filter(|t| !hull_contains(&hull, t, HULL_SLACK)).count();
        }
        current = next;
        norms = next_norms;
    }
    Ok(audit)
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, RunConfig};
    use crate::geometry::{AttentionSpec, SpdMatrix};

    #[test]
    fn example_run_is_clean() {
        let z = TokenConfiguration::new(vec![vec![-1.0, 1.0], vec![0.0, 3.0], vec![12.0, 4.0]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(2), 0.5).unwrap();
        let traj = run(&z, &spec, &RunConfig::default()).unwrap();
        let audit = audit_trajectory(&traj).unwrap();
        assert!(audit.passed(), "{:?}", audit.violations());
        assert_eq!(audit.max_norm_leader, Some(true));
        assert_eq!(audit.hull_escapes, Some(0));
    }

    #[test]
    fn tampered_step_is_caught() {
        let z = TokenConfiguration::new(vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(1), 0.5).unwrap();
        let mut traj = run(&z, &spec, &RunConfig::default()).unwrap();
        let mut rows = traj.steps[0].next.to_rows();
        rows[1][0] = -1.0;
        traj.steps[0].next = TokenConfiguration::new(rows).unwrap();
        let audit = audit_trajectory(&traj).unwrap();
        assert!(!audit.collisions.is_empty());
        assert!(audit.worst_certificate_error > 0.1);
    }

    #[test]
    fn sparse_records_are_rejected() {
        let z = TokenConfiguration::new(vec![vec![1.0], vec![0.5]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(1), 0.5).unwrap();
        let cfg = RunConfig { record_every: 5, ..RunConfig::default() };
        let traj = run(&z, &spec, &cfg).unwrap();
        assert!(audit_trajectory(&traj).is_err());
    }
}
