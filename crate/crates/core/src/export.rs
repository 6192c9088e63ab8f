//! Trajectory files: CSV positions, JSON attention sets, a run manifest, and
//! an SVG scatter for planar runs.
//!
//! Floats in CSV are written with 17 significant digits, so files read back to
//! the exact same `f64` values and a trajectory can be rebuilt bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{RunConfig, StepOutcome, StopReason, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull_2d, AttentionSet, AttentionSpec, Point, SimilarityMatrix, TokenConfiguration};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const ATTENTION_JSON: &str = "attention.json";
pub const RUN_JSON: &str = "run.json";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const PAIRS_CSV: &str = "pairs.csv";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Earliest layer at which each token's attention set was its own singleton.
pub fn leader_steps(traj: &TrajectoryRecord) -> Vec<Option<usize>> {
    let mut first = vec![None; traj.initial.len()];
    for (step, sets) in traj.attention_history() {
        for set in sets {
            if first[set.owner].is_none() && set.is_singleton_self() {
                first[set.owner] = Some(step);
            }
        }
    }
    first
}

/// `step,token,coord0,...,coord{d-1},is_leader`, one row per recorded layer and token.
pub fn trajectory_csv(traj: &TrajectoryRecord) -> String {
    let d = traj.initial.dim();
    let mut out = String::from("step,token");
    for k in 0..d {
        let _ = write!(out, ",coord{k}");
    }
    out.push_str(",is_leader\n");
    let leaders = leader_steps(traj);
    for (step, z) in traj.configurations() {
        for (i, t) in z.tokens().enumerate() {
            let _ = write!(out, "{step},{i}");
            for x in t {
                let _ = write!(out, ",{}", fmt_f64(*x));
            }
            let is_leader = leaders[i].is_some_and(|s| s <= step);
            let _ = writeln!(out, ",{}", u8::from(is_leader));
        }
    }
    out
}

/// Parses a trajectory CSV into `(layer, configuration)` pairs in file order.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<(usize, TokenConfiguration)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty trajectory file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "step" || cols[1] != "token" || cols[cols.len() - 1] != "is_leader" {
        return Err(Error::Format(format!("unexpected trajectory header `{header}`")));
    }
    let d = cols.len() - 3;
    let mut by_step: BTreeMap<usize, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 3 {
            return Err(Error::Format(format!("line {}: expected {} fields", lineno + 2, d + 3)));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)));
        let step = parse_usize(fields[0])?;
        let token = parse_usize(fields[1])?;
        let coords = fields[2..2 + d]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2))))
            .collect::<Result<Vec<f64>>>()?;
        by_step.entry(step).or_default().push((token, coords));
    }
    let mut out = Vec::with_capacity(by_step.len());
    for (step, mut rows) in by_step {
        rows.sort_by_key(|(t, _)| *t);
        if rows.iter().enumerate().any(|(k, (t, _))| *t != k) {
            return Err(Error::Format(format!("step {step}: token indices are not 0..n")));
        }
        out.push((step, TokenConfiguration::new(rows.into_iter().map(|(_, c)| c).collect())?));
    }
    if out.is_empty() {
        return Err(Error::Format("trajectory file has no rows".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionEntry {
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<Vec<Vec<f64>>>,
}

/// One entry per recorded layer: `{"step": k, "sets": [[members...], ...]}`
/// (hardmax) or `{"step": k, "similarity": [[...]]}` (softmax).
pub fn attention_entries(traj: &TrajectoryRecord) -> Vec<AttentionEntry> {
    traj.steps
        .iter()
        .map(|s| AttentionEntry {
            step: s.step,
            sets: s.attention_sets.as_ref().map(|sets| sets.iter().map(|c| c.members.clone()).collect()),
            similarity: s.similarity.as_ref().map(SimilarityMatrix::to_rows),
        })
        .collect()
}

pub fn attention_json(traj: &TrajectoryRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(&attention_entries(traj))?)
}

/// Everything besides positions and attention needed to rebuild a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub spec: AttentionSpec,
    pub run_config: RunConfig,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub steps_taken: usize,
    /// Per recorded step, aligned with the attention entries.
    pub max_displacements: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(traj: &TrajectoryRecord, run_config: RunConfig, seed: Option<u64>) -> Self {
        Self {
            spec: traj.spec.clone(),
            run_config,
            converged: traj.converged,
            stop_reason: traj.stop_reason,
            steps_taken: traj.steps_taken,
            max_displacements: traj.steps.iter().map(|s| s.max_displacement).collect(),
            seed,
        }
    }
}

/// Reassembles a [`TrajectoryRecord`] from the three files written by a run.
pub fn rebuild_trajectory(
    manifest: &RunManifest,
    configurations: &[(usize, TokenConfiguration)],
    attention: &[AttentionEntry],
) -> Result<TrajectoryRecord> {
    let (first_step, initial) = configurations.first().ok_or_else(|| Error::Format("no configurations".into()))?;
    if *first_step != 0 {
        return Err(Error::Format("trajectory does not start at step 0".into()));
    }
    if attention.len() != manifest.max_displacements.len() {
        return Err(Error::Format("attention entries and manifest disagree on the number of steps".into()));
    }
    let n = initial.len();
    let mut steps = Vec::with_capacity(attention.len());
    for (entry, &max_displacement) in attention.iter().zip(&manifest.max_displacements) {
        let next = configurations
            .iter()
            .find(|(k, _)| *k == entry.step + 1)
            .map(|(_, z)| z.clone())
            .ok_or_else(|| Error::Format(format!("missing configuration for step {}", entry.step + 1)))?;
        let attention_sets = match &entry.sets {
            Some(sets) => {
                if sets.len() != n {
                    return Err(Error::Format(format!("step {}: expected {n} attention sets", entry.step)));
                }
                let sets = sets
                    .iter()
                    .enumerate()
                    .map(|(owner, members)| {
                        if members.is_empty() || members.iter().any(|&m| m >= n) {
                            return Err(Error::Format(format!("step {}: bad attention set", entry.step)));
                        }
                        Ok(AttentionSet { owner, members: members.clone(), margin: f64::INFINITY })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(sets)
            }
            None => None,
        };
        let similarity = entry
            .similarity
            .as_ref()
            .map(|rows| SimilarityMatrix::from_parts(n, rows.iter().flatten().copied().collect()));
        steps.push(StepOutcome { step: entry.step, next, attention_sets, similarity, max_displacement });
    }
    if manifest.spec.mode().is_hardmax() && steps.iter().any(|s| s.attention_sets.is_none()) {
        return Err(Error::Format("hardmax run without attention sets".into()));
    }
    Ok(TrajectoryRecord {
        initial: initial.clone(),
        spec: manifest.spec.clone(),
        steps,
        converged: manifest.converged,
        stop_reason: manifest.stop_reason,
        steps_taken: manifest.steps_taken,
    })
}

/// For `d ≠ 2`: initial and final coordinates for every pair of axes.
pub fn pairs_csv(traj: &TrajectoryRecord) -> String {
    let d = traj.initial.dim();
    let last = traj.final_configuration();
    let mut out = String::new();
    if d == 1 {
        out.push_str("token,initial0,final0\n");
        for i in 0..last.len() {
            let _ = writeln!(out, "{i},{},{}", fmt_f64(traj.initial.token(i)[0]), fmt_f64(last.token(i)[0]));
        }
        return out;
    }
    out.push_str("token,axis_a,axis_b,initial_a,initial_b,final_a,final_b\n");
    for i in 0..last.len() {
        for a in 0..d {
            for b in a + 1..d {
                let (z0, zf) = (traj.initial.token(i), last.token(i));
                let _ = writeln!(
                    out,
                    "{i},{a},{b},{},{},{},{}",
                    fmt_f64(z0[a]),
                    fmt_f64(z0[b]),
                    fmt_f64(zf[a]),
                    fmt_f64(zf[b])
                );
            }
        }
    }
    out
}

fn star_path(cx: f64, cy: f64, r: f64) -> String {
    let mut path = String::new();
    for k in 0..10 {
        let radius = if k % 2 == 0 { r } else { 0.45 * r };
        let angle = std::f64::consts::PI * (k as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
        let _ = write!(
            path,
            "{}{:.3},{:.3} ",
            if k == 0 { "M" } else { "L" },
            cx + radius * angle.cos(),
            cy + radius * angle.sin()
        );
    }
    path.push('Z');
    path
}

/// Planar scatter: initial tokens as faint circles, final tokens as circles,
/// leaders as stars, and the convex hulls of both configurations.
pub fn scatter_svg(traj: &TrajectoryRecord) -> Result<String> {
    if traj.initial.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: traj.initial.dim() });
    }
    let last = traj.final_configuration();
    let leaders = leader_steps(traj);
    let all: Vec<&[f64]> = traj.initial.tokens().chain(last.tokens()).collect();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &all {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let span = (xmax - xmin).max(ymax - ymin).max(1e-9);
    let (size, pad) = (480.0, 30.0);
    let scale = (size - 2.0 * pad) / span;
    let sx = |x: f64| pad + (x - xmin) * scale;
    let sy = |y: f64| size - pad - (y - ymin) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (z, class, color) in [(&traj.initial, "hull-initial", "#9bb7d4"), (last, "hull-final", "#1f4e8c")] {
        let hull = convex_hull_2d(&z.points())?;
        let pts: Vec<String> =
            hull.iter().map(|p: &Point| format!("{:.3},{:.3}", sx(p.coords()[0]), sy(p.coords()[1]))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="{class}" points="{}" fill="{color}" fill-opacity="0.12" stroke="{color}" stroke-width="1"/>"#,
            pts.join(" ")
        );
    }
    for t in traj.initial.tokens() {
        let _ = writeln!(
            svg,
            r##"<circle class="initial" cx="{:.3}" cy="{:.3}" r="3" fill="none" stroke="#888888"/>"##,
            sx(t[0]),
            sy(t[1])
        );
    }
    for (i, t) in last.tokens().enumerate() {
        if leaders[i].is_some() {
            let _ = writeln!(
                svg,
                r##"<path class="token leader" data-index="{i}" d="{}" fill="#d62728"/>"##,
                star_path(sx(t[0]), sy(t[1]), 8.0)
            );
        } else {
            let _ = writeln!(
                svg,
                r##"<circle class="token" data-index="{i}" cx="{:.3}" cy="{:.3}" r="4" fill="#1f77b4"/>"##,
                sx(t[0]),
                sy(t[1])
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::run;
    use crate::geometry::SpdMatrix;

    fn example_run() -> TrajectoryRecord {
        let z = TokenConfiguration::new(vec![vec![-1.0, 1.0], vec![0.0, 3.0], vec![12.0, 4.0]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(2), 0.5).unwrap();
        run(&z, &spec, &RunConfig::default()).unwrap()
    }

    #[test]
    fn csv_header_and_leader_flags() {
        let traj = example_run();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,token,coord0,coord1,is_leader"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3 * (traj.steps.len() + 1));
        assert!(rows[0].starts_with("0,0,") && rows[0].ends_with(",0"));
        assert!(rows[2].starts_with("0,2,") && rows[2].ends_with(",1"));
        assert!(rows[3].starts_with("1,0,") && rows[3].ends_with(",1"));
    }

    #[test]
    fn files_rebuild_the_same_trajectory() {
        let traj = example_run();
        let configs = parse_trajectory_csv(&trajectory_csv(&traj)).unwrap();
        let attention: Vec<AttentionEntry> = serde_json::from_str(&attention_json(&traj).unwrap()).unwrap();
        let manifest = RunManifest::new(&traj, RunConfig::default(), None);
        let manifest: RunManifest = serde_json::from_str(&serde_json::to_string(&manifest).unwrap()).unwrap();
        let rebuilt = rebuild_trajectory(&manifest, &configs, &attention).unwrap();
        assert_eq!(rebuilt.final_configuration(), traj.final_configuration());
        assert_eq!(rebuilt.steps.len(), traj.steps.len());
        for (a, b) in rebuilt.steps.iter().zip(&traj.steps) {
            let sa: Vec<_> = a.attention_sets.as_ref().unwrap().iter().map(|s| &s.members).collect();
            let sb: Vec<_> = b.attention_sets.as_ref().unwrap().iter().map(|s| &s.members).collect();
            assert_eq!(sa, sb);
            assert_eq!(a.next, b.next);
        }
    }

    #[test]
    fn corrupt_csv_is_rejected() {
        assert!(parse_trajectory_csv("").is_err());
        assert!(parse_trajectory_csv("a,b,c\n").is_err());
        assert!(parse_trajectory_csv("step,token,coord0,is_leader\n0,0,abc,0\n").is_err());
        assert!(parse_trajectory_csv("step,token,coord0,is_leader\n0,1,1.0,0\n").is_err());
    }

    #[test]
    fn svg_draws_every_token() {
        let traj = example_run();
        let svg = scatter_svg(&traj).unwrap();
        assert_eq!(svg.matches("class=\"token").count(), 3);
        assert_eq!(svg.matches("class=\"token leader\"").count(), 2);
    }
}
