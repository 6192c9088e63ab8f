//! Leaders, cluster points and the three-part verdict on a converged hardmax
//! trajectory.
//!
//! The limiting polytope is never built explicitly. Its vertices are taken to
//! be the leader limit points; every other cluster point must carry a
//! certificate showing it is the projection of the origin (in the `A`-norm)
//! onto the affine hull of some subset of those vertices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::geometry::{distance, dot, merged, Point, SimilarityMode, SpdMatrix, TokenConfiguration};

pub const DEFAULT_CLUSTER_RADIUS: f64 = 1e-6;
/// Residual a non-vertex cluster point must reach to count as certified.
pub const CERTIFICATE_TOL: f64 = 1e-6;
const AFFINE_HULL_TOL: f64 = 1e-8;
const WEIGHT_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeaderRecord {
    pub token_index: usize,
    pub detected_at_step: usize,
    pub limit_point: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectionCertificate {
    /// Leader indices spanning the face.
    pub vertex_indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
}

impl ProjectionCertificate {
    /// Residual within `tol`, weights summing to one and strictly inside `(0, 1)`.
    pub fn certifies(&self, tol: f64) -> bool {
        let sum: f64 = self.weights.iter().sum();
        self.residual <= tol && (sum - 1.0).abs() <= WEIGHT_SUM_TOL && self.weights.iter().all(|&w| w > 0.0 && w < 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ClusterKind {
    Vertex {
        leader: usize,
    },
    FaceProjection {
        certificate: ProjectionCertificate,
    },
    /// Non-vertex cluster point for which no face could be certified.
    Uncertified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterPoint {
    pub position: Point,
    #[serde(flatten)]
    pub kind: ClusterKind,
    pub member_tokens: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TheoremVerdicts {
    pub every_token_clustered: bool,
    pub leaders_distinct_vertices: bool,
    pub non_vertices_are_projections: bool,
}

impl TheoremVerdicts {
    pub fn all(&self) -> bool {
        self.every_token_clustered && self.leaders_distinct_vertices && self.non_vertices_are_projections
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportParameters {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub mode: SimilarityMode,
    pub steps_taken: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterReport {
    pub leaders: Vec<LeaderRecord>,
    pub clusters: Vec<ClusterPoint>,
    pub verdicts: TheoremVerdicts,
    pub cluster_radius: f64,
    /// Tokens that start at the origin; excluded from the leader verdict.
    pub zero_initial_tokens: Vec<usize>,
    /// `(step, token)` pairs whose attention set excluded a token within 100× the tie tolerance.
    pub near_ties: Vec<(usize, usize)>,
    pub parameters: ReportParameters,
}

/// Every token whose attention set is its own singleton at some recorded layer,
/// with the earliest such layer.
///
/// After detection the set may only grow by tokens merged with the leader
/// (followers that reached it to within floating-point resolution); anything
/// else, or any movement of the leader, is a [`Error::PersistenceViolation`].
pub fn detect_leaders(traj: &TrajectoryRecord) -> Result<Vec<LeaderRecord>> {
    if !traj.is_hardmax() {
        return Err(Error::WrongMode("hardmax"));
    }
    let n = traj.initial.len();
    let mut detected: Vec<Option<usize>> = vec![None; n];
    let configs: Vec<(usize, &TokenConfiguration)> = traj.configurations().collect();
    let last = traj.final_configuration();

    for (step, sets) in traj.attention_history() {
        let z = configs.iter().find(|(k, _)| *k == step).map_or(last, |(_, z)| *z);
        for set in sets {
            let i = set.owner;
            match detected[i] {
                None if set.is_singleton_self() => detected[i] = Some(step),
                Some(first) if !set.members.iter().all(|&j| j == i || merged(z.token(j), z.token(i))) => {
                    return Err(Error::PersistenceViolation { token: i, detected: first, step });
                }
                _ => {}
            }
        }
    }

    let mut leaders = Vec::new();
    for (i, step) in detected.iter().enumerate() {
        let Some(step) = *step else { continue };
        let frozen = last.token(i);
        for (k, z) in &configs {
            if *k >= step && z.token(i) != frozen {
                return Err(Error::PersistenceViolation { token: i, detected: step, step: *k });
            }
        }
        leaders.push(LeaderRecord {
            token_index: i,
            detected_at_step: step,
            limit_point: Point::new(frozen.to_vec())?,
        });
    }
    Ok(leaders)
}

/// Groups the final token positions into cluster points.
///
/// Leaders seed groups first; every token joins the first group whose seed is
/// within `cluster_radius`, so each group has diameter at most `2·radius`.
pub fn extract_clusters(traj: &TrajectoryRecord, cluster_radius: f64) -> Result<Vec<ClusterPoint>> {
    if !(cluster_radius > 0.0) {
        return Err(Error::InvalidParameter("cluster radius must be positive".into()));
    }
    if !traj.converged {
        return Err(Error::NotConverged);
    }
    let leaders = if traj.is_hardmax() { detect_leaders(traj)? } else { Vec::new() };
    let last = traj.final_configuration();
    let n = last.len();

    let mut order: Vec<usize> = leaders.iter().map(|l| l.token_index).collect();
    order.extend((0..n).filter(|i| !leaders.iter().any(|l| l.token_index == *i)));

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in order {
        let zi = last.token(i);
        match groups.iter_mut().find(|(seed, _)| distance(last.token(*seed), zi) <= cluster_radius) {
            Some((_, members)) => members.push(i),
            None => groups.push((i, vec![i])),
        }
    }

    let vertices: Vec<(usize, &[f64])> = leaders.iter().map(|l| (l.token_index, l.limit_point.coords())).collect();
    let a = traj.spec.a();
    let mut clusters = Vec::with_capacity(groups.len());
    for (_, mut members) in groups {
        members.sort_unstable();
        let leader = members.iter().copied().find(|m| leaders.iter().any(|l| l.token_index == *m));
        let (position, kind) = match leader {
            Some(l) => (last.token(l).to_vec(), ClusterKind::Vertex { leader: l }),
            None => {
                let centroid = centroid(last, &members);
                let kind = match certify_face(&centroid, &vertices, a) {
                    Some(certificate) => ClusterKind::FaceProjection { certificate },
                    None => ClusterKind::Uncertified,
                };
                (centroid, kind)
            }
        };
        clusters.push(ClusterPoint { position: Point::new(position)?, kind, member_tokens: members });
    }

    for (x, cx) in clusters.iter().enumerate() {
        for (y, cy) in clusters.iter().enumerate().skip(x + 1) {
            let dist = distance(cx.position.coords(), cy.position.coords());
            if dist <= 4.0 * cluster_radius {
                return Err(Error::AmbiguousClustering { first: x, second: y, distance: dist });
            }
        }
    }
    Ok(clusters)
}

fn centroid(z: &TokenConfiguration, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; z.dim()];
    for &m in members {
        for (ck, zk) in c.iter_mut().zip(z.token(m)) {
            *ck += zk;
        }
    }
    c.iter_mut().for_each(|x| *x /= members.len() as f64);
    c
}

/// Searches faces of size `2..=min(m, d+1)` (lexicographic order) whose affine
/// hull contains `s`, returning the first that certifies `s` as a projection.
fn certify_face(s: &[f64], vertices: &[(usize, &[f64])], a: &SpdMatrix) -> Option<ProjectionCertificate> {
    let m = vertices.len();
    let d = s.len();
    let max_size = m.min(d + 1);
    for size in 2..=max_size {
        let mut found = None;
        for_each_subset(m, size, &mut |subset| {
            let pts: Vec<&[f64]> = subset.iter().map(|&k| vertices[k].1).collect();
            if affine_hull_distance(s, &pts).is_some_and(|dist| dist <= AFFINE_HULL_TOL) {
                let points: Vec<Point> = pts.iter().map(|p| Point::new(p.to_vec()).expect("finite")).collect();
                let s_point = Point::new(s.to_vec()).expect("finite");
                if let Ok(mut cert) = check_projection(&s_point, &points, a) {
                    if cert.certifies(CERTIFICATE_TOL) {
                        cert.vertex_indices = subset.iter().map(|&k| vertices[k].0).collect();
                        found = Some(cert);
                        return true;
                    }
                }
            }
            false
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Calls `f` on each `k`-subset of `0..m` in lexicographic order until it returns true.
fn for_each_subset(m: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return;
        }
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == m - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return;
        }
        idx[pos - 1] += 1;
        for q in pos..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Euclidean distance from `s` to the affine hull of `pts`; `None` when the
/// points are affinely dependent.
fn affine_hull_distance(s: &[f64], pts: &[&[f64]]) -> Option<f64> {
    let d = s.len();
    let r = pts.len() - 1;
    let base = pts[0];
    let dirs = DMatrix::from_fn(d, r, |row, col| pts[col + 1][row] - base[row]);
    let target = DVector::from_fn(d, |row, _| s[row] - base[row]);
    let gram = dirs.transpose() * &dirs;
    let scale = gram.trace().max(f64::MIN_POSITIVE);
    let chol = gram.cholesky()?;
    if (0..r).any(|k| chol.l()[(k, k)].powi(2) <= 1e-12 * scale) {
        return None;
    }
    let coeffs = chol.solve(&(dirs.transpose() * &target));
    Some((dirs * coeffs - target).norm())
}

/// Solves `M β + 1 λ = 0`, `1ᵀβ = 1` with `M_ij = ⟨A v_i, v_j⟩`.
///
/// The solution is the `A`-nearest point to the origin on the affine hull of
/// `vertices`; the residual adds `‖Σ β_j v_j − s‖_∞` to the residual of the
/// linear system, so it vanishes exactly when `s` is that projection.
pub fn check_projection(s: &Point, vertices: &[Point], a: &SpdMatrix) -> Result<ProjectionCertificate> {
    let r = vertices.len();
    if r < 2 {
        return Err(Error::TooFewVertices(r));
    }
    let d = a.dim();
    for p in vertices.iter().chain(std::iter::once(s)) {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.dim() });
        }
    }
    let av: Vec<Vec<f64>> = vertices.iter().map(|v| a.apply(v.coords())).collect();
    let gram = DMatrix::from_fn(r, r, |i, j| dot(&av[i], vertices[j].coords()));

    // Affine independence: the A-Gram matrix of edge vectors from v_0 must be
    // positive definite.
    let edges = DMatrix::from_fn(r - 1, r - 1, |i, j| {
        gram[(i + 1, j + 1)] - gram[(i + 1, 0)] - gram[(0, j + 1)] + gram[(0, 0)]
    });
    let scale = edges.trace().max(f64::MIN_POSITIVE);
    let chol = edges.cholesky().ok_or(Error::SingularSystem)?;
    if (0..r - 1).any(|k| chol.l()[(k, k)].powi(2) <= 1e-12 * scale) {
        return Err(Error::SingularSystem);
    }

    let mut kkt = DMatrix::zeros(r + 1, r + 1);
    kkt.view_mut((0, 0), (r, r)).copy_from(&gram);
    for i in 0..r {
        kkt[(i, r)] = 1.0;
        kkt[(r, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(r + 1);
    rhs[r] = 1.0;
    let sol = kkt.clone().lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }

    let weights: Vec<f64> = sol.iter().take(r).copied().collect();
    let lambda = sol[r];
    let system_residual = (&kkt * &sol - &rhs).amax();
    let mut point_residual = 0.0_f64;
    for k in 0..d {
        let combo: f64 = weights.iter().zip(vertices).map(|(w, v)| w * v.coords()[k]).sum();
        point_residual = point_residual.max((combo - s.coords()[k]).abs());
    }
    Ok(ProjectionCertificate {
        vertex_indices: (0..r).collect(),
        weights,
        lambda,
        residual: point_residual + system_residual,
    })
}

/// Computes the three verdicts for a trajectory and its extracted structure.
pub fn verify_theorem1(
    traj: &TrajectoryRecord,
    leaders: &[LeaderRecord],
    clusters: &[ClusterPoint],
    a: &SpdMatrix,
    cluster_radius: f64,
) -> ClusterReport {
    let n = traj.initial.len();
    let zero_initial_tokens: Vec<usize> = (0..n).filter(|&i| traj.initial.token(i).iter().all(|&x| x == 0.0)).collect();

    let mut assigned = vec![0usize; n];
    for c in clusters {
        for &m in &c.member_tokens {
            if m < n {
                assigned[m] += 1;
            }
        }
    }
    let every_token_clustered = traj.converged && assigned.iter().all(|&c| c == 1);

    let counted: Vec<&LeaderRecord> =
        leaders.iter().filter(|l| !zero_initial_tokens.contains(&l.token_index)).collect();
    let pairwise_distinct = counted.iter().enumerate().all(|(x, lx)| {
        counted
            .iter()
            .skip(x + 1)
            .all(|ly| distance(lx.limit_point.coords(), ly.limit_point.coords()) > 2.0 * cluster_radius)
    });
    let alone_in_cluster = counted.iter().all(|l| {
        clusters.iter().filter(|c| c.member_tokens.contains(&l.token_index)).all(|c| {
            matches!(c.kind, ClusterKind::Vertex { leader } if leader == l.token_index)
                && c.member_tokens.iter().filter(|m| leaders.iter().any(|o| o.token_index == **m)).count() == 1
        })
    });
    let leaders_distinct_vertices = !leaders.is_empty() && pairwise_distinct && alone_in_cluster;

    let non_vertices_are_projections = clusters.iter().all(|c| match &c.kind {
        ClusterKind::Vertex { .. } => true,
        ClusterKind::FaceProjection { certificate } => certificate.certifies(CERTIFICATE_TOL),
        ClusterKind::Uncertified => false,
    });

    let tie_tol = match traj.spec.mode() {
        SimilarityMode::Hardmax { tie_tol } => tie_tol,
        SimilarityMode::Softmax { .. } => 0.0,
    };
    let near_ties = traj
        .attention_history()
        .flat_map(|(step, sets)| sets.iter().filter(move |s| s.margin <= 100.0 * tie_tol).map(move |s| (step, s.owner)))
        .collect();

    ClusterReport {
        leaders: leaders.to_vec(),
        clusters: clusters.to_vec(),
        verdicts: TheoremVerdicts { every_token_clustered, leaders_distinct_vertices, non_vertices_are_projections },
        cluster_radius,
        zero_initial_tokens,
        near_ties,
        parameters: ReportParameters {
            n,
            d: traj.initial.dim(),
            alpha: traj.spec.alpha(),
            a: a.to_rows(),
            mode: traj.spec.mode(),
            steps_taken: traj.steps_taken,
            converged: traj.converged,
        },
    }
}

/// Leader detection, clustering and verification in one call.
pub fn analyze(traj: &TrajectoryRecord, cluster_radius: f64) -> Result<ClusterReport> {
    let leaders = detect_leaders(traj)?;
    let clusters = extract_clusters(traj, cluster_radius)?;
    Ok(verify_theorem1(traj, &leaders, &clusters, traj.spec.a(), cluster_radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, RunConfig};
    use crate::geometry::AttentionSpec;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn line_example() -> TrajectoryRecord {
        let z = TokenConfiguration::new(vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(1), 0.5).unwrap();
        run(&z, &spec, &RunConfig::default()).unwrap()
    }

    #[test]
    fn projection_of_origin_onto_symmetric_segment() {
        let one = SpdMatrix::identity(1);
        let cert = check_projection(&p(&[0.0]), &[p(&[-1.0]), p(&[1.0])], &one).unwrap();
        assert_eq!(cert.weights, vec![0.5, 0.5]);
        assert_eq!(cert.lambda, 0.0);
        assert_eq!(cert.residual, 0.0);

        let id = SpdMatrix::identity(2);
        let cert = check_projection(&p(&[0.5, 0.5]), &[p(&[1.0, 0.0]), p(&[0.0, 1.0])], &id).unwrap();
        assert!((cert.weights[0] - 0.5).abs() < 1e-12 && (cert.weights[1] - 0.5).abs() < 1e-12);
        assert!((cert.lambda + 0.5).abs() < 1e-12);
        assert!(cert.residual <= 1e-12);
        assert!(cert.certifies(1e-12));
    }

    #[test]
    fn projection_rejects_degenerate_faces() {
        let id = SpdMatrix::identity(2);
        assert_eq!(check_projection(&p(&[1.0, 0.0]), &[p(&[1.0, 0.0])], &id), Err(Error::TooFewVertices(1)));
        let dependent = [p(&[0.0, 1.0]), p(&[1.0, 1.0]), p(&[2.0, 1.0])];
        assert_eq!(check_projection(&p(&[0.0, 1.0]), &dependent, &id), Err(Error::SingularSystem));
        let repeated = [p(&[0.3, 1.0]), p(&[0.3, 1.0])];
        assert_eq!(check_projection(&p(&[0.3, 1.0]), &repeated, &id), Err(Error::SingularSystem));
    }

    #[test]
    fn wrong_point_has_large_residual() {
        let id = SpdMatrix::identity(2);
        let cert = check_projection(&p(&[0.2, 0.8]), &[p(&[1.0, 0.0]), p(&[0.0, 1.0])], &id).unwrap();
        assert!(cert.residual > 0.2);
        assert!(!cert.certifies(CERTIFICATE_TOL));
    }

    #[test]
    fn line_example_leaders_and_clusters() {
        let traj = line_example();
        assert!(traj.converged);
        let leaders = detect_leaders(&traj).unwrap();
        let found: Vec<(usize, usize)> = leaders.iter().map(|l| (l.token_index, l.detected_at_step)).collect();
        assert_eq!(found, vec![(0, 0), (4, 0)]);

        let clusters = extract_clusters(&traj, 1e-4).unwrap();
        let mut summary: Vec<(f64, Vec<usize>)> =
            clusters.iter().map(|c| (c.position.coords()[0], c.member_tokens.clone())).collect();
        summary.sort_by(|x, y| x.0.total_cmp(&y.0));
        assert_eq!(summary.len(), 3);
        assert_eq!(summary[0].1, vec![0, 1]);
        assert_eq!(summary[1].1, vec![2]);
        assert_eq!(summary[2].1, vec![3, 4]);
        for (pos, expect) in summary.iter().map(|s| s.0).zip([-1.0, 0.0, 1.0]) {
            assert!((pos - expect).abs() <= 1e-6);
        }

        let report = verify_theorem1(&traj, &leaders, &clusters, traj.spec.a(), 1e-4);
        assert!(report.verdicts.all());
        let middle = report.clusters.iter().find(|c| c.member_tokens == vec![2]).unwrap();
        match &middle.kind {
            ClusterKind::FaceProjection { certificate } => {
                assert_eq!(certificate.vertex_indices, vec![0, 4]);
                assert!((certificate.weights[0] - 0.5).abs() <= 1e-10);
                assert!(certificate.lambda.abs() <= 1e-10);
            }
            other => panic!("middle cluster not certified: {other:?}"),
        }
        assert_eq!(report.zero_initial_tokens, vec![2]);
    }

    #[test]
    fn single_token_cluster() {
        let z = TokenConfiguration::new(vec![vec![0.3, 0.4]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(2), 1.0).unwrap();
        let traj = run(&z, &spec, &RunConfig::default()).unwrap();
        let report = analyze(&traj, DEFAULT_CLUSTER_RADIUS).unwrap();
        assert_eq!(report.leaders.len(), 1);
        assert_eq!(report.leaders[0].detected_at_step, 0);
        assert_eq!(report.clusters.len(), 1);
        assert_eq!(report.clusters[0].member_tokens, vec![0]);
        assert!(report.verdicts.all());
    }

    #[test]
    fn one_basin_single_cluster() {
        let z = TokenConfiguration::new(vec![vec![1.0, 0.0], vec![0.9, 0.01], vec![0.8, -0.01]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(2), 0.5).unwrap();
        let traj = run(&z, &spec, &RunConfig::default()).unwrap();
        let report = analyze(&traj, DEFAULT_CLUSTER_RADIUS).unwrap();
        assert_eq!(report.clusters.len(), 1);
        assert_eq!(report.clusters[0].member_tokens, vec![0, 1, 2]);
        assert!(report.verdicts.all());
    }

    #[test]
    fn not_converged_and_coarse_radius() {
        let z = TokenConfiguration::new(vec![vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]]).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(1), 0.5).unwrap();
        let short = run(&z, &spec, &RunConfig { max_steps: 2, ..RunConfig::default() }).unwrap();
        assert_eq!(extract_clusters(&short, 1e-6), Err(Error::NotConverged));

        let traj = line_example();
        assert!(matches!(extract_clusters(&traj, 0.3), Err(Error::AmbiguousClustering { .. })));
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, &mut |s| {
            seen.push(s.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
