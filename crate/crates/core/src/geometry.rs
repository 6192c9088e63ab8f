//! Points, token configurations, SPD attention matrices and the attention-set
//! rule that drives the hardmax layer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tie tolerance for hardmax attention sets.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Two tokens closer than this (relative to the larger norm) are numerically
/// indistinguishable: they tie in every comparison and exert no pull on each
/// other.
pub const MERGE_TOL: f64 = 1e-13;

/// Reconstruction tolerance for `BᵀB = A`, relative to `‖A‖_max`.
const RECONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("point must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("point coordinates must be finite".into()));
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords
    }
}

/// The state `Z`: `n` tokens in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TokenConfiguration {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl TokenConfiguration {
    pub fn new(tokens: Vec<Vec<f64>>) -> Result<Self> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::EmptyConfiguration);
        }
        let d = tokens[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("tokens must have positive dimension".into()));
        }
        let mut data = Vec::with_capacity(n * d);
        for t in &tokens {
            if t.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: t.len() });
            }
            data.extend_from_slice(t);
        }
        Self::from_flat(n, d, data)
    }

    pub fn from_flat(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyConfiguration);
        }
        if d == 0 {
            return Err(Error::InvalidParameter("tokens must have positive dimension".into()));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: data.len() });
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("token coordinates must be finite".into()));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        Self::new(points.iter().map(|p| p.coords.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn point(&self, i: usize) -> Point {
        Point { coords: self.token(i).to_vec() }
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.tokens().map(<[f64]>::to_vec).collect()
    }

    /// Reorders tokens so that token `k` of the result is token `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.token(p));
        }
        Self { n: self.n, d: self.d, data }
    }
}

impl TryFrom<Vec<Vec<f64>>> for TokenConfiguration {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<TokenConfiguration> for Vec<Vec<f64>> {
    fn from(z: TokenConfiguration) -> Self {
        z.to_rows()
    }
}

/// Symmetric positive definite `A` together with an upper-triangular factor
/// `B` such that `A = BᵀB`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SpdMatrix {
    dim: usize,
    entries: Vec<f64>,
    factor: Vec<f64>,
    identity: bool,
}

impl SpdMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, factor: entries.clone(), entries, identity: true }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Row-major upper-triangular `B` with `BᵀB = A`.
    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks_exact(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        if self.identity {
            out.copy_from_slice(x);
            return;
        }
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.entries[r * self.dim..(r + 1) * self.dim];
            *o = dot(row, x);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    /// `‖x‖_A = sqrt(xᵀAx)`.
    pub fn norm(&self, x: &[f64]) -> f64 {
        if self.identity {
            return norm(x);
        }
        dot(&self.apply(x), x).max(0.0).sqrt()
    }

    /// Lower-triangular `Bᵀ` as a matrix; handy for the change of variables.
    pub fn factor_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.factor)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SpdMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        factorize_spd(&rows)
    }
}

impl From<SpdMatrix> for Vec<Vec<f64>> {
    fn from(a: SpdMatrix) -> Self {
        a.to_rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimilarityMode {
    Hardmax {
        #[serde(rename = "tieTol")]
        tie_tol: f64,
    },
    Softmax {
        tau: f64,
    },
}

impl SimilarityMode {
    pub fn hardmax() -> Self {
        SimilarityMode::Hardmax { tie_tol: DEFAULT_TIE_TOL }
    }

    pub fn is_hardmax(&self) -> bool {
        matches!(self, SimilarityMode::Hardmax { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSpec {
    #[serde(rename = "A")]
    a: SpdMatrix,
    alpha: f64,
    mode: SimilarityMode,
}

impl AttentionSpec {
    pub fn new(a: SpdMatrix, alpha: f64, mode: SimilarityMode) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("step-size alpha must be positive, got {alpha}")));
        }
        match mode {
            SimilarityMode::Hardmax { tie_tol } if !(tie_tol > 0.0 && tie_tol.is_finite()) => {
                return Err(Error::InvalidParameter(format!("tie tolerance must be positive, got {tie_tol}")));
            }
            SimilarityMode::Softmax { tau } if !(tau > 0.0 && tau.is_finite()) => {
                return Err(Error::InvalidParameter(format!("temperature must be positive, got {tau}")));
            }
            _ => {}
        }
        Ok(Self { a, alpha, mode })
    }

    pub fn hardmax(a: SpdMatrix, alpha: f64) -> Result<Self> {
        Self::new(a, alpha, SimilarityMode::hardmax())
    }

    pub fn softmax(a: SpdMatrix, alpha: f64, tau: f64) -> Result<Self> {
        Self::new(a, alpha, SimilarityMode::Softmax { tau })
    }

    pub fn a(&self) -> &SpdMatrix {
        &self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }

    pub fn with_mode(&self, mode: SimilarityMode) -> Result<Self> {
        Self::new(self.a.clone(), self.alpha, mode)
    }

    pub fn with_a(&self, a: SpdMatrix) -> Result<Self> {
        Self::new(a, self.alpha, self.mode)
    }

    fn tie_tol(&self) -> Result<f64> {
        match self.mode {
            SimilarityMode::Hardmax { tie_tol } => Ok(tie_tol),
            SimilarityMode::Softmax { .. } => Err(Error::WrongMode("hardmax")),
        }
    }
}

/// `C_i`: the tokens that attract token `owner`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSet {
    pub owner: usize,
    pub members: Vec<usize>,
    /// Smallest normalized gap of an excluded token (`inf` when every token is a member).
    #[serde(skip, default = "infinity")]
    pub margin: f64,
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl AttentionSet {
    pub fn is_singleton_self(&self) -> bool {
        self.members.len() == 1 && self.members[0] == self.owner
    }
}

/// True when `x` and `y` are within [`MERGE_TOL`] of each other.
pub fn merged(x: &[f64], y: &[f64]) -> bool {
    distance(x, y) <= MERGE_TOL * norm(x).max(norm(y))
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `xᵀ A y`.
pub fn a_inner(a: &SpdMatrix, x: &Point, y: &Point) -> Result<f64> {
    check_dim(a.dim(), x.dim())?;
    check_dim(a.dim(), y.dim())?;
    Ok(dot(&a.apply(x.coords()), y.coords()))
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Attention set of token `i` under the hardmax rule.
///
/// Token `j` joins the set when its score `⟨A z_i, z_j⟩` ties the maximum. The
/// tie test is made on the difference `⟨A z_i, z_max − z_j⟩`, normalized by
/// `‖z_i‖_A ‖z_max − z_j‖_A`, so it is a cosine: invariant under rescaling and
/// under the change of variables `z ↦ Bz`. A zero owner ties with everyone, and
/// tokens merged with the maximizer (see [`merged`]) tie with it.
pub fn attention_set(z: &TokenConfiguration, i: usize, spec: &AttentionSpec) -> Result<AttentionSet> {
    let tie_tol = spec.tie_tol()?;
    if i >= z.len() {
        return Err(Error::IndexOutOfRange { index: i, n: z.len() });
    }
    check_dim(spec.a().dim(), z.dim())?;
    Ok(hardmax_set(z, i, spec.a(), tie_tol))
}

pub(crate) fn hardmax_set(z: &TokenConfiguration, i: usize, a: &SpdMatrix, tie_tol: f64) -> AttentionSet {
    let n = z.len();
    let az = a.apply(z.token(i));
    let owner_norm = dot(&az, z.token(i)).max(0.0).sqrt();
    if owner_norm == 0.0 {
        return AttentionSet { owner: i, members: (0..n).collect(), margin: f64::INFINITY };
    }

    let scores: Vec<f64> = z.tokens().map(|t| dot(&az, t)).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let radius = z.tokens().map(|t| a.norm(t)).fold(0.0, f64::max);
    // Every tie chain stays inside this window of the raw maximum.
    let window = 4.0 * n as f64 * tie_tol * owner_norm * radius + 1e-14 * (top.abs() + owner_norm * radius);
    let candidates: Vec<usize> = (0..n).filter(|&j| scores[j] >= top - window).collect();

    let mut diff = vec![0.0; z.dim()];
    let mut cosine = |m: usize, j: usize| -> f64 {
        for ((dk, a), b) in diff.iter_mut().zip(z.token(m)).zip(z.token(j)) {
            *dk = a - b;
        }
        let scale = owner_norm * a.norm(&diff);
        if scale > 0.0 {
            dot(&az, &diff) / scale
        } else {
            0.0
        }
    };
    let merged_with = |m: usize, j: usize| merged(z.token(m), z.token(j));

    // Raw scores can round the wrong way; settle the maximizer on differences.
    let mut best = candidates.iter().copied().max_by(|&x, &y| scores[x].total_cmp(&scores[y])).expect("nonempty");
    for _ in 0..candidates.len() {
        let better = candidates
            .iter()
            .filter(|&&j| !merged_with(best, j))
            .map(|&j| (j, cosine(best, j)))
            .filter(|&(_, g)| g < -tie_tol)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match better {
            Some((j, _)) => best = j,
            None => break,
        }
    }

    // Ties are closed under chaining, so the set does not depend on which
    // maximizer was found first. A token merged with a member joins it but
    // does not extend the chain, otherwise merges would creep along a line of
    // nearly equal tokens.
    let mut members = vec![best];
    let mut frontier = vec![best];
    while let Some(m) = frontier.pop() {
        for &j in &candidates {
            if members.contains(&j) {
                continue;
            }
            if merged_with(m, j) {
                members.push(j);
            } else if cosine(m, j).abs() <= tie_tol {
                members.push(j);
                frontier.push(j);
            }
        }
    }
    members.sort_unstable();

    let margin = (0..n).filter(|j| !members.contains(j)).map(|j| cosine(best, j)).fold(f64::INFINITY, f64::min);
    AttentionSet { owner: i, members, margin }
}

/// Difference between the top score and the best score outside the attention
/// set, in raw (unnormalized) units; `inf` when every token is a member.
pub fn score_gap(z: &TokenConfiguration, set: &AttentionSet, a: &SpdMatrix) -> f64 {
    let az = a.apply(z.token(set.owner));
    let top = set.members.iter().map(|&j| dot(&az, z.token(j))).fold(f64::NEG_INFINITY, f64::max);
    let runner_up = (0..z.len())
        .filter(|j| !set.members.contains(j))
        .map(|j| dot(&az, z.token(j)))
        .fold(f64::NEG_INFINITY, f64::max);
    top - runner_up
}

/// Row-stochastic `n×n` matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub(crate) fn from_parts(n: usize, data: Vec<f64>) -> Self {
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks_exact(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `Λ(Z)` for either attention mode.
pub fn similarity_matrix(z: &TokenConfiguration, spec: &AttentionSpec) -> Result<SimilarityMatrix> {
    check_dim(spec.a().dim(), z.dim())?;
    let n = z.len();
    let mut data = vec![0.0; n * n];
    match spec.mode() {
        SimilarityMode::Hardmax { tie_tol } => {
            for i in 0..n {
                let set = hardmax_set(z, i, spec.a(), tie_tol);
                let w = 1.0 / set.members.len() as f64;
                for &j in &set.members {
                    data[i * n + j] = w;
                }
            }
        }
        SimilarityMode::Softmax { tau } => {
            for i in 0..n {
                softmax_row(z, i, spec.a(), tau, &mut data[i * n..(i + 1) * n]);
            }
        }
    }
    Ok(SimilarityMatrix { n, data })
}

pub(crate) fn softmax_row(z: &TokenConfiguration, i: usize, a: &SpdMatrix, tau: f64, row: &mut [f64]) {
    let az = a.apply(z.token(i));
    for (j, r) in row.iter_mut().enumerate() {
        *r = dot(&az, z.token(j)) / tau;
    }
    softmax_in_place(row);
}

/// Max-subtracted softmax; the row maximum maps to `exp(0) = 1`.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for r in row.iter_mut() {
        *r = (*r - m).exp();
        total += *r;
    }
    for r in row.iter_mut() {
        *r /= total;
    }
}

/// Factorizes a symmetric positive definite matrix as `A = BᵀB` with `B`
/// upper triangular.
pub fn factorize_spd(rows: &[Vec<f64>]) -> Result<SpdMatrix> {
    let dim = rows.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("matrix must be non-empty".into()));
    }
    let mut entries = Vec::with_capacity(dim * dim);
    for r in rows {
        check_dim(dim, r.len())?;
        entries.extend_from_slice(r);
    }
    if entries.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("matrix entries must be finite".into()));
    }
    let max_abs = entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut asym = 0.0_f64;
    for i in 0..dim {
        for j in i + 1..dim {
            asym = asym.max((entries[i * dim + j] - entries[j * dim + i]).abs());
        }
    }
    if asym > 1e-12 * max_abs.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    // Mirror the upper triangle so the stored matrix is exactly symmetric.
    for i in 0..dim {
        for j in 0..i {
            entries[i * dim + j] = entries[j * dim + i];
        }
    }

    let trace: f64 = (0..dim).map(|i| entries[i * dim + i]).sum();
    let threshold = 1e-12 * trace.abs() / dim as f64;
    let m = DMatrix::from_row_slice(dim, dim, &entries);
    let chol = m.clone().cholesky().ok_or_else(|| {
        let row = first_bad_pivot(&entries, dim);
        Error::NotPositiveDefinite { row: row.0, pivot: row.1 }
    })?;
    let l = chol.l();
    for k in 0..dim {
        let pivot = l[(k, k)] * l[(k, k)];
        if !(pivot > threshold) || trace <= 0.0 {
            return Err(Error::NotPositiveDefinite { row: k, pivot });
        }
    }
    let b = l.transpose();
    let mut factor = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            factor.push(b[(i, j)]);
        }
    }

    let recon = b.transpose() * &b;
    let err = (recon - m).amax();
    if err > RECONSTRUCTION_TOL * max_abs {
        return Err(Error::NotPositiveDefinite { row: dim - 1, pivot: err });
    }
    let identity = (0..dim).all(|i| (0..dim).all(|j| entries[i * dim + j] == if i == j { 1.0 } else { 0.0 }));
    Ok(SpdMatrix { dim, entries, factor, identity })
}

/// Plain Cholesky sweep used only to report where the factorization breaks.
fn first_bad_pivot(a: &[f64], dim: usize) -> (usize, f64) {
    let mut l = vec![0.0; dim * dim];
    for j in 0..dim {
        let pivot = a[j * dim + j] - (0..j).map(|k| l[j * dim + k] * l[j * dim + k]).sum::<f64>();
        if pivot <= 0.0 {
            return (j, pivot);
        }
        let ljj = pivot.sqrt();
        l[j * dim + j] = ljj;
        for i in j + 1..dim {
            let s = a[i * dim + j] - (0..j).map(|k| l[i * dim + k] * l[j * dim + k]).sum::<f64>();
            l[i * dim + j] = s / ljj;
        }
    }
    (dim - 1, 0.0)
}

/// Applies `z ↦ Bz` to every token.
pub fn transform_configuration(z: &TokenConfiguration, b: &DMatrix<f64>) -> Result<TokenConfiguration> {
    let d = z.dim();
    if b.nrows() != d || b.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: b.nrows() });
    }
    if b.clone().lu().determinant() == 0.0 {
        return Err(Error::SingularMatrix);
    }
    let mut data = Vec::with_capacity(z.len() * d);
    for t in z.tokens() {
        let y = b * DVector::from_column_slice(t);
        data.extend(y.iter());
    }
    TokenConfiguration::from_flat(z.len(), d, data)
}

/// Applies `z ↦ B⁻¹z` by solving with the LU factorization of `B`.
pub fn inverse_transform_configuration(z: &TokenConfiguration, b: &DMatrix<f64>) -> Result<TokenConfiguration> {
    let d = z.dim();
    if b.nrows() != d || b.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: b.nrows() });
    }
    let lu = b.clone().lu();
    let mut data = Vec::with_capacity(z.len() * d);
    for t in z.tokens() {
        let y = lu.solve(&DVector::from_column_slice(t)).ok_or(Error::SingularMatrix)?;
        data.extend(y.iter());
    }
    TokenConfiguration::from_flat(z.len(), d, data)
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counterclockwise hull vertices (monotone chain); collinear points dropped.
pub fn convex_hull_2d(points: &[Point]) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::EmptyConfiguration);
    }
    for p in points {
        check_dim(2, p.dim())?;
    }
    let mut pts: Vec<&[f64]> = points.iter().map(Point::coords).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Ok(pts.into_iter().map(|c| Point { coords: c.to_vec() }).collect());
    }

    let mut hull: Vec<&[f64]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    Ok(hull.into_iter().map(|c| Point { coords: c.to_vec() }).collect())
}

/// Edge-orientation membership test against a counterclockwise hull.
pub fn hull_contains(hull: &[Point], p: &[f64], slack: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => distance(hull[0].coords(), p) <= slack,
        2 => {
            let (a, b) = (hull[0].coords(), hull[1].coords());
            let len = distance(a, b);
            let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
            cross(a, b, p).abs() / len <= slack && (-slack / len..=1.0 + slack / len).contains(&t)
        }
        m => (0..m).all(|k| {
            let a = hull[k].coords();
            let b = hull[(k + 1) % m].coords();
            cross(a, b, p) / distance(a, b) >= -slack
        }),
    }
}
