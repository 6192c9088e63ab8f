//! Seeded random configurations and attention matrices.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{factorize_spd, hardmax_set, norm, score_gap, SpdMatrix, TokenConfiguration, DEFAULT_TIE_TOL};

/// Ranges for [`random_instance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceRanges {
    pub n: (usize, usize),
    pub d: (usize, usize),
    pub alpha: (f64, f64),
    pub low: f64,
    pub high: f64,
}

impl Default for InstanceRanges {
    fn default() -> Self {
        Self { n: (2, 20), d: (1, 4), alpha: (0.1, 2.0), low: -1.0, high: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomInstance {
    pub seed: u64,
    pub tokens: TokenConfiguration,
    pub alpha: f64,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` tokens with i.i.d. coordinates uniform on `[low, high)`.
pub fn random_tokens<R: Rng>(rng: &mut R, n: usize, d: usize, low: f64, high: f64) -> TokenConfiguration {
    let data = (0..n * d).map(|_| rng.gen_range(low..high)).collect();
    TokenConfiguration::from_flat(n, d, data).expect("finite samples")
}

/// Tokens that are nonzero, pairwise distinct and have a unique largest norm.
pub fn random_instance(seed: u64, ranges: &InstanceRanges) -> RandomInstance {
    let mut rng = rng(seed);
    let n = rng.gen_range(ranges.n.0..=ranges.n.1);
    let d = rng.gen_range(ranges.d.0..=ranges.d.1);
    let alpha = rng.gen_range(ranges.alpha.0..=ranges.alpha.1);
    loop {
        let tokens = random_tokens(&mut rng, n, d, ranges.low, ranges.high);
        if admissible(&tokens) {
            return RandomInstance { seed, tokens, alpha };
        }
    }
}

fn admissible(z: &TokenConfiguration) -> bool {
    let norms: Vec<f64> = z.tokens().map(norm).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let distinct = (0..z.len()).all(|i| (0..i).all(|j| z.token(i) != z.token(j)));
    norms.iter().all(|&r| r > 0.0) && distinct && norms.iter().filter(|&&r| r == top).count() == 1
}

/// `MᵀM + I/2` with `M` uniform on `[-1, 1)`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize) -> SpdMatrix {
    let m: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let s: f64 = (0..d).map(|k| m[k * d + i] * m[k * d + j]).sum();
                    s + if i == j { 0.5 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    factorize_spd(&rows).expect("shifted Gram matrix is positive definite")
}

/// True when every attention set is a singleton whose score beats the runner-up
/// by enough that softmax at temperature `tau` puts at most `tol / scale` of its
/// weight elsewhere, with `scale` the largest token distance.
pub fn is_gap_safe(z: &TokenConfiguration, a: &SpdMatrix, tau: f64, tol: f64) -> bool {
    let n = z.len();
    let diam = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| crate::geometry::distance(z.token(i), z.token(j)))
        .fold(1.0, f64::max);
    let needed = tau * (n as f64 * diam / tol).ln();
    (0..n).all(|i| {
        let set = hardmax_set(z, i, a, DEFAULT_TIE_TOL);
        let top = crate::geometry::dot(&a.apply(z.token(i)), z.token(set.members[0]));
        let gap = score_gap(z, &set, a);
        set.members.len() == 1 && gap > 10.0 * DEFAULT_TIE_TOL * top.abs().max(1.0) && gap >= needed
    })
}

/// Random configuration from `seed` that passes [`is_gap_safe`] with `A = I`.
pub fn gap_safe_tokens(seed: u64, tau: f64, tol: f64) -> TokenConfiguration {
    let mut rng = rng(seed);
    let n = rng.gen_range(2..=10);
    let d = rng.gen_range(1..=3);
    let a = SpdMatrix::identity(d);
    loop {
        let z = random_tokens(&mut rng, n, d, -1.0, 1.0);
        if is_gap_safe(&z, &a, tau, tol) {
            return z;
        }
    }
}
