use hardmax::sample::gap_safe_tokens;
use hardmax::*;

const TAU: f64 = 1e-4;

#[test]
fn small_temperature_softmax_matches_hardmax() {
    for seed in 0..50 {
        let z = gap_safe_tokens(seed, TAU, 1e-7);
        let d = z.dim();
        let hard = AttentionSpec::hardmax(SpdMatrix::identity(d), 0.7).unwrap();
        let soft = AttentionSpec::softmax(SpdMatrix::identity(d), 0.7, TAU).unwrap();

        let sim_h = similarity_matrix(&z, &hard).unwrap();
        let sim_s = similarity_matrix(&z, &soft).unwrap();
        assert!(sim_h.max_abs_diff(&sim_s) <= 1e-3, "seed {seed}");

        let next_h = step(&z, &hard).unwrap().next;
        let next_s = step(&z, &soft).unwrap().next;
        let diff = next_h.as_flat().iter().zip(next_s.as_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "seed {seed}: {diff:e}");
    }
}

#[test]
fn softmax_sharpens_as_temperature_falls() {
    let z = gap_safe_tokens(3, TAU, 1e-7);
    let hard = similarity_matrix(&z, &AttentionSpec::hardmax(SpdMatrix::identity(z.dim()), 1.0).unwrap()).unwrap();
    let mut last = f64::INFINITY;
    for tau in [1.0, 1e-1, 1e-2, 1e-3, 1e-4] {
        let spec = AttentionSpec::softmax(SpdMatrix::identity(z.dim()), 1.0, tau).unwrap();
        let err = similarity_matrix(&z, &spec).unwrap().max_abs_diff(&hard);
        assert!(err <= last + 1e-15);
        last = err;
    }
}
