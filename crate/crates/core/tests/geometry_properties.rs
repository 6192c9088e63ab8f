use hardmax::sample::{random_spd, rng};
use hardmax::*;
use proptest::prelude::*;

fn tokens(max_n: usize, d: usize) -> impl Strategy<Value = TokenConfiguration> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), 1..=max_n)
        .prop_map(|rows| TokenConfiguration::new(rows).unwrap())
}

fn sized_tokens() -> impl Strategy<Value = TokenConfiguration> {
    (1usize..=4).prop_flat_map(|d| tokens(12, d))
}

proptest! {
    #[test]
    fn similarity_rows_sum_to_one(z in sized_tokens(), tau in 1e-4f64..10.0, seed in 0u64..1000) {
        let a = random_spd(&mut rng(seed), z.dim());
        for spec in [
            AttentionSpec::hardmax(a.clone(), 1.0).unwrap(),
            AttentionSpec::softmax(a.clone(), 1.0, tau).unwrap(),
        ] {
            let sim = similarity_matrix(&z, &spec).unwrap();
            for i in 0..z.len() {
                let row = sim.row(i);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn permuting_tokens_conjugates_similarity(z in sized_tokens(), perm_seed in 0u64..1000, tau in 1e-2f64..2.0) {
        use rand::seq::SliceRandom;
        let n = z.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(perm_seed));
        let zp = z.permuted(&perm);
        for spec in [
            AttentionSpec::hardmax(SpdMatrix::identity(z.dim()), 1.0).unwrap(),
            AttentionSpec::softmax(SpdMatrix::identity(z.dim()), 1.0, tau).unwrap(),
        ] {
            let s = similarity_matrix(&z, &spec).unwrap();
            let sp = similarity_matrix(&zp, &spec).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((sp.get(i, j) - s.get(perm[i], perm[j])).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn hardmax_step_is_a_convex_combination(z in sized_tokens(), alpha in 0.01f64..3.0) {
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(z.dim()), alpha).unwrap();
        let out = step(&z, &spec).unwrap();
        let sets = out.attention_sets.unwrap();
        for (i, set) in sets.iter().enumerate() {
            prop_assert!(!set.members.is_empty());
            let w = alpha / ((1.0 + alpha) * set.members.len() as f64);
            for k in 0..z.dim() {
                let combo = z.token(i)[k] / (1.0 + alpha)
                    + set.members.iter().map(|&j| w * z.token(j)[k]).sum::<f64>();
                prop_assert!((combo - out.next.token(i)[k]).abs() <= 1e-12 * (1.0 + combo.abs()));
            }
        }
    }

    #[test]
    fn zero_token_attends_to_everyone(z in tokens(8, 2)) {
        let mut rows = z.to_rows();
        rows.push(vec![0.0, 0.0]);
        let z = TokenConfiguration::new(rows).unwrap();
        let spec = AttentionSpec::hardmax(SpdMatrix::identity(2), 1.0).unwrap();
        let set = attention_set(&z, z.len() - 1, &spec).unwrap();
        prop_assert_eq!(set.members, (0..z.len()).collect::<Vec<_>>());
    }
}

#[test]
fn random_spd_matrices_are_definite() {
    let mut r = rng(11);
    for trial in 0..100 {
        let d = 1 + trial % 4;
        let a = random_spd(&mut r, d);
        let x: Vec<f64> = (0..d).map(|k| ((trial * 7 + k * 3) % 11) as f64 - 5.0).collect();
        if x.iter().all(|&v| v == 0.0) {
            continue;
        }
        let p = Point::new(x).unwrap();
        assert!(a_inner(&a, &p, &p).unwrap() > 0.0, "trial {trial}");
        // the factor reproduces A
        let b = a.factor_matrix();
        let back = b.transpose() * &b;
        for i in 0..d {
            for j in 0..d {
                assert!((back[(i, j)] - a.get(i, j)).abs() <= 1e-12 * (1.0 + a.get(i, j).abs()));
            }
        }
    }
}
