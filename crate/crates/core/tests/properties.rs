mod common;

use common::{brute_force_evolve, random_simplex, random_tensor};
use cubic_core::{
    contraction_identity_residual, evolve, fundamental_residual, validate_tensor, CubicTensor,
    SimplexVector, TransitionFamily,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn case(seed: u64, n: usize) -> (CubicTensor, SimplexVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_tensor(n, &mut rng), random_simplex(n, &mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evolve_stays_on_the_simplex(seed in any::<u64>(), n in 2usize..=4) {
        let (t, x) = case(seed, n);
        let y = evolve(&t, &x).unwrap();
        prop_assert!(y.probs().iter().all(|&v| v >= 0.0));
        prop_assert!((y.mass() - 1.0).abs() < 1e-12);
        let oracle = brute_force_evolve(&t, x.probs());
        for (a, b) in y.probs().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn relabelling_states_commutes_with_evolve(seed in any::<u64>(), n in 2usize..=4, shift in 1usize..4) {
        let (t, x) = case(seed, n);
        let sigma = |i: usize| (i + shift) % n;
        let relabelled = CubicTensor::from_fn(n, |i, j, k, l| {
            t.get(sigma(i), sigma(j), sigma(k), sigma(l))
        }).unwrap();
        let xr = SimplexVector::new((0..n).map(|i| x[sigma(i)]).collect()).unwrap();
        let y = evolve(&t, &x).unwrap();
        let yr = evolve(&relabelled, &xr).unwrap();
        for i in 0..n {
            prop_assert!((yr[i] - y[sigma(i)]).abs() < 1e-14);
        }
    }

    #[test]
    fn parent_order_is_irrelevant(seed in any::<u64>(), n in 2usize..=4) {
        let (t, _) = case(seed, n);
        for ((i, j, k), row) in t.rows() {
            prop_assert_eq!(row, t.row(k, i, j));
            prop_assert_eq!(row, t.row(j, k, i));
        }
    }

    #[test]
    fn generated_families_satisfy_the_fundamental_equation(seed in any::<u64>()) {
        let (t, x) = case(seed, 3);
        let fam = TransitionFamily::new(t, x).unwrap();
        for s in 0..3 {
            for tt in s + 2..=s + 5 {
                for tau in s + 1..tt {
                    prop_assert!(fundamental_residual(&fam, s, tau, tt).unwrap() <= 1e-10);
                }
                prop_assert!(contraction_identity_residual(&fam, s, tt).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn composed_steps_are_valid_tensors(seed in any::<u64>(), n in 2usize..=4, gap in 2i64..6) {
        let (t, x) = case(seed, n);
        let fam = TransitionFamily::new(t, x).unwrap();
        let p = fam.compose_step(1, 1 + gap).unwrap();
        prop_assert!(validate_tensor(&p, 1e-12).is_valid());
    }
}
