use proptest::prelude::*;
use toeplitz_lab::interval_maps::{compose_step, DyadicPermutation};
use toeplitz_lab::majorize::{default_tolerance, horn_construct, majorizes, sample_hull, step_majorizes};
use toeplitz_lab::rearrange::rearrange_step;
use toeplitz_lab::spectra::{eigenvalues, DEFAULT_EIGEN_TOLERANCE};
use toeplitz_lab::StepFunction;

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn values_and_perms() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, Vec<usize>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            permutation(n),
            permutation(n),
        )
    })
}

proptest! {
    #[test]
    fn composition_is_a_homomorphism((v, a, b) in values_and_perms()) {
        let g = StepFunction::new(v).unwrap();
        let p = DyadicPermutation::new(a).unwrap();
        let q = DyadicPermutation::new(b).unwrap();
        let lhs = compose_step(&compose_step(&g, &p).unwrap(), &q).unwrap();
        let rhs = compose_step(&g, &p.compose(&q).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn composition_preserves_rearrangement((v, a, _b) in values_and_perms()) {
        let g = StepFunction::new(v).unwrap();
        let p = DyadicPermutation::new(a).unwrap();
        prop_assert_eq!(rearrange_step(&compose_step(&g, &p).unwrap()), rearrange_step(&g));
    }

    #[test]
    fn permutation_text_round_trips((_v, a, _b) in values_and_perms()) {
        let p = DyadicPermutation::new(a).unwrap();
        prop_assert_eq!(DyadicPermutation::parse(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn hull_points_are_majorized(
        lambda in prop::collection::vec(-5.0f64..5.0, 1..10),
        seed in any::<u64>(),
    ) {
        let tol = default_tolerance(&lambda);
        for y in sample_hull(&lambda, 5, seed) {
            prop_assert!(majorizes(&lambda, &y, tol).unwrap().holds);
            let f = StepFunction::new(lambda.clone()).unwrap();
            let g = StepFunction::new(y).unwrap();
            prop_assert!(step_majorizes(&f, &g, tol).unwrap().holds);
        }
    }

    #[test]
    fn refinement_keeps_mean_and_norm(v in prop::collection::vec(-3.0f64..3.0, 1..8), r in 1usize..6) {
        let g = StepFunction::new(v).unwrap();
        let h = g.refine(g.pieces() * r).unwrap();
        prop_assert!((g.mean() - h.mean()).abs() < 1e-12);
        prop_assert!((g.l2_norm_sq() - h.l2_norm_sq()).abs() < 1e-12);
        prop_assert!(step_majorizes(&g, &h, 1e-12).unwrap().holds);
    }

    #[test]
    fn horn_realizes_hull_diagonals(
        lambda in prop::collection::vec(-4.0f64..4.0, 1..7),
        seed in any::<u64>(),
    ) {
        let d = sample_hull(&lambda, 1, seed).remove(0);
        let a = horn_construct(&lambda, &d, 1e-9).unwrap();
        for (i, di) in d.iter().enumerate() {
            prop_assert!((a[(i, i)].re - di).abs() < 1e-9);
        }
        let s = eigenvalues(&a, DEFAULT_EIGEN_TOLERANCE).unwrap();
        let mut want = lambda.clone();
        want.sort_by(|x, y| y.total_cmp(x));
        for (g, w) in s.values().iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9);
        }
    }
}
