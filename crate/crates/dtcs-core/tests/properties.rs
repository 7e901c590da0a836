//! Property tests for the numeric kernels: simplex behavior of the
//! tempered softmax, divergence positivity, weight-update geometry, and the
//! sign-agreement mask.

use dtcs_core::*;
use proptest::prelude::*;

fn logits_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, 2..8)
}

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1.0f64, len).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    })
}

proptest! {
    #[test]
    fn tempered_softmax_lands_on_simplex(z in logits_vec(), tau in 0.1..10.0f64) {
        let p = tempered_softmax(&z, tau).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn tempered_softmax_shift_invariant(z in logits_vec(), tau in 0.1..10.0f64, c in -20.0..20.0f64) {
        let p = tempered_softmax(&z, tau).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = tempered_softmax(&shifted, tau).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_temperature_flattens(z in logits_vec()) {
        // entropy is nondecreasing in the temperature
        let entropy = |p: &[f64]| -> f64 {
            -p.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum::<f64>()
        };
        let p1 = tempered_softmax(&z, 1.0).unwrap();
        let p2 = tempered_softmax(&z, 2.0).unwrap();
        let p5 = tempered_softmax(&z, 5.0).unwrap();
        prop_assert!(entropy(&p2) >= entropy(&p1) - 1e-12);
        prop_assert!(entropy(&p5) >= entropy(&p2) - 1e-12);
    }

    #[test]
    fn divergences_are_nonnegative(t in simplex(5), p in simplex(5)) {
        let kl = kl_divergence(&t, &p).unwrap();
        prop_assert!(kl >= -1e-15);
        let self_kl = kl_divergence(&t, &t).unwrap();
        prop_assert!(self_kl.abs() < 1e-9);
        for (label, _) in t.iter().enumerate() {
            prop_assert!(cross_entropy(&p, label).unwrap() >= 0.0);
        }
    }

    #[test]
    fn soft_target_construction_preserves_simplex(z in logits_vec(), tau in 0.1..10.0f64) {
        let st = SoftTarget::from_logits(&z, tau).unwrap();
        let sum: f64 = st.probabilities.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert_eq!(st.tau, tau);
    }

    #[test]
    fn weight_update_stays_on_simplex(
        losses in prop::collection::vec(prop::collection::vec(0.01..5.0f64, 4), 1..40),
        m in 0.0..=1.0f64,
    ) {
        let mut w = DomainWeights::uniform(4, m);
        for l in &losses {
            dcb_update(&mut w, l).unwrap();
            let sum: f64 = w.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(w.weights.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn sign_mask_components_are_sums_or_zero(
        g in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 6), 2..5),
    ) {
        let combined = combine_sign_agreement(&g).unwrap();
        for (k, &c) in combined.iter().enumerate() {
            let sum: f64 = g.iter().map(|gi| gi[k]).sum();
            let pos = g.iter().all(|gi| gi[k] > 0.0);
            let neg = g.iter().all(|gi| gi[k] < 0.0);
            if pos || neg {
                prop_assert_eq!(c, sum);
            } else {
                prop_assert_eq!(c, 0.0);
            }
        }
        // re-masking the combined gradient keeps its support
        let m = g.len();
        let twice = combine_sign_agreement(&vec![combined.clone(); m]).unwrap();
        for (a, b) in combined.iter().zip(&twice) {
            prop_assert_eq!(*a == 0.0, *b == 0.0);
        }
    }

    #[test]
    fn stability_is_nonnegative_and_zero_on_equal(perfs in prop::collection::vec(0.0..100.0f64, 2..8)) {
        for variant in [GsVariant::RootSumSquares, GsVariant::SampleStd] {
            prop_assert!(gs(&perfs, variant).unwrap() >= 0.0);
            let equal = vec![perfs[0]; perfs.len()];
            prop_assert!(gs(&equal, variant).unwrap() < 1e-9);
        }
    }

    #[test]
    fn mmd_is_symmetric_and_zero_on_identical(
        xs in prop::collection::vec(-3.0..3.0f64, 8),
        ys in prop::collection::vec(-3.0..3.0f64, 6),
    ) {
        let p = Mat::from_vec(4, 2, xs).unwrap();
        let q = Mat::from_vec(3, 2, ys).unwrap();
        let gamma = median_heuristic_gamma(&p, &q).unwrap();
        let a = mmd_squared(&p, &q, gamma).unwrap();
        let b = mmd_squared(&q, &p, gamma).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(mmd_squared(&p, &p, gamma).unwrap() < 1e-12);
    }

    #[test]
    fn composite_invariant_holds(
        z in prop::collection::vec(-10.0..10.0f64, 6),
        t in prop::collection::vec(-10.0..10.0f64, 6),
        alpha in 0.0..=1.0f64,
        tau in 0.5..5.0f64,
    ) {
        // composite = α·ce + (1−α)·τ²·kl to within 1e-12, on a live graph
        let mut tape = Tape::new();
        let logits = tape.leaf(Mat::from_vec(2, 3, z).unwrap(), false);
        let target = Mat::from_vec(2, 3, t).unwrap();
        let (_, _, breakdown) = domain_loss(
            &mut tape,
            logits,
            &[0, 2],
            Some(&target),
            alpha,
            tau,
            KlOrder::TeacherFirst,
        ).unwrap();
        prop_assert!(breakdown.invariant_gap() < 1e-12);
    }
}
