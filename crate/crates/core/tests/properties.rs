use alphasens::classic::{classify_variable, moment, SensitivitySummary};
use alphasens::data::{rescale_target, standardize, Dataset, JacobianTensor, NormPair};
use alphasens::oracle::{operator_norm_search, DEFAULT_ITERS, DEFAULT_RESTARTS};
use alphasens::report::{diagnose, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL};
use alphasens::sensitivity::{alpha_curve, alpha_curves, alpha_from_pq, generalized_mean, sensitivity_pq, AlphaGrid};
use ndarray::{Array2, Array3};
use proptest::prelude::*;

const EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

fn scalar_jac(values: &[f64]) -> JacobianTensor {
    JacobianTensor::new(Array3::from_shape_vec((values.len(), 1, 1), values.to_vec()).unwrap()).unwrap()
}

/// Derivative magnitudes spanning several orders, with exact zeros.
fn derivative_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![
            1 => Just(0.0),
            6 => (-3.0f64..3.0, -4i32..4).prop_map(|(m, e)| m * 10f64.powi(e)),
        ],
        1..max_len,
    )
}

fn naive_mean(values: &[f64], alpha: f64) -> f64 {
    (values.iter().map(|v| v.abs().powf(alpha)).sum::<f64>() / values.len() as f64).powf(1.0 / alpha)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) || a == b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn curve_is_monotone_and_below_asymptote(d in derivative_vec(40)) {
        let grid = AlphaGrid::geometric(1.0, 64.0, 25, true).unwrap();
        let c = alpha_curve(&scalar_jac(&d), 0, 0, &grid).unwrap();
        let vals: Vec<f64> = c.values().collect();
        for w in vals.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12));
        }
        for v in &vals {
            prop_assert!(*v <= c.asymptote * (1.0 + 1e-12));
        }
        let max = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        prop_assert_eq!(c.asymptote, max);
        // sandwich at alpha = 64
        let n = d.len() as f64;
        let last = *vals.last().unwrap();
        prop_assert!(c.asymptote - last <= c.asymptote * (1.0 - n.powf(-1.0 / 64.0)) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn curve_is_homogeneous_and_permutation_invariant(d in derivative_vec(30), c in 1e-3f64..1e3, rot in 0usize..30) {
        let grid = AlphaGrid::default();
        let base = alpha_curve(&scalar_jac(&d), 0, 0, &grid).unwrap();
        let scaled: Vec<f64> = d.iter().map(|v| v * c).collect();
        let sc = alpha_curve(&scalar_jac(&scaled), 0, 0, &grid).unwrap();
        for (a, b) in base.values().zip(sc.values()) {
            prop_assert!(close(a * c, b, 1e-12));
        }
        let mut perm = d.clone();
        perm.rotate_left(rot % d.len());
        perm.reverse();
        let pc = alpha_curve(&scalar_jac(&perm), 0, 0, &grid).unwrap();
        for (a, b) in base.values().zip(pc.values()) {
            prop_assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn mean_matches_direct_power_sum(d in derivative_vec(30), alpha in 1.0f64..20.0) {
        let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        prop_assert!(close(generalized_mean(&mags, alpha).unwrap(), naive_mean(&mags, alpha), 1e-12));
    }

    #[test]
    fn flat_curve_iff_constant_magnitude(c in 0.01f64..10.0, n in 1usize..20, bump in prop::option::of(0usize..20)) {
        let mut d = vec![c; n];
        if let Some(b) = bump {
            if n > 1 {
                d[b % n] = -c * 1.5;
            }
        }
        let constant = d.iter().all(|v| v.abs() == c);
        let curve = alpha_curve(&scalar_jac(&d), 0, 0, &AlphaGrid::default()).unwrap();
        let flat = curve.values().all(|v| v == curve.first());
        prop_assert_eq!(flat, constant);
    }

    #[test]
    fn moment_duality(d in derivative_vec(30)) {
        let jac = scalar_jac(&d);
        for &alpha in AlphaGrid::default().alphas() {
            let m = moment(&jac, 0, 0, alpha).unwrap();
            let direct = d.iter().map(|v| v.abs().powf(alpha)).sum::<f64>() / d.len() as f64;
            let ms = alphasens::alpha_mean_sensitivity(&jac, 0, 0, alpha).unwrap();
            prop_assert!(close(m, ms.powf(alpha), 1e-12));
            prop_assert!(close(m, direct, 1e-12));
        }
    }

    #[test]
    fn power_mean_identity_for_scalar_outputs(d in derivative_vec(30)) {
        let jac = scalar_jac(&d);
        let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        for &p in &EXPONENTS {
            for &q in &EXPONENTS {
                if p <= q {
                    continue;
                }
                let norms = NormPair::new(p, q).unwrap();
                let alpha = alpha_from_pq(norms);
                let expected = (d.len() as f64).powf(1.0 / alpha) * naive_mean(&mags, alpha);
                prop_assert!(close(sensitivity_pq(&jac, 0, norms).unwrap(), expected, 1e-12));
            }
        }
    }

    #[test]
    fn sensitivity_is_homogeneous(
        vals in prop::collection::vec(-5.0f64..5.0, 6),
        c in 1e-3f64..1e3,
    ) {
        let jac = JacobianTensor::new(Array3::from_shape_vec((3, 2, 1), vals.clone()).unwrap()).unwrap();
        let scaled = JacobianTensor::new(Array3::from_shape_vec((3, 2, 1), vals.iter().map(|v| v * c).collect()).unwrap()).unwrap();
        for &p in &EXPONENTS {
            for &q in &EXPONENTS {
                let norms = NormPair::new(p, q).unwrap();
                let a = sensitivity_pq(&jac, 0, norms).unwrap();
                let b = sensitivity_pq(&scaled, 0, norms).unwrap();
                prop_assert!(close(a * c, b, 1e-12));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_agrees_with_closed_form(
        n in 1usize..=6,
        m in 1usize..=3,
        seed in any::<u64>(),
        pi in 0usize..5,
        qi in 0usize..5,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = Array3::from_shape_simple_fn((n, m, 1), || rng.gen_range(-3.0..3.0));
        let jac = JacobianTensor::new(values).unwrap();
        let norms = NormPair::new(EXPONENTS[pi], EXPONENTS[qi]).unwrap();
        let closed = sensitivity_pq(&jac, 0, norms).unwrap();
        let found = operator_norm_search(jac.feature_block(0).unwrap(), norms, DEFAULT_RESTARTS, DEFAULT_ITERS, seed).unwrap();
        prop_assert!(found.value <= closed * (1.0 + 1e-9) + 1e-300);
        prop_assert!(found.value >= closed * (1.0 - 1e-3));
        // maximizer of a p <= q instance sits at a vertex of the unit ball
        let (p, q) = (EXPONENTS[pi], EXPONENTS[qi]);
        if p <= q && p.is_finite() {
            let h = &found.argmax;
            let best = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let dist2: f64 = h.iter().map(|v| if v.abs() == best { (v.abs() - 1.0).powi(2) } else { v * v }).sum();
            // ties between equally sensitive samples are measure-zero here
            prop_assert!(dist2.sqrt() <= 1e-2, "h = {:?}", h);
        }
    }

    #[test]
    fn diagnose_is_scale_invariant(vals in prop::collection::vec(0.0f64..5.0, 4 * 20), c in 1e-4f64..1e4) {
        let base = Array2::from_shape_vec((20, 4), vals).unwrap();
        let grid = AlphaGrid::default();
        let a = alpha_curves(&JacobianTensor::from_scalar_output(base.clone()).unwrap(), 0, &grid).unwrap();
        let b = alpha_curves(&JacobianTensor::from_scalar_output(base * c).unwrap(), 0, &grid).unwrap();
        let da = diagnose(&a, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
        let db = diagnose(&b, DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL).unwrap();
        for (x, y) in da.iter().zip(&db) {
            prop_assert_eq!(&x.flags, &y.flags);
            prop_assert!(!(x.has(alphasens::report::CurveFlag::Irrelevant)
                && x.has(alphasens::report::CurveFlag::LocalizedHighSensitivity)));
        }
    }

    #[test]
    fn classification_is_scale_free(avg in -5.0f64..5.0, sd in 0.0f64..5.0, scale in 0.1f64..10.0, c in 1e-6f64..1e6) {
        let sq = (avg * avg + sd * sd).sqrt();
        let s = SensitivitySummary { variable: 0, name: None, s_avg: avg, s_sd: sd, s_sq: sq, label: None };
        let t = SensitivitySummary { s_avg: avg * c, s_sd: sd * c, s_sq: sq * c, ..s.clone() };
        prop_assert_eq!(classify_variable(&s, scale, 1e-2).unwrap(), classify_variable(&t, scale * c, 1e-2).unwrap());
    }

    #[test]
    fn standardize_round_trips(vals in prop::collection::vec(-100.0f64..100.0, 3 * 12)) {
        let x = Array2::from_shape_vec((12, 3), vals).unwrap();
        let ds = Dataset::with_default_names(x).unwrap();
        if let Ok((z, params)) = standardize(&ds) {
            for col in z.features().columns() {
                let mean = col.sum() / 12.0;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 11.0).sqrt();
                prop_assert!(mean.abs() < 1e-10);
                prop_assert!((sd - 1.0).abs() < 1e-10);
            }
            let back = params.inverse(&z).unwrap();
            for (a, b) in back.features().iter().zip(ds.features().iter()) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rescale_preserves_order(vals in prop::collection::vec(-1e3f64..1e3, 2..30)) {
        if let Ok((w, _, _)) = rescale_target(&vals) {
            for i in 0..vals.len() {
                for j in 0..vals.len() {
                    prop_assert_eq!(vals[i] < vals[j], w[i] < w[j]);
                }
                prop_assert!((0.0..=1.0).contains(&w[i]));
            }
        }
    }
}
