use gasflow::fields::*;
use gasflow::geometry::{divergence, ChartMetric};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sin_profile(amplitude: f64, frequency: f64, phase: f64) -> Profile {
    Profile::Sin { amplitude, frequency, phase }
}

#[test]
fn divergence_roots_are_the_integers() {
    assert_eq!(divergence_roots(2).unwrap(), vec![1.0, 2.0]);
    assert_eq!(divergence_roots(3).unwrap(), vec![1.0, 2.0, 3.0]);
    assert!(divergence_roots(1).is_err());
}

#[test]
fn radius_vector_has_binomial_jm() {
    for n in [2usize, 3] {
        let chart = ChartMetric::euclidean(n);
        let f = identity_r(chart.clone()).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 0.3 * i as f64 - 0.2).collect();
        let r = jm(&chart, &f, &x, n).unwrap();
        assert_eq!(r.divergence, n as f64);
        // J_k = C(n, k) for the identity gradient
        let expect: Vec<f64> = if n == 2 { vec![1.0, 2.0, 1.0] } else { vec![1.0, 3.0, 3.0, 1.0] };
        for (a, b) in r.all.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        for v in r.identity_residuals.values() {
            assert!(v.abs() < 1e-12);
        }
        assert!(a2_residual(&chart, &f, &x).unwrap().iter().all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn shear_family_identities_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let chart = ChartMetric::euclidean(2);
    for _ in 0..20 {
        let phi = sin_profile(rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0), rng.gen_range(0.0..6.0));
        let k = rng.gen_range(-2.0..2.0);
        let f = plane_shear(chart.clone(), k, phi).unwrap();
        for _ in 0..100 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let r = jm(&chart, &f, &x, 2).unwrap();
            assert!((r.divergence - 1.0).abs() < 1e-12);
            for v in r.identity_residuals.values() {
                assert!(v.abs() < 1e-8, "{:?}", r);
            }
            assert!(a2_residual(&chart, &f, &x).unwrap().iter().all(|v| v.abs() < 1e-9));
        }
    }
}

#[test]
fn sphere_strip_satisfies_a2() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for c in [2.0f64, 4.0] {
        for branch in [Branch::Plus, Branch::Minus] {
            let f = sphere_field(c, sin_profile(0.4, 1.0, 0.3), branch, 1.0).unwrap();
            let s_min = 1.0 / c.sqrt() + 0.02;
            let th_lo = s_min.asin();
            for _ in 0..200 {
                let th = rng.gen_range(th_lo..std::f64::consts::PI - th_lo);
                let x = [rng.gen_range(0.0..std::f64::consts::TAU), th];
                let r = a2_residual(&f.chart, &f, &x).unwrap();
                assert!(r.iter().all(|v| v.abs() < 1e-6), "C={c} {branch:?} at {x:?}: {r:?}");
            }
        }
    }
}

#[test]
fn sphere_strip_rejects_points_outside() {
    let f = sphere_field(2.0, Profile::zero(), Branch::Plus, 1.0).unwrap();
    assert!(f.eval(&[0.0, 0.1]).is_err());
    assert!(sphere_field(1.0, Profile::zero(), Branch::Plus, 1.0).is_err());
}

#[test]
fn descriptor_builds_shear() {
    let d: FieldDescriptor = serde_json::from_str(
        r#"{"family":"plane-shear","parameters":{"k":0.5,"phi":{"kind":"sin","amplitude":0.3,"frequency":1,"phase":0}}}"#,
    )
    .unwrap();
    let f = d.build().unwrap();
    assert!((divergence(&f.chart, &f, &[0.2, 0.7]).unwrap() - 1.0).abs() < 1e-12);
}

fn principal_sums(m: &DMatrix<f64>) -> (f64, f64, f64) {
    let tr = m.trace();
    let tr2 = (m * m).trace();
    (tr, (tr * tr - tr2) / 2.0, m.determinant())
}

proptest! {
    #[test]
    fn jm_matches_trace_formulas(v in prop::collection::vec(-3.0f64..3.0, 9)) {
        let m = DMatrix::from_row_slice(3, 3, &v);
        let (e1, e2, e3) = principal_sums(&m);
        prop_assert!((jm_value(&m, 1) - e1).abs() < 1e-12);
        prop_assert!((jm_value(&m, 2) - e2).abs() < 1e-10);
        prop_assert!((jm_value(&m, 3) - e3).abs() < 1e-10);
    }

    #[test]
    fn shear_divergence_is_one(k in -3.0f64..3.0, amp in -1.5f64..1.5, fr in 0.1f64..3.0, x1 in -4.0f64..4.0, x2 in -4.0f64..4.0) {
        let chart = ChartMetric::euclidean(2);
        let f = plane_shear(chart.clone(), k, sin_profile(amp, fr, 0.0)).unwrap();
        prop_assert!((divergence(&chart, &f, &[x1, x2]).unwrap() - 1.0).abs() < 1e-12);
    }
}
