use gasflow::reduced_ode::analysis::Stability;
use gasflow::reduced_ode::*;
use proptest::prelude::*;

fn total_energy(kind: SystemKind, y: &[f64], p: &ParamSet) -> f64 {
    energy(kind, y, p).unwrap().total
}

#[test]
fn frictionless_special_system_conserves_energy() {
    let p = ParamSet { gamma: 1.4, l: 0.5, k: 0.8, ..Default::default() };
    let y0 = [1.0, 0.2, 0.3];
    let sol = solve_dense(SystemKind::TwoDSpecial, &y0, &p, 20.0, 1e-12).unwrap();
    let e0 = total_energy(SystemKind::TwoDSpecial, &y0, &p);
    for i in 1..=100 {
        let y = sol.eval(0.2 * i as f64).unwrap();
        let e = total_energy(SystemKind::TwoDSpecial, &y, &p);
        assert!((e - e0).abs() < 1e-7 * e0, "t = {}", 0.2 * i as f64);
    }
}

#[test]
fn friction_dissipates_at_the_kinetic_rate() {
    let p = ParamSet { gamma: 1.4, l: 0.5, mu: 0.3, k: 0.8, ..Default::default() };
    let kind = SystemKind::TwoDSpecial;
    let sol = solve_dense(kind, &[1.0, 0.2, 0.3], &p, 10.0, 1e-12).unwrap();
    let h = 1e-3;
    for i in 1..20 {
        let t = 0.5 * i as f64;
        let e = |s: f64| total_energy(kind, &sol.eval(s).unwrap(), &p);
        let de = (e(t + h) - e(t - h)) / (2.0 * h);
        let ek = energy(kind, &sol.eval(t).unwrap(), &p).unwrap().kinetic;
        assert!((de + 2.0 * p.mu * ek).abs() < 1e-5 * e(t).max(1e-3), "t = {t}");
    }
}

#[test]
fn closed_form_matches_integration() {
    let p = ParamSet { gamma: 1.4, l: 0.4, k: 0.8, ..Default::default() };
    let y0 = [1.0, 0.3, 0.5];
    let cf = ClosedFormMu0::new(&y0, &p).unwrap();
    let sol = solve_dense(SystemKind::TwoDSpecial, &y0, &p, 0.4, 1e-12).unwrap();
    for i in 1..=8 {
        let t = 0.05 * i as f64;
        let y = sol.eval(t).unwrap();
        assert!((cf.beta(y[0]) - y[1]).abs() < 1e-8);
        assert!((cf.alpha(y[0]).unwrap() - y[2]).abs() < 1e-7);
        assert!((cf.time(y[0]).unwrap() - t).abs() < 1e-7);
    }
    assert!(ClosedFormMu0::new(&y0, &ParamSet { mu: 0.1, ..p }).is_err());
}

#[test]
fn friction_system_equilibria() {
    let p = ParamSet { mu: 0.6, k_s: 1.5, ..Default::default() };
    let cd = equilibria(SystemKind::ConstDiv, &p).unwrap();
    assert_eq!(cd.len(), 1);
    assert_eq!(cd[0].state, vec![0.0, 0.0]);
    assert_eq!(cd[0].stability, Stability::Stable);

    let dry = equilibria(SystemKind::DryFriction, &p).unwrap();
    assert_eq!(dry.len(), 2);
    let origin = dry.iter().find(|e| e.state[0] == 0.0).unwrap();
    assert_eq!(origin.stability, Stability::Stable);
    let other = dry.iter().find(|e| e.state[0] != 0.0).unwrap();
    assert!((other.state[0] + p.k_s * p.mu / 2.0).abs() < 1e-14);
    assert_eq!(other.stability, Stability::Unstable);

    let aero = equilibria(SystemKind::AeroFriction, &p).unwrap();
    assert_eq!(aero.len(), 1);
    assert_eq!(aero[0].stability, Stability::Stable);
}

#[test]
fn const_div_is_reversible() {
    let p = ParamSet::default();
    for seed in [[0.5, 1.0], [-0.3, 0.4], [1.2, 2.0]] {
        assert!(reflection_defect(SystemKind::ConstDiv, &p, &seed, 5.0, 1e-12).unwrap() < 1e-6);
    }
    let dry = ParamSet { mu: 0.5, ..p };
    assert!(reflection_defect(SystemKind::DryFriction, &dry, &[0.5, 1.0], 5.0, 1e-12).unwrap() > 1e-3);
}

#[test]
fn zero_seed_stays_put() {
    let tr = integrate(SystemKind::ConstDiv, &[0.0, 0.0], &ParamSet::default(), 5.0, 1e-10, None).unwrap();
    assert!(tr.states.iter().all(|s| s == &vec![0.0, 0.0]));
    assert!(tr.events.is_empty());
}

#[test]
fn wrong_state_length_is_rejected() {
    assert!(solve_dense(SystemKind::ThreeD, &[0.1, 0.2], &ParamSet::default(), 1.0, 1e-8).is_err());
    assert!(SystemKind::parse("4d").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_constant_without_friction(g1 in 0.3f64..2.0, beta in -0.5f64..0.5, alpha in -0.5f64..0.5, l in -1.0f64..1.0) {
        let p = ParamSet { gamma: 1.4, l, k: 1.0, ..Default::default() };
        let y0 = [g1, beta, alpha];
        let sol = solve_dense(SystemKind::TwoDSpecial, &y0, &p, 5.0, 1e-12).unwrap();
        let e0 = total_energy(SystemKind::TwoDSpecial, &y0, &p);
        let e1 = total_energy(SystemKind::TwoDSpecial, sol.final_state(), &p);
        prop_assert!((e1 - e0).abs() < 1e-7 * e0);
    }

    #[test]
    fn moments_stay_positive(a in -1.0f64..1.0, gt in 0.1f64..3.0, mu in 0.0f64..1.0) {
        let p = ParamSet { mu, ..Default::default() };
        let tr = integrate(SystemKind::AeroFriction, &[a, gt], &p, 10.0, 1e-10, None).unwrap();
        prop_assert!(tr.states.iter().all(|s| s[1] > 0.0));
    }
}
