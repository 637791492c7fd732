use std::sync::Arc;

use gasflow::exact_solution::{GasSolution, InitialData, Perturbed, ReducedCoefficients};
use gasflow::fields::{identity_r, plane_shear, Profile};
use gasflow::geometry::{ChartMetric, DomainBox};
use gasflow::reduced_ode::{ParamSet, SystemKind};
use gasflow::verify::*;
use gasflow::Error;
use proptest::prelude::*;

const GAMMA: f64 = 1.4;
const MU: f64 = 0.2;
const L: f64 = 0.5;

fn algebraic_solution(mu: f64, l: f64, y0: Vec<f64>, scale: Option<f64>) -> GasSolution {
    let data = InitialData::algebraic(4.0, GAMMA, y0[0]).unwrap();
    let p = ParamSet { gamma: GAMMA, mu, l, k: data.special_k().unwrap(), ..Default::default() };
    let inner = ReducedCoefficients::new(SystemKind::TwoDSpecial, p, y0).unwrap();
    match scale {
        None => GasSolution::assemble(Arc::new(inner), data, GAMMA, -0.5, 6.0, 1e-12).unwrap(),
        Some(scale) => {
            GasSolution::assemble(Arc::new(Perturbed { inner, scale }), data, GAMMA, -0.5, 6.0, 1e-12).unwrap()
        }
    }
}

fn grid() -> ResidualGrid {
    ResidualGrid {
        times: vec![0.5, 1.0, 1.5, 2.0],
        lo: vec![-2.0, -2.0],
        hi: vec![2.0, 2.0],
        nodes_per_axis: 9,
        h_t: 0.1,
        h_x: 0.02,
    }
}

#[test]
fn assembled_solution_converges_at_second_order() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], None);
    let r = pde_residual(&sol, GAMMA, &Forcing::Planar { mu: MU, l: L }, &grid()).unwrap();
    let order = r.order.unwrap();
    assert!((1.8..=2.2).contains(&order), "order {order}");
    assert!(r.levels[1].total_max < r.levels[0].total_max);
}

#[test]
fn perturbed_control_does_not_converge() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], Some(1.01));
    let r = pde_residual(&sol, GAMMA, &Forcing::Planar { mu: MU, l: L }, &grid()).unwrap();
    assert!(r.order.is_none_or(|o| o < 1.0), "{:?}", r.order);
}

#[test]
fn wrong_forcing_sign_is_detected() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], None);
    let r = pde_residual(&sol, GAMMA, &Forcing::Planar { mu: MU, l: -L }, &grid()).unwrap();
    assert!(r.levels[1].momentum_max.iter().any(|v| *v > 1e-2));
}

#[test]
fn snapshot_matches_closed_moments() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], None);
    let s = functionals(&sol, GAMMA, 0.0, &QuadSpec::default(), &Extras::default()).unwrap();
    let m = sol.data.closed_moments().unwrap();
    assert!((s.get("M") - m.mass).abs() < 1e-8 * m.mass);
    assert!((s.get("G") - m.g).abs() < 1e-8 * m.g);
    assert!((s.get("Ep") - m.ep).abs() < 1e-8 * m.ep);
    // radial data carry no first moments
    assert!(s.get("N1").abs() < 1e-9 && s.get("N2").abs() < 1e-9);
    for (k, v) in &s.errors {
        assert!(v.is_finite() && *v >= 0.0, "{k}");
    }
}

#[test]
fn mass_is_conserved() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], None);
    let m0 = sol.data.closed_moments().unwrap().mass;
    for t in [1.0, 3.0] {
        let s = functionals(&sol, GAMMA, t, &QuadSpec::default(), &Extras::default()).unwrap();
        assert!((s.get("M") - m0).abs() < 1e-8 * m0, "t = {t}");
    }
}

#[test]
fn doubling_the_radius_changes_nothing_within_errors() {
    let data = InitialData::gaussian(2, GAMMA, 1.0, 1.0, 1.0, 1.0).unwrap();
    let p = ParamSet { gamma: GAMMA, k: data.special_k().unwrap(), ..Default::default() };
    let src = Arc::new(
        ReducedCoefficients::new(SystemKind::TwoDSpecial, p, vec![data.g1_ep().unwrap().0, 0.1, 0.2]).unwrap(),
    );
    let sol = GasSolution::assemble(src, data, GAMMA, 0.0, 2.0, 1e-12).unwrap();
    let a = functionals(&sol, GAMMA, 1.0, &QuadSpec { radius: Some(7.0), ..Default::default() }, &Extras::default())
        .unwrap();
    let b = functionals(&sol, GAMMA, 1.0, &QuadSpec { radius: Some(14.0), ..Default::default() }, &Extras::default())
        .unwrap();
    for name in ["M", "G", "Ep", "Ek", "F1"] {
        let tol = a.error(name) + b.error(name) + 1e-12;
        assert!((a.get(name) - b.get(name)).abs() <= tol, "{name}: {} vs {}", a.get(name), b.get(name));
    }
}

#[test]
fn short_radius_is_inconclusive() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], None);
    let r = functionals(&sol, GAMMA, 0.0, &QuadSpec { radius: Some(2.0), ..Default::default() }, &Extras::default());
    assert!(matches!(r, Err(Error::InconclusiveQuadrature { .. })));
}

#[test]
fn functional_identities_hold_on_the_assembled_solution() {
    let sol = algebraic_solution(MU, L, vec![1.0, 0.1, 0.3], None);
    let tab = functional_identities(
        &sol,
        GAMMA,
        &Forcing::Planar { mu: MU, l: L },
        &[0.5, 2.0],
        0.02,
        &QuadSpec::default(),
        &Extras::default(),
    )
    .unwrap();
    assert!(tab.max_residual < 1e-5, "{}", tab.max_residual);
    assert!(tab.energy_monotone);
    for name in ["G'=F1", "E'=-2mu Ek", "F2'=l F1-mu F2"] {
        assert!(tab.rows.iter().any(|r| r.name == name), "{name}");
    }
}

#[test]
fn separated_radial_state_checks() {
    let sol = Arc::new(algebraic_solution(0.0, 0.0, vec![1.0, 0.0, 0.3], None));
    let s2 = sol.clone();
    let a = move |t: f64| s2.flow(t).unwrap().coefficients[2];
    let field = identity_r(ChartMetric::euclidean(2)).unwrap();
    let ex = Extras { separated: Some(SeparatedForm { field: &field, a: &a, euler: true }), ..Default::default() };
    let tab =
        functional_identities(sol.as_ref(), GAMMA, &Forcing::None, &[1.0], 0.02, &QuadSpec::default(), &ex).unwrap();
    assert!(tab.max_residual < 1e-5, "{}", tab.max_residual);
    assert!(tab.worst("Ep'=-aQ") < 1e-6);
    // the literal rows are carried along but excluded from the maximum
    assert!(tab.rows.iter().any(|r| r.literal && r.residual > 1e-2));
}

#[test]
fn kinematic_shear_state_checks() {
    let field =
        plane_shear(ChartMetric::euclidean(2), 0.5, Profile::Sin { amplitude: 0.3, frequency: 1.0, phase: 0.2 })
            .unwrap();
    let data = InitialData::gaussian(2, GAMMA, 1.0, 1.0, 1.0, 1.0).unwrap();
    let sep = SeparatedSolution::new(field, data, 0.5).unwrap();
    let a = |t: f64| 0.5 / (1.0 + 0.5 * t);
    let ex = Extras { separated: Some(SeparatedForm { field: &sep.field, a: &a, euler: false }), ..Default::default() };
    let quad = QuadSpec { tol: 1e-9, ..Default::default() };
    let tab = functional_identities(&sep, GAMMA, &Forcing::None, &[0.5], 0.02, &quad, &ex).unwrap();
    assert!(tab.max_residual < 1e-5, "{}", tab.max_residual);
    assert!(tab.worst("Ek=a^2G") < 1e-8);
}

#[test]
fn separated_pullback_inverts_push_forward() {
    let field = plane_shear(ChartMetric::euclidean(2), -0.7, Profile::Tanh { amplitude: 0.4, scale: 1.3 }).unwrap();
    let data = InitialData::gaussian(2, GAMMA, 1.0, 1.0, 1.0, 1.0).unwrap();
    let mut sep = SeparatedSolution::new(field, data, 0.8).unwrap();
    let xi = [0.3, -1.2];
    let x = sep.push_forward(2.0, &xi).unwrap();
    let (back, int_d) = sep.pullback(2.0, &x).unwrap();
    assert!((back[0] - xi[0]).abs() < 1e-12 && (back[1] - xi[1]).abs() < 1e-12);
    assert!((int_d - sep.tau(2.0).unwrap()).abs() < 1e-12);
    sep.closed_form = false;
    let (ode, ode_d) = sep.pullback(2.0, &x).unwrap();
    assert!((ode[0] - xi[0]).abs() < 1e-9 && (ode_d - int_d).abs() < 1e-9);
}

#[test]
fn singularity_examples() {
    let base = SingularityInput { f0: 0.0, lambda_plus: 2.0, d_minus: 0.5, mass: 1.0, energy: 2.0, gamma: GAMMA };
    let threshold = 2.0 * (0.4f64 * 0.5 * 2.0).sqrt();
    let below = singularity_criterion(&SingularityInput { f0: 0.9 * threshold, ..base }).unwrap();
    assert!(!below.criterion_met && below.necessary_ok);
    let above = singularity_criterion(&SingularityInput { f0: 1.1 * threshold, ..base }).unwrap();
    assert!(above.criterion_met);
    let far = singularity_criterion(&SingularityInput { d_minus: 10.0, ..base }).unwrap();
    assert!(!far.necessary_ok);
    assert!(singularity_criterion(&SingularityInput { gamma: 1.0, ..base }).is_err());
}

#[test]
fn field_bounds_of_radius_vector() {
    let f = identity_r(ChartMetric::euclidean(2)).unwrap();
    let dom = DomainBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let (lp, dm) = field_bounds(&f, &dom, 5).unwrap();
    assert!((lp - 2f64.sqrt()).abs() < 1e-14);
    assert_eq!(dm, 0.0);
}

#[test]
fn lemma_constant_and_negative_input() {
    // n = 2, γ = 2: s = 6, k = 2, C = 2^{1/3} + 2^{-2/3}
    let c = lemma51_constant(2.0, 2, 1.0);
    assert!((c - (2f64.cbrt() + 2f64.powf(-2.0 / 3.0))).abs() < 1e-14);
    assert!(lemma51_check(&|x: &[f64]| x[0], 1.4, 2, 2.0, 1e-8, 1.0).is_err());
}

#[test]
fn slow_decay_is_inconclusive() {
    let f = |x: &[f64]| 1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powi(2);
    match lemma51_check(&f, 1.4, 2, 3.0, 1e-8, 1.0) {
        Err(Error::InconclusiveQuadrature { suggested_radius, .. }) => assert_eq!(suggested_radius, 6.0),
        other => panic!("{other:?}"),
    }
}

fn mixture(n: usize, comps: Vec<(f64, f64, Vec<f64>)>) -> impl Fn(&[f64]) -> f64 + Sync {
    move |x: &[f64]| {
        comps
            .iter()
            .map(|(c, w, m)| {
                let d2: f64 = (0..n).map(|i| (x[i] - m[i]).powi(2)).sum();
                c * (-d2 / (w * w)).exp()
            })
            .sum()
    }
}

fn components(n: usize) -> impl Strategy<Value = Vec<(f64, f64, Vec<f64>)>> {
    prop::collection::vec((0.01f64..5.0, 0.4f64..1.2, prop::collection::vec(-1.0f64..1.0, n)), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lemma51_margin_nonnegative_2d(comps in components(2), gi in 0usize..3) {
        let gamma = [1.2, 1.4, 5.0 / 3.0][gi];
        let f = mixture(2, comps);
        let r = lemma51_check(&f, gamma, 2, 8.0, 1e-9, 1.0).unwrap();
        prop_assert!(r.margin >= -1e-10, "{r:?}");
    }

    #[test]
    fn lemma51_margin_nonnegative_3d(comps in components(3), gi in 0usize..3) {
        let gamma = [1.2, 1.4, 5.0 / 3.0][gi];
        let f = mixture(3, comps);
        let r = lemma51_check(&f, gamma, 3, 7.0, 1e-7, 1.0).unwrap();
        prop_assert!(r.margin >= -1e-10, "{r:?}");
    }

    #[test]
    fn lemma51_is_scale_invariant(c in 0.01f64..100.0) {
        let f1 = mixture(2, vec![(1.0, 0.8, vec![0.2, -0.1])]);
        let fc = mixture(2, vec![(c, 0.8, vec![0.2, -0.1])]);
        let a = lemma51_check(&f1, 1.4, 2, 8.0, 1e-10, 1.0).unwrap();
        let b = lemma51_check(&fc, 1.4, 2, 8.0, 1e-10, 1.0).unwrap();
        prop_assert!((b.rhs / b.lhs - a.rhs / a.lhs).abs() < 1e-6);
    }
}
