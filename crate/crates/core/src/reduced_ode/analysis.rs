//! Closed forms, equilibria, late-time fits and phase portraits of the
//! reduced systems.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::integrator::{self, DenseSolution, Event, Reversed};
use super::{energy, options, ParamSet, ReducedSystem, SystemKind, Trajectory};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_1d, QuadTolerance};

/// Quadrature integrals of the 2D special system with μ = 0, with G₁ as
/// the independent variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormMu0 {
    pub c1: f64,
    pub c2: f64,
    pub e0: f64,
    pub l: f64,
    pub gamma: f64,
    pub g1_0: f64,
    alpha0: f64,
    beta0: f64,
    sign: f64,
}

impl ClosedFormMu0 {
    pub fn new(state0: &[f64], params: &ParamSet) -> Result<Self> {
        params.validate()?;
        if params.mu != 0.0 {
            return Err(Error::param("mu", "the closed form needs mu = 0"));
        }
        let e0 = energy(SystemKind::TwoDSpecial, state0, params)?.total;
        let (g1_0, beta0, alpha0) = (state0[0], state0[1], state0[2]);
        let (l, gamma) = (params.l, params.gamma);
        let c1 = (2.0 * beta0 - l) / (2.0 * g1_0);
        let c2 = (alpha0 * alpha0 + c1 * c1 * g1_0 * g1_0 - (e0 - l * c1) * g1_0 + l * l / 4.0) / g1_0.powf(gamma);
        let sign = if alpha0 > 0.0 {
            1.0
        } else if alpha0 < 0.0 {
            -1.0
        } else {
            // starts at a turning point; the pressure pushes α upwards
            let pull = beta0 * beta0 - l * beta0 + params.k1() * g1_0.powf(gamma);
            if pull >= 0.0 {
                1.0
            } else {
                -1.0
            }
        };
        Ok(Self { c1, c2, e0, l, gamma, g1_0, alpha0, beta0, sign })
    }

    pub fn radicand(&self, g1: f64) -> f64 {
        self.c2 * g1.powf(self.gamma) - self.c1 * self.c1 * g1 * g1 + (self.e0 - self.l * self.c1) * g1
            - self.l * self.l / 4.0
    }

    pub fn alpha(&self, g1: f64) -> Result<f64> {
        if g1 == self.g1_0 {
            return Ok(self.alpha0);
        }
        let r = self.radicand(g1);
        if r < 0.0 {
            return Err(Error::TurningPoint { g1 });
        }
        Ok(self.sign * r.sqrt())
    }

    pub fn beta(&self, g1: f64) -> f64 {
        if g1 == self.g1_0 {
            return self.beta0;
        }
        self.c1 * g1 + self.l / 2.0
    }

    /// Time at which G₁ reaches `g1` on the initial branch.
    pub fn time(&self, g1: f64) -> Result<f64> {
        if !(g1 > 0.0) {
            return Err(Error::param("g1", "must be positive"));
        }
        if g1 == self.g1_0 {
            return Ok(0.0);
        }
        let heading_down = self.sign > 0.0;
        if heading_down != (g1 < self.g1_0) {
            return Err(Error::TurningPoint { g1 });
        }
        for i in 1..=32 {
            let g = self.g1_0 + (g1 - self.g1_0) * i as f64 / 32.0;
            if self.radicand(g) < 0.0 {
                return Err(Error::TurningPoint { g1: g });
            }
        }
        let tol = QuadTolerance::new(1e-14, 1e-12);
        let r = integrate_1d(
            |g| {
                let a = self.sign * self.radicand(g).max(0.0).sqrt();
                vec![-1.0 / (2.0 * g * a)]
            },
            self.g1_0,
            g1,
            1,
            &tol,
            false,
        );
        crate::error::ensure_finite(&r.values, "closed-form time integral")?;
        Ok(r.values[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    Center,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub state: Vec<f64>,
    /// Linearization spectrum; absent when the Jacobian is undefined there.
    pub eigenvalues: Option<Vec<Eigenvalue>>,
    pub stability: Stability,
    /// True when the tag came from integrating nearby seeds.
    pub probed: bool,
}

fn jacobian(kind: SystemKind, p: &ParamSet, y: &[f64]) -> DMatrix<f64> {
    let g = p.gamma;
    match kind {
        SystemKind::TwoDSpecial => {
            let (g1, beta, alpha) = (y[0], y[1], y[2]);
            let dp = if g1 > 0.0 { p.k1() * g * g1.powf(g - 1.0) } else { 0.0 };
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    -2.0 * alpha,
                    0.0,
                    -2.0 * g1,
                    0.0,
                    -2.0 * alpha - p.mu,
                    p.l - 2.0 * beta,
                    dp,
                    2.0 * beta - p.l,
                    -2.0 * alpha - p.mu,
                ],
            )
        }
        _ => {
            let (a, gt) = (y[0], y[1]);
            let q = ((g - 1.0) * p.d + 2.0) / 2.0;
            let dp = if gt > 0.0 { p.k * q * gt.powf(q - 1.0) } else { 0.0 };
            let mut daa = -2.0 * a;
            let mut dag = dp;
            match kind {
                SystemKind::DryFriction => daa -= 0.5 * p.mu * p.k_s,
                SystemKind::AeroFriction => {
                    let c = 0.5 * p.mu1 * p.k_s;
                    daa -= c * 2.0 * a.abs() / gt.sqrt();
                    dag += 0.5 * c * a * a.abs() * gt.powf(-1.5);
                }
                _ => {}
            }
            DMatrix::from_row_slice(2, 2, &[daa, dag, -2.0 * gt, -2.0 * a])
        }
    }
}

fn equilibrium_states(kind: SystemKind, p: &ParamSet) -> Vec<Vec<f64>> {
    match kind {
        SystemKind::TwoDSpecial => {
            let mut v = vec![vec![0.0, 0.0, 0.0]];
            if p.l != 0.0 || p.mu != 0.0 {
                v.push(vec![0.0, p.l, -p.mu]);
            }
            v
        }
        SystemKind::DryFriction if p.mu * p.k_s != 0.0 => vec![vec![0.0, 0.0], vec![-0.5 * p.k_s * p.mu, 0.0]],
        _ => vec![vec![0.0, 0.0]],
    }
}

const PROBE_RADIUS: f64 = 1e-2;
const PROBE_TIME: f64 = 1e4;

/// Integrates eight seeds on a small half-sphere around `eq` (moment
/// components nonnegative) and watches where they go.
fn probe(kind: SystemKind, p: &ParamSet, eq: &[f64]) -> Result<Stability> {
    let sys = ReducedSystem::new(kind, p.clone())?;
    let moment = kind.moment_components()[0];
    let dim = kind.dim();
    let other: Vec<usize> = (0..dim).filter(|&i| i != moment).collect();
    let seeds: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            let th = std::f64::consts::PI * (k as f64 + 0.5) / 8.0;
            let mut s = eq.to_vec();
            s[moment] += PROBE_RADIUS * th.sin();
            // spread the in-plane part over the remaining components
            let ph = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            if other.len() == 1 {
                s[other[0]] += PROBE_RADIUS * th.cos();
            } else {
                s[other[0]] += PROBE_RADIUS * th.cos() * ph.cos();
                s[other[1]] += PROBE_RADIUS * th.cos() * ph.sin();
            }
            s
        })
        .collect();
    let dist = |y: &[f64]| y.iter().zip(eq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let outcomes: Vec<Result<(bool, f64, f64)>> = seeds
        .par_iter()
        .map(|s| {
            let sol = integrator::solve(&sys, 0.0, s, PROBE_TIME, &options(1e-10))?;
            let excursion =
                sol.step_times().iter().map(|&t| dist(&sol.eval(t).expect("step time covered"))).fold(0.0, f64::max);
            Ok((sol.events.is_empty(), excursion, dist(sol.final_state()) / dist(s)))
        })
        .collect();
    let mut converged = true;
    for o in outcomes {
        let (clean, excursion, shrink) = o?;
        if !clean || excursion > 100.0 * PROBE_RADIUS {
            return Ok(Stability::Unstable);
        }
        converged &= shrink < 0.5;
    }
    Ok(if converged { Stability::Stable } else { Stability::Center })
}

/// Equilibria of the planar friction/divergence systems and of the 2D
/// special system, classified by linearization and, where that is
/// inconclusive, by a nonlinear probe.
pub fn equilibria(kind: SystemKind, params: &ParamSet) -> Result<Vec<Equilibrium>> {
    params.validate()?;
    if matches!(kind, SystemKind::TwoDGeneral | SystemKind::TwoDWithShift | SystemKind::ThreeD) {
        return Err(Error::param("system", "equilibria are available for 2d-special and the (a, Gtilde) systems"));
    }
    equilibrium_states(kind, params)
        .into_iter()
        .map(|state| {
            let jac = jacobian(kind, params, &state);
            if jac.iter().any(|v| !v.is_finite()) {
                let stability = match probe(kind, params, &state)? {
                    Stability::Center => Stability::Degenerate,
                    s => s,
                };
                return Ok(Equilibrium { state, eigenvalues: None, stability, probed: true });
            }
            let ev: Vec<Eigenvalue> =
                jac.complex_eigenvalues().iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect();
            let scale = ev.iter().map(|z| z.re.hypot(z.im)).fold(1e-300, f64::max);
            let eps = 1e-10 * scale.max(1.0);
            let (stability, probed) = if ev.iter().any(|z| z.re > eps) {
                (Stability::Unstable, false)
            } else if ev.iter().all(|z| z.re < -eps) {
                (Stability::Stable, false)
            } else if ev.iter().all(|z| z.re.abs() <= eps && z.im.abs() > eps) {
                (Stability::Center, false)
            } else {
                (probe(kind, params, &state)?, true)
            };
            Ok(Equilibrium { state, eigenvalues: Some(ev), stability, probed })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum FitModel {
    /// C·t^p
    PowerLaw,
    /// C·t^p·exp(−μt)
    PowerLawExp { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub prefactor: f64,
    pub exponent: f64,
    /// RMS residual of the log-log regression.
    pub fit_error: f64,
    pub samples: usize,
}

pub const FIT_SAMPLES: usize = 64;

/// Least-squares fit of log|y| against log t over the last decade
/// [t_end/10, t_end] of a run.
///
/// With `fixed_exponent` only the prefactor is fitted.
pub fn asymptotic_fit(
    sol: &DenseSolution,
    component: usize,
    model: FitModel,
    fixed_exponent: Option<f64>,
) -> Result<FitResult> {
    if component >= sol.dim() {
        return Err(Error::param("component", "out of range"));
    }
    let t_end = sol.t_final();
    let t_lo = t_end / 10.0;
    if !(t_lo > 0.0) || t_lo < sol.t_start() {
        return Err(Error::FitUnreliable { reason: "run does not cover a late-time decade".into() });
    }
    let times: Vec<f64> = (0..FIT_SAMPLES)
        .map(|i| t_lo * 10f64.powf(i as f64 / (FIT_SAMPLES - 1) as f64))
        .map(|t| t.min(t_end))
        .collect();
    let values: Vec<f64> = times.iter().map(|&t| sol.eval(t).expect("inside span")[component]).collect();
    fit_samples(&times, &values, model, fixed_exponent)
}

/// The regression behind [`asymptotic_fit`] on explicit samples.
pub fn fit_samples(times: &[f64], values: &[f64], model: FitModel, fixed_exponent: Option<f64>) -> Result<FitResult> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::param("samples", "need matching time/value lists of length >= 2"));
    }
    let sign = values[0].signum();
    if values.iter().any(|v| *v == 0.0 || v.signum() != sign || !v.is_finite()) {
        return Err(Error::FitUnreliable { reason: "component vanishes or changes sign over the fit window".into() });
    }
    let mu = match model {
        FitModel::PowerLaw => 0.0,
        FitModel::PowerLawExp { mu } => mu,
    };
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = times.iter().zip(values).map(|(t, v)| v.abs().ln() + mu * t).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let p = match fixed_exponent {
        Some(p) => p,
        None => {
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            sxy / sxx
        }
    };
    let lnc = my - p * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - lnc - p * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(FitResult { prefactor: sign * lnc.exp(), exponent: p, fit_error: rms, samples: xs.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortraitTrajectory {
    pub seed: Vec<f64>,
    /// Samples on [0, t_end], or up to the first event.
    pub forward: Trajectory,
    /// Samples on [−t_end, 0] in increasing time.
    pub backward: Trajectory,
}

fn backward_trajectory(sys: &ReducedSystem, seed: &[f64], t_end: f64, tol: f64, samples: usize) -> Result<Trajectory> {
    let names: Vec<String> = sys.kind.state_names().iter().map(|s| s.to_string()).collect();
    let rev = integrator::solve(&Reversed(sys), 0.0, seed, t_end, &options(tol))?;
    let mut tr = Trajectory::uniform(names, &rev, samples);
    tr.times.reverse();
    tr.states.reverse();
    for t in tr.times.iter_mut() {
        *t = -*t + 0.0;
    }
    tr.events = rev.events.iter().map(|e| Event { kind: e.kind, t: -e.t }).collect();
    Ok(tr)
}

/// Forward and backward runs from each seed, integrated concurrently.
/// Results keep the seed order.
pub fn phase_portrait(
    kind: SystemKind,
    params: &ParamSet,
    seeds: &[Vec<f64>],
    t_end: f64,
    tol: f64,
    samples: usize,
) -> Result<Vec<PortraitTrajectory>> {
    let sys = ReducedSystem::new(kind, params.clone())?;
    if !(t_end > 0.0) {
        return Err(Error::param("t_end", "must be positive"));
    }
    for s in seeds {
        if s.len() != kind.dim() {
            return Err(Error::param("seeds", format!("each seed needs {} components", kind.dim())));
        }
        if kind.moment_components().iter().any(|&i| s[i] < 0.0) {
            return Err(Error::OutsideDomain { point: s.clone() });
        }
    }
    let names: Vec<String> = kind.state_names().iter().map(|s| s.to_string()).collect();
    seeds
        .par_iter()
        .map(|seed| {
            let fwd = integrator::solve(&sys, 0.0, seed, t_end, &options(tol))?;
            Ok(PortraitTrajectory {
                seed: seed.clone(),
                forward: Trajectory::uniform(names.clone(), &fwd, samples),
                backward: backward_trajectory(&sys, seed, t_end, tol, samples)?,
            })
        })
        .collect()
}

/// Largest deviation between the forward orbit of (a, G̃) and the
/// reflection (a, G̃, t) → (−a, G̃, −t) of the backward orbit of (−a, G̃).
///
/// Only the frictionless constant-divergence system is reversible; the
/// friction systems return their (nonzero) defect for comparison.
pub fn reflection_defect(kind: SystemKind, params: &ParamSet, seed: &[f64], t_end: f64, tol: f64) -> Result<f64> {
    if !matches!(kind, SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction) {
        return Err(Error::param("system", "the reflection a -> -a applies to the (a, Gtilde) systems"));
    }
    let sys = ReducedSystem::new(kind, params.clone())?;
    let fwd = integrator::solve(&sys, 0.0, seed, t_end, &options(tol))?;
    let mirrored = [-seed[0], seed[1]];
    let bwd = integrator::solve(&Reversed(&sys), 0.0, &mirrored, t_end, &options(tol))?;
    let span = fwd.t_final().min(bwd.t_final());
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        let s = span * i as f64 / 400.0;
        let f = fwd.eval(s).expect("covered");
        let b = bwd.eval(s).expect("covered");
        let scale = 1.0f64.max(f[0].abs()).max(f[1].abs());
        worst = worst.max(((f[0] + b[0]).abs() + (f[1] - b[1]).abs()) / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let ts: Vec<f64> = (0..50).map(|i| 1e3 * 10f64.powf(i as f64 / 49.0)).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 0.3 * t.powf(-0.7)).collect();
        let f = fit_samples(&ts, &ys, FitModel::PowerLaw, None).unwrap();
        assert!((f.exponent + 0.7).abs() < 1e-12 && (f.prefactor - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_sign_change() {
        let ts = [1.0, 2.0, 3.0];
        assert!(matches!(
            fit_samples(&ts, &[1.0, -1.0, 2.0], FitModel::PowerLaw, None),
            Err(Error::FitUnreliable { .. })
        ));
    }

    #[test]
    fn closed_form_returns_initial_data() {
        let p = ParamSet { gamma: 1.4, l: 0.3, k: 0.8, ..Default::default() };
        let cf = ClosedFormMu0::new(&[0.9, 0.2, 0.4], &p).unwrap();
        assert_eq!(cf.alpha(0.9).unwrap(), 0.4);
        assert_eq!(cf.beta(0.9), 0.2);
        assert_eq!(cf.time(0.9).unwrap(), 0.0);
        assert!((cf.radicand(0.9) - 0.16).abs() < 1e-14);
    }

    #[test]
    fn dry_friction_spectrum() {
        let p = ParamSet { mu: 0.5, k_s: 2.0, ..Default::default() };
        let eq = equilibria(SystemKind::DryFriction, &p).unwrap();
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[0].stability, Stability::Stable);
        assert_eq!(eq[1].stability, Stability::Unstable);
        let mut re: Vec<f64> = eq[1].eigenvalues.as_ref().unwrap().iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 0.5).abs() < 1e-12 && (re[1] - 1.0).abs() < 1e-12);
    }
}
