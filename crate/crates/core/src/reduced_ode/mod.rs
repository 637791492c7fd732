//! Reduced ODE systems for the velocity coefficients, their energies, and
//! the integrator driving them.

pub mod analysis;
pub mod integrator;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use integrator::{DenseSolution, EventKind, IntegratorOptions, OdeSystem};

pub use analysis::{
    asymptotic_fit, equilibria, phase_portrait, reflection_defect, ClosedFormMu0, Equilibrium, FitModel, FitResult,
    PortraitTrajectory, Stability,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    #[serde(rename = "2d-special")]
    TwoDSpecial,
    #[serde(rename = "2d-general")]
    TwoDGeneral,
    #[serde(rename = "2d-with-shift")]
    TwoDWithShift,
    #[serde(rename = "3d")]
    ThreeD,
    ConstDiv,
    DryFriction,
    AeroFriction,
}

impl SystemKind {
    pub const ALL: [SystemKind; 7] = [
        SystemKind::TwoDSpecial,
        SystemKind::TwoDGeneral,
        SystemKind::TwoDWithShift,
        SystemKind::ThreeD,
        SystemKind::ConstDiv,
        SystemKind::DryFriction,
        SystemKind::AeroFriction,
    ];

    pub fn state_names(self) -> &'static [&'static str] {
        match self {
            SystemKind::TwoDSpecial => &["G1", "beta", "alpha"],
            SystemKind::TwoDGeneral => &["G1", "G2", "G3", "a", "b", "c", "d"],
            SystemKind::TwoDWithShift => &["G", "N1", "N2", "alpha", "beta", "b1", "b2"],
            SystemKind::ThreeD => &["alpha", "beta", "G1"],
            SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction => &["a", "Gtilde"],
        }
    }

    pub fn dim(self) -> usize {
        self.state_names().len()
    }

    /// Indices of moment-type components that must stay nonnegative.
    pub fn moment_components(self) -> &'static [usize] {
        match self {
            SystemKind::TwoDSpecial => &[0],
            SystemKind::TwoDGeneral => &[0, 1],
            SystemKind::TwoDWithShift => &[0],
            SystemKind::ThreeD => &[2],
            SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction => &[1],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SystemKind::TwoDSpecial => "2d-special",
            SystemKind::TwoDGeneral => "2d-general",
            SystemKind::TwoDWithShift => "2d-with-shift",
            SystemKind::ThreeD => "3d",
            SystemKind::ConstDiv => "const-div",
            SystemKind::DryFriction => "dry-friction",
            SystemKind::AeroFriction => "aero-friction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::param("system", format!("unknown system `{s}`")))
    }
}

/// Physical and closure constants shared by all systems.
///
/// `k` is the pressure constant of whichever system is run: K for the 2D
/// special and shifted systems, K₂ for the general 2D system, K̃ for the
/// 3D and constant-divergence systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSet {
    pub gamma: f64,
    pub l: f64,
    pub mu: f64,
    pub mu1: f64,
    pub delta: u8,
    pub k: f64,
    /// Friction moment constant K_{s2}.
    pub k_s: f64,
    /// Constant divergence D.
    pub d: f64,
    /// Total mass ℳ.
    pub mass: f64,
    /// H(0) of the 3D system.
    pub h0: f64,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self { gamma: 1.4, l: 0.0, mu: 0.0, mu1: 0.0, delta: 0, k: 1.0, k_s: 1.0, d: 1.0, mass: 1.0, h0: 0.0 }
    }
}

impl ParamSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", "must exceed 1"));
        }
        if !(self.mu >= 0.0) || !(self.mu1 >= 0.0) {
            return Err(Error::param("mu", "friction coefficients must be nonnegative"));
        }
        if self.delta > 1 {
            return Err(Error::param("delta", "must be 0 or 1"));
        }
        if !(self.k >= 0.0) || !(self.k_s >= 0.0) || !(self.h0 >= 0.0) {
            return Err(Error::param("k", "constants must be nonnegative"));
        }
        if !(self.mass > 0.0) {
            return Err(Error::param("mass", "must be positive"));
        }
        if [self.l, self.d, self.k, self.k_s, self.h0].iter().any(|v| !v.is_finite()) {
            return Err(Error::param("params", "all values must be finite"));
        }
        Ok(())
    }

    /// Physical range γ ≤ 1 + 2/n; outside it is allowed but flagged.
    pub fn physical_warning(&self, n: usize) -> Option<String> {
        (self.gamma > 1.0 + 2.0 / n as f64).then(|| format!("gamma = {} exceeds 1 + 2/{n}", self.gamma))
    }

    /// (γ − 1)·K, the constant K₁ of the 2D special asymptotics.
    pub fn k1(&self) -> f64 {
        (self.gamma - 1.0) * self.k
    }

    /// Potential-energy constant of the constant-divergence systems,
    /// recovered from the closure constant K̃ = (γ − 1)·D·k_pot / 2.
    pub fn k_pot(&self) -> Result<f64> {
        let denom = (self.gamma - 1.0) * self.d;
        if denom == 0.0 {
            return Err(Error::param("d", "the potential energy needs a nonzero divergence"));
        }
        Ok(2.0 * self.k / denom)
    }
}

/// A system kind with its parameters; implements the right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub kind: SystemKind,
    pub params: ParamSet,
}

impl ReducedSystem {
    pub fn new(kind: SystemKind, params: ParamSet) -> Result<Self> {
        params.validate()?;
        Ok(Self { kind, params })
    }

    /// 4G²ℳ² − |N|⁴ for the shifted system.
    pub fn shift_determinant(&self, y: &[f64]) -> f64 {
        let n2 = y[1] * y[1] + y[2] * y[2];
        let gm = y[0] * self.params.mass;
        4.0 * gm * gm - n2 * n2
    }
}

fn pos_pow(x: f64, e: f64) -> f64 {
    x.max(0.0).powf(e)
}

impl OdeSystem for ReducedSystem {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let p = &self.params;
        let (g, l, mu) = (p.gamma, p.l, p.mu);
        match self.kind {
            SystemKind::TwoDSpecial => {
                let (g1, beta, alpha) = (y[0], y[1], y[2]);
                dy[0] = -2.0 * alpha * g1;
                dy[1] = alpha * (l - 2.0 * beta) - mu * beta;
                dy[2] = -alpha * alpha + beta * beta - l * beta - mu * alpha + (g - 1.0) * p.k * pos_pow(g1, g);
            }
            SystemKind::TwoDGeneral => {
                let (g1, g2, g3, a, b, c, d) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
                let k2 = p.k;
                dy[0] = ((1.0 - g) * a - (1.0 + g) * d) * g1 + 2.0 * b * g3;
                dy[1] = ((1.0 - g) * d - (1.0 + g) * a) * g2 + 2.0 * c * g3;
                dy[2] = c * g1 + b * g2 - g * (a + d) * g3;
                dy[3] = -a * a - b * c + l * c - mu * a + k2 * g2;
                dy[4] = -b * (a + d) + l * d - mu * b - k2 * g3;
                dy[5] = -c * (a + d) - l * a - mu * c - k2 * g3;
                dy[6] = -d * d - b * c - l * b - mu * d + k2 * g1;
            }
            SystemKind::TwoDWithShift => shifted_rhs(p, y, dy),
            SystemKind::ThreeD => {
                let (alpha, beta, g1) = (y[0], y[1], y[2]);
                let delta = p.delta as f64;
                dy[0] = -alpha * alpha - mu * alpha + beta * beta * g1 * p.h0 - delta * beta * g1 * p.h0
                    + 1.5 * (g - 1.0) * p.k * pos_pow(g1, (3.0 * g - 1.0) / 2.0);
                dy[1] = delta * alpha - mu * beta;
                dy[2] = -2.0 * alpha * g1;
            }
            SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction => {
                let (a, gt) = (y[0], y[1]);
                let mut da = -a * a + p.k * pos_pow(gt, ((g - 1.0) * p.d + 2.0) / 2.0);
                if self.kind == SystemKind::DryFriction {
                    da -= 0.5 * mu * p.k_s * a;
                }
                if self.kind == SystemKind::AeroFriction && a != 0.0 {
                    da -= 0.5 * p.mu1 * p.k_s * a * a.abs() / gt.sqrt();
                }
                dy[0] = da;
                dy[1] = -2.0 * a * gt;
            }
        }
    }

    fn check(&self, _t: f64, y: &[f64]) -> Option<EventKind> {
        if self.kind.moment_components().iter().any(|&i| y[i] < 0.0) {
            return Some(EventKind::PositivityLoss);
        }
        match self.kind {
            SystemKind::TwoDGeneral if y[0] * y[1] - y[2] * y[2] <= 0.0 => Some(EventKind::PositivityLoss),
            SystemKind::TwoDWithShift if self.shift_determinant(y) <= 0.0 => Some(EventKind::DeterminantLoss),
            _ => None,
        }
    }
}

/// Moment combinations of the shifted 2D ansatz V = αr + βr⊥ + b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftMoments {
    pub i1: f64,
    pub i2: f64,
    pub f1: f64,
    pub f2: f64,
    pub kinetic: f64,
    pub potential: f64,
    /// Second moment about the centre of mass, G − |N|²/(2ℳ).
    pub centred: f64,
}

pub fn shift_moments(p: &ParamSet, y: &[f64]) -> ShiftMoments {
    let (gm, n1, n2, al, be, b1, b2) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
    let m = p.mass;
    let centred = gm - (n1 * n1 + n2 * n2) / (2.0 * m);
    ShiftMoments {
        i1: al * n1 + be * n2 + b1 * m,
        i2: al * n2 - be * n1 + b2 * m,
        f1: 2.0 * al * gm + b1 * n1 + b2 * n2,
        f2: 2.0 * be * gm + b2 * n1 - b1 * n2,
        kinetic: (al * al + be * be) * gm
            + al * (b1 * n1 + b2 * n2)
            + be * (b1 * n2 - b2 * n1)
            + 0.5 * (b1 * b1 + b2 * b2) * m,
        potential: p.k * pos_pow(centred, 1.0 - p.gamma),
        centred,
    }
}

/// Solves the four moment relations for (α′, β′, b₁′, b₂′).
fn shifted_rhs(p: &ParamSet, y: &[f64], dy: &mut [f64]) {
    let (gm, n1, n2, al, be, b1, b2) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
    let m = p.mass;
    let s = shift_moments(p, y);
    let (l, mu) = (p.l, p.mu);
    dy[0] = s.f1;
    dy[1] = s.i1;
    dy[2] = s.i2;
    let t1 = -mu * s.i1 + l * s.i2;
    let t2 = -l * s.i1 - mu * s.i2;
    let t3 = 2.0 * s.kinetic + 2.0 * (p.gamma - 1.0) * s.potential - mu * s.f1 - l * s.f2;
    let t4 = l * s.f1 - mu * s.f2;
    #[rustfmt::skip]
    let a = Matrix4::new(
        n1, n2, m, 0.0,
        n2, -n1, 0.0, m,
        2.0 * gm, 0.0, n1, n2,
        0.0, 2.0 * gm, -n2, n1,
    );
    let rhs = Vector4::new(
        t1 - al * s.i1 - be * s.i2,
        t2 - al * s.i2 + be * s.i1,
        t3 - 2.0 * al * s.f1 - b1 * s.i1 - b2 * s.i2,
        t4 - 2.0 * be * s.f1 - b2 * s.i1 + b1 * s.i2,
    );
    match a.lu().solve(&rhs) {
        Some(u) => {
            dy[3] = u[0];
            dy[4] = u[1];
            dy[5] = u[2];
            dy[6] = u[3];
        }
        None => dy[3..7].fill(f64::NAN),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// Kinetic, potential and total energy expressed through the state.
pub fn energy(kind: SystemKind, state: &[f64], params: &ParamSet) -> Result<EnergyParts> {
    if state.len() != kind.dim() {
        return Err(Error::param("state", format!("expected {} components", kind.dim())));
    }
    let positivity = || Error::param("state", "moment components must be positive");
    if kind.moment_components().iter().any(|&i| !(state[i] > 0.0)) {
        return Err(positivity());
    }
    let g = params.gamma;
    let (kinetic, potential) = match kind {
        SystemKind::TwoDSpecial => {
            let (g1, beta, alpha) = (state[0], state[1], state[2]);
            ((alpha * alpha + beta * beta) / g1, params.k * g1.powf(g - 1.0))
        }
        SystemKind::TwoDGeneral => {
            let m = general_moments(state, g)?;
            let (a, b, c, d) = (state[3], state[4], state[5], state[6]);
            let ek = (a * a + c * c) * m.gx + (b * b + d * d) * m.gy + 2.0 * (a * b + c * d) * m.gxy;
            (ek, 2.0 * params.k / (g - 1.0) * m.delta.powf((1.0 - g) / 2.0))
        }
        SystemKind::TwoDWithShift => {
            let s = shift_moments(params, state);
            if !(s.centred > 0.0) {
                return Err(positivity());
            }
            (s.kinetic, s.potential)
        }
        SystemKind::ThreeD => {
            let (alpha, beta, g1) = (state[0], state[1], state[2]);
            (alpha * alpha / g1 + beta * beta * params.h0, params.k * g1.powf(1.5 * (g - 1.0)))
        }
        SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction => {
            let (a, gt) = (state[0], state[1]);
            (a * a / gt, params.k_pot()? * gt.powf((g - 1.0) * params.d / 2.0))
        }
    };
    Ok(EnergyParts { kinetic, potential, total: kinetic + potential })
}

/// Second moments recovered from the scaled variables of the general 2D
/// system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralMoments {
    pub gx: f64,
    pub gy: f64,
    pub gxy: f64,
    pub delta: f64,
}

pub fn general_moments(state: &[f64], gamma: f64) -> Result<GeneralMoments> {
    let (g1, g2, g3) = (state[0], state[1], state[2]);
    let det = g1 * g2 - g3 * g3;
    if !(det > 0.0) {
        return Err(Error::param("state", "G1 G2 - G3^2 must be positive"));
    }
    // G1 G2 − G3² = Δ^{−γ}
    let delta = det.powf(-1.0 / gamma);
    let s = delta.powf((gamma + 1.0) / 2.0);
    Ok(GeneralMoments { gx: g1 * s, gy: g2 * s, gxy: g3 * s, delta })
}

/// Scaled variables (G₁, G₂, G₃) from raw second moments.
pub fn general_scaled(gx: f64, gy: f64, gxy: f64, gamma: f64) -> Result<[f64; 3]> {
    let delta = gx * gy - gxy * gxy;
    if !(delta > 0.0) {
        return Err(Error::param("moments", "Gx Gy - Gxy^2 must be positive"));
    }
    let s = delta.powf(-(gamma + 1.0) / 2.0);
    Ok([gx * s, gy * s, gxy * s])
}

/// Sampled solution of a reduced system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<integrator::Event>,
}

impl Trajectory {
    /// One row per accepted step.
    pub fn from_steps(names: Vec<String>, sol: &DenseSolution) -> Self {
        let times = sol.step_times();
        let states = times.iter().map(|&t| sol.eval(t).expect("step time inside the span")).collect();
        Self { names, times, states, events: sol.events.clone() }
    }

    /// Dense output at the requested times that the run reached.
    pub fn at_times(names: Vec<String>, sol: &DenseSolution, times: &[f64]) -> Self {
        let kept: Vec<f64> = times.iter().copied().filter(|&t| sol.covers(t)).collect();
        let states = kept.iter().map(|&t| sol.eval(t).expect("covered")).collect();
        Self { names, times: kept, states, events: sol.events.clone() }
    }

    /// `n + 1` evenly spaced samples over the reached span.
    pub fn uniform(names: Vec<String>, sol: &DenseSolution, n: usize) -> Self {
        let (a, b) = (sol.t_start(), sol.t_final());
        let times: Vec<f64> = (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect();
        Self::at_times(names, sol, &times)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.states.iter().map(|s| s[i]).collect())
    }
}

/// Integration options for a reduced system run.
pub fn options(tol: f64) -> IntegratorOptions {
    IntegratorOptions::new(tol)
}

/// Integrates a reduced system and keeps the continuous solution.
pub fn solve_dense(kind: SystemKind, state0: &[f64], params: &ParamSet, t_end: f64, tol: f64) -> Result<DenseSolution> {
    let sys = ReducedSystem::new(kind, params.clone())?;
    if !(t_end > 0.0) {
        return Err(Error::param("t_end", "must be positive"));
    }
    if state0.len() != kind.dim() {
        return Err(Error::param("state0", format!("{} expects {} components", kind.label(), kind.dim())));
    }
    integrator::solve(&sys, 0.0, state0, t_end, &options(tol))
}

/// Integrates from t = 0 to `t_end`, sampling at `samples` when given and
/// at the accepted steps otherwise.
pub fn integrate(
    kind: SystemKind,
    state0: &[f64],
    params: &ParamSet,
    t_end: f64,
    tol: f64,
    samples: Option<&[f64]>,
) -> Result<Trajectory> {
    let sol = solve_dense(kind, state0, params, t_end, tol)?;
    let names = kind.state_names().iter().map(|s| s.to_string()).collect();
    Ok(match samples {
        Some(ts) => Trajectory::at_times(names, &sol, ts),
        None => Trajectory::from_steps(names, &sol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rhs(kind: SystemKind, p: &ParamSet, y: &[f64]) -> Vec<f64> {
        let sys = ReducedSystem::new(kind, p.clone()).unwrap();
        let mut dy = vec![0.0; kind.dim()];
        sys.rhs(0.0, y, &mut dy);
        dy
    }

    #[test]
    fn special_system_at_rest() {
        let p = ParamSet { gamma: 1.4, k: 1.0, ..Default::default() };
        let dy = rhs(SystemKind::TwoDSpecial, &p, &[1.0, 0.0, 0.0]);
        assert_eq!(dy[0], 0.0);
        assert_eq!(dy[1], 0.0);
        assert!((dy[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn origin_is_rest_for_const_div() {
        let p = ParamSet::default();
        assert_eq!(rhs(SystemKind::ConstDiv, &p, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn dry_friction_second_rest_point() {
        let p = ParamSet { mu: 0.6, k_s: 1.5, ..Default::default() };
        let a = -p.k_s * p.mu / 2.0;
        let dy = rhs(SystemKind::DryFriction, &p, &[a, 0.0]);
        assert!(dy[0].abs() < 1e-15 && dy[1] == 0.0);
    }

    #[test]
    fn shifted_system_without_shift_reduces_to_special() {
        let p = ParamSet { gamma: 1.4, l: 0.4, mu: 0.2, k: 0.7, mass: 2.0, ..Default::default() };
        let (gm, al, be) = (1.3, 0.25, -0.15);
        let dy = rhs(SystemKind::TwoDWithShift, &p, &[gm, 0.0, 0.0, al, be, 0.0, 0.0]);
        let ds = rhs(SystemKind::TwoDSpecial, &p, &[1.0 / gm, be, al]);
        assert!((dy[3] - ds[2]).abs() < 1e-13);
        assert!((dy[4] - ds[1]).abs() < 1e-13);
        assert!(dy[5].abs() < 1e-14 && dy[6].abs() < 1e-14);
    }

    #[test]
    fn general_moments_round_trip() {
        let g = general_scaled(0.8, 1.1, 0.2, 1.4).unwrap();
        let m = general_moments(&[g[0], g[1], g[2], 0.0, 0.0, 0.0, 0.0], 1.4).unwrap();
        assert!((m.gx - 0.8).abs() < 1e-13 && (m.gy - 1.1).abs() < 1e-13 && (m.gxy - 0.2).abs() < 1e-13);
        assert!((m.delta - (0.8 * 1.1 - 0.04)).abs() < 1e-13);
    }

    #[test]
    fn energy_of_resting_special_state() {
        let e = energy(SystemKind::TwoDSpecial, &[1.0, 0.0, 0.0], &ParamSet { k: 1.0, ..Default::default() }).unwrap();
        assert_eq!((e.kinetic, e.potential), (0.0, 1.0));
    }

    #[test]
    fn system_labels_round_trip() {
        for k in SystemKind::ALL {
            assert_eq!(SystemKind::parse(k.label()).unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.label()));
        }
    }
}
