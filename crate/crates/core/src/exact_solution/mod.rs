//! Gas states with linear velocity profile V = A(t)x + b(t), assembled by
//! transporting initial density and pressure along the flow.

mod data;

pub use data::{
    compat_residual, corollary_feasible_params, makino_inverse, makino_variable, CompatMode, CompatReport,
    CorollaryReport, DataFamily, DataMoments, InitialData, ScalarFn,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::reduced_ode::integrator::{self, DenseSolution, EventKind, IntegratorOptions, OdeSystem, Reversed};
use crate::reduced_ode::{ParamSet, ReducedSystem, SystemKind};

pub type MatrixOfTime = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type VectorOfTime = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Flow determinants at or below this count as a degenerate flow.
pub const DEGENERATE_DET: f64 = 1e-14;

/// Where A(t) and b(t) come from: an ODE for some coefficient state, or a
/// closed-form function of time (zero-dimensional state).
pub trait CoefficientSource: Send + Sync {
    fn spatial_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn state_rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    fn matrix(&self, t: f64, y: &[f64]) -> DMatrix<f64>;
    fn shift(&self, t: f64, y: &[f64]) -> DVector<f64>;
    fn check(&self, _t: f64, _y: &[f64]) -> Option<EventKind> {
        None
    }
}

/// A(t), b(t) given in closed form.
#[derive(Clone)]
pub struct Prescribed {
    pub n: usize,
    pub a: MatrixOfTime,
    pub b: Option<VectorOfTime>,
}

impl Prescribed {
    pub fn new(n: usize, a: MatrixOfTime) -> Self {
        Self { n, a, b: None }
    }

    pub fn with_shift(mut self, b: VectorOfTime) -> Self {
        self.b = Some(b);
        self
    }
}

impl CoefficientSource for Prescribed {
    fn spatial_dim(&self) -> usize {
        self.n
    }
    fn state_dim(&self) -> usize {
        0
    }
    fn initial_state(&self) -> Vec<f64> {
        Vec::new()
    }
    fn state_rhs(&self, _t: f64, _y: &[f64], _dy: &mut [f64]) {}
    fn matrix(&self, t: f64, _y: &[f64]) -> DMatrix<f64> {
        (self.a)(t)
    }
    fn shift(&self, t: f64, _y: &[f64]) -> DVector<f64> {
        match &self.b {
            Some(b) => b(t),
            None => DVector::zeros(self.n),
        }
    }
}

/// Coefficients driven by one of the linear-profile reduced systems.
///
/// The 3D system uses ω = e₃, so A = αI + β[[0, 1, 0], [−1, 0, 0], [0, 0, 0]].
#[derive(Debug, Clone)]
pub struct ReducedCoefficients {
    pub system: ReducedSystem,
    pub state0: Vec<f64>,
}

impl ReducedCoefficients {
    pub fn new(kind: SystemKind, params: ParamSet, state0: Vec<f64>) -> Result<Self> {
        if matches!(kind, SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction) {
            return Err(Error::param("system", "separated-form systems have no linear velocity profile"));
        }
        if state0.len() != kind.dim() {
            return Err(Error::param("state0", format!("{} expects {} components", kind.label(), kind.dim())));
        }
        Ok(Self { system: ReducedSystem::new(kind, params)?, state0 })
    }
}

impl CoefficientSource for ReducedCoefficients {
    fn spatial_dim(&self) -> usize {
        if self.system.kind == SystemKind::ThreeD {
            3
        } else {
            2
        }
    }
    fn state_dim(&self) -> usize {
        self.system.kind.dim()
    }
    fn initial_state(&self) -> Vec<f64> {
        self.state0.clone()
    }
    fn state_rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.system.rhs(t, y, dy)
    }
    fn matrix(&self, _t: f64, y: &[f64]) -> DMatrix<f64> {
        match self.system.kind {
            SystemKind::TwoDSpecial => DMatrix::from_row_slice(2, 2, &[y[2], y[1], -y[1], y[2]]),
            SystemKind::TwoDGeneral => DMatrix::from_row_slice(2, 2, &[y[3], y[4], y[5], y[6]]),
            SystemKind::TwoDWithShift => DMatrix::from_row_slice(2, 2, &[y[3], y[4], -y[4], y[3]]),
            SystemKind::ThreeD => DMatrix::from_row_slice(3, 3, &[y[0], y[1], 0.0, -y[1], y[0], 0.0, 0.0, 0.0, y[0]]),
            _ => unreachable!("rejected in the constructor"),
        }
    }
    fn shift(&self, _t: f64, y: &[f64]) -> DVector<f64> {
        match self.system.kind {
            SystemKind::TwoDWithShift => DVector::from_vec(vec![y[5], y[6]]),
            _ => DVector::zeros(self.spatial_dim()),
        }
    }
    fn check(&self, t: f64, y: &[f64]) -> Option<EventKind> {
        self.system.check(t, y)
    }
}

/// Wraps a source and rescales the isotropic part of A by `scale`,
/// leaving the coefficient dynamics untouched. Used as a negative control:
/// the assembled state no longer solves the Euler system.
pub struct Perturbed<C> {
    pub inner: C,
    pub scale: f64,
}

impl<C: CoefficientSource> CoefficientSource for Perturbed<C> {
    fn spatial_dim(&self) -> usize {
        self.inner.spatial_dim()
    }
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn initial_state(&self) -> Vec<f64> {
        self.inner.initial_state()
    }
    fn state_rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.inner.state_rhs(t, y, dy)
    }
    fn matrix(&self, t: f64, y: &[f64]) -> DMatrix<f64> {
        let a = self.inner.matrix(t, y);
        let n = a.nrows();
        let iso = a.trace() / n as f64;
        a + DMatrix::identity(n, n) * ((self.scale - 1.0) * iso)
    }
    fn shift(&self, t: f64, y: &[f64]) -> DVector<f64> {
        self.inner.shift(t, y)
    }
    fn check(&self, t: f64, y: &[f64]) -> Option<EventKind> {
        self.inner.check(t, y)
    }
}

/// Coefficients together with M, Y = M⁻¹, ∫tr A and ∫Y b in one state.
struct Augmented<'a> {
    src: &'a dyn CoefficientSource,
}

struct Layout {
    m: usize,
    n: usize,
}

impl Layout {
    fn of(src: &dyn CoefficientSource) -> Self {
        Self { m: src.state_dim(), n: src.spatial_dim() }
    }
    fn total(&self) -> usize {
        self.m + 2 * self.n * self.n + 1 + self.n
    }
    fn mat(&self) -> usize {
        self.m
    }
    fn inv(&self) -> usize {
        self.m + self.n * self.n
    }
    fn trace(&self) -> usize {
        self.m + 2 * self.n * self.n
    }
    fn shift(&self) -> usize {
        self.trace() + 1
    }
    fn initial(&self, coef: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.total()];
        y[..self.m].copy_from_slice(coef);
        for i in 0..self.n {
            y[self.mat() + i * self.n + i] = 1.0;
            y[self.inv() + i * self.n + i] = 1.0;
        }
        y
    }
}

fn block(y: &[f64], at: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &y[at..at + n * n])
}

impl OdeSystem for Augmented<'_> {
    fn dim(&self) -> usize {
        Layout::of(self.src).total()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let lay = Layout::of(self.src);
        let n = lay.n;
        let coef = &y[..lay.m];
        self.src.state_rhs(t, coef, &mut dy[..lay.m]);
        let a = self.src.matrix(t, coef);
        let b = self.src.shift(t, coef);
        let m = block(y, lay.mat(), n);
        let yi = block(y, lay.inv(), n);
        let dm = &a * &m;
        let dyi = -(&yi * &a);
        for i in 0..n {
            for j in 0..n {
                dy[lay.mat() + i * n + j] = dm[(i, j)];
                dy[lay.inv() + i * n + j] = dyi[(i, j)];
            }
        }
        dy[lay.trace()] = a.trace();
        let ds = &yi * &b;
        dy[lay.shift()..lay.shift() + n].copy_from_slice(ds.as_slice());
    }

    fn check(&self, t: f64, y: &[f64]) -> Option<EventKind> {
        let lay = Layout::of(self.src);
        if let Some(ev) = self.src.check(t, &y[..lay.m]) {
            return Some(ev);
        }
        (block(y, lay.mat(), lay.n).determinant() <= DEGENERATE_DET).then_some(EventKind::DeterminantLoss)
    }
}

/// Everything the transport formulas need at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub coefficients: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub m: DMatrix<f64>,
    pub m_inv: DMatrix<f64>,
    pub trace_integral: f64,
    pub shift_integral: DVector<f64>,
}

impl FlowState {
    /// Lagrangian label ξ = M⁻¹x − ∫M⁻¹b of the particle at x.
    pub fn pullback(&self, x: &[f64]) -> DVector<f64> {
        &self.m_inv * DVector::from_column_slice(x) - &self.shift_integral
    }

    /// Position at time t of the particle labelled ξ.
    pub fn push_forward(&self, xi: &[f64]) -> DVector<f64> {
        &self.m * (DVector::from_column_slice(xi) + &self.shift_integral)
    }

    pub fn velocity(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub m: DMatrix<f64>,
    pub det: f64,
    pub inverse: Option<DMatrix<f64>>,
}

/// Solves X′ = A(τ)X, X(0) = I, up to τ = t ≥ 0.
pub fn fundamental_matrix(
    n: usize,
    a: MatrixOfTime,
    t: f64,
    tol: f64,
    want_inverse: bool,
) -> Result<FundamentalMatrix> {
    if !(t >= 0.0) {
        return Err(Error::param("t", "must be nonnegative"));
    }
    let src = Prescribed::new(n, a);
    let lay = Layout::of(&src);
    if t == 0.0 {
        let id = DMatrix::identity(n, n);
        return Ok(FundamentalMatrix { m: id.clone(), det: 1.0, inverse: want_inverse.then_some(id) });
    }
    let sol = integrator::solve(&Augmented { src: &src }, 0.0, &lay.initial(&[]), t, &IntegratorOptions::new(tol))?;
    if sol.t_final() < t {
        let det = block(sol.final_state(), lay.mat(), n).determinant();
        return Err(Error::DegenerateFlow { t: sol.t_final(), det });
    }
    let y = sol.final_state();
    let m = block(y, lay.mat(), n);
    let det = m.determinant();
    if det <= DEGENERATE_DET {
        return Err(Error::DegenerateFlow { t, det });
    }
    Ok(FundamentalMatrix { m, det, inverse: want_inverse.then(|| block(y, lay.inv(), n)) })
}

/// Assembled exact solution on a time window [t_min, t_max] containing 0.
pub struct GasSolution {
    src: Arc<dyn CoefficientSource>,
    forward: DenseSolution,
    backward: Option<DenseSolution>,
    pub data: InitialData,
    pub gamma: f64,
}

impl GasSolution {
    pub fn assemble(
        src: Arc<dyn CoefficientSource>,
        data: InitialData,
        gamma: f64,
        t_min: f64,
        t_max: f64,
        tol: f64,
    ) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::param("gamma", "must exceed 1"));
        }
        if !(t_min <= 0.0 && t_max > 0.0) {
            return Err(Error::param("t_range", "need t_min <= 0 < t_max"));
        }
        if data.n != src.spatial_dim() {
            return Err(Error::param("data", "dimension differs from the coefficient source"));
        }
        let lay = Layout::of(src.as_ref());
        let y0 = lay.initial(&src.initial_state());
        let opts = IntegratorOptions::new(tol);
        let aug = Augmented { src: src.as_ref() };
        let forward = integrator::solve(&aug, 0.0, &y0, t_max, &opts)?;
        let backward =
            if t_min < 0.0 { Some(integrator::solve(&Reversed(&aug), 0.0, &y0, -t_min, &opts)?) } else { None };
        Ok(Self { src, forward, backward, data, gamma })
    }

    pub fn dim(&self) -> usize {
        self.src.spatial_dim()
    }

    /// Reached window; shorter than requested when an event stopped a run.
    pub fn time_range(&self) -> (f64, f64) {
        (self.backward.as_ref().map_or(0.0, |b| -b.t_final()), self.forward.t_final())
    }

    pub fn events(&self) -> Vec<integrator::Event> {
        let mut ev = self.forward.events.clone();
        if let Some(b) = &self.backward {
            ev.extend(b.events.iter().map(|e| integrator::Event { kind: e.kind, t: -e.t }));
        }
        ev
    }

    pub fn flow(&self, t: f64) -> Result<FlowState> {
        let y = if t >= 0.0 { self.forward.eval(t) } else { self.backward.as_ref().and_then(|b| b.eval(-t)) };
        let y = y.ok_or(Error::OutsideDomain { point: vec![t] })?;
        let lay = Layout::of(self.src.as_ref());
        let n = lay.n;
        let coefficients = y[..lay.m].to_vec();
        let m = block(&y, lay.mat(), n);
        let det = m.determinant();
        if det <= DEGENERATE_DET {
            return Err(Error::DegenerateFlow { t, det });
        }
        Ok(FlowState {
            t,
            a: self.src.matrix(t, &coefficients),
            b: self.src.shift(t, &coefficients),
            coefficients,
            m,
            m_inv: block(&y, lay.inv(), n),
            trace_integral: y[lay.trace()],
            shift_integral: DVector::from_column_slice(&y[lay.shift()..lay.shift() + n]),
        })
    }

    /// (ρ, p) at x for a flow state already evaluated at its time.
    pub fn rho_p_at(&self, fs: &FlowState, x: &[f64]) -> (f64, f64) {
        let xi = fs.pullback(x);
        let rho = (-fs.trace_integral).exp() * (self.data.rho0)(xi.as_slice());
        let p = (-self.gamma * fs.trace_integral).exp() * (self.data.p0)(xi.as_slice());
        (rho, p)
    }

    pub fn rho(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.rho_p_at(&self.flow(t)?, x).0)
    }

    pub fn p(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.rho_p_at(&self.flow(t)?, x).1)
    }

    pub fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.flow(t)?.velocity(x).as_slice().to_vec())
    }

    /// S = ln(p/ρ^γ); `None` where ρ or p vanishes.
    pub fn entropy(&self, t: f64, x: &[f64]) -> Result<Option<f64>> {
        let (rho, p) = self.rho_p_at(&self.flow(t)?, x);
        Ok((rho > 0.0 && p > 0.0).then(|| p.ln() - self.gamma * rho.ln()))
    }
}
