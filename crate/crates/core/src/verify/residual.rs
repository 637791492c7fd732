//! Finite-difference residuals of the Euler system with forcing, on two
//! grid levels for an observed convergence order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_solution::GasSolution;

/// Density, pressure and velocity at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub rho: f64,
    pub p: f64,
    pub v: Vec<f64>,
}

/// Pointwise evaluator of a gas state frozen at one time.
pub type PointEval<'a> = Box<dyn Fn(&[f64]) -> Result<Sample> + Send + Sync + 'a>;

/// Anything that can be sampled as a gas state.
pub trait GasState: Sync {
    fn dim(&self) -> usize;

    fn at_time(&self, t: f64) -> Result<PointEval<'_>>;

    /// Samples at several points sharing one time.
    fn sample(&self, t: f64, xs: &[Vec<f64>]) -> Result<Vec<Sample>> {
        let f = self.at_time(t)?;
        xs.iter().map(|x| f(x)).collect()
    }

    /// Box containing the image at time t of the Lagrangian box [−R, R]^n.
    fn support_box(&self, _t: f64, radius: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((vec![-radius; self.dim()], vec![radius; self.dim()]))
    }

    /// Lagrangian radius outside which the moment integrands carry less
    /// than `tail`; `None` when the decay is unknown.
    fn tail_radius(&self, _tail: f64) -> Option<f64> {
        None
    }

    /// Inverse of `tail_radius`.
    fn tail_at(&self, _radius: f64) -> Option<f64> {
        None
    }
}

impl GasState for GasSolution {
    fn dim(&self) -> usize {
        GasSolution::dim(self)
    }

    fn at_time(&self, t: f64) -> Result<PointEval<'_>> {
        let fs = self.flow(t)?;
        Ok(Box::new(move |x: &[f64]| {
            let (rho, p) = self.rho_p_at(&fs, x);
            Ok(Sample { rho, p, v: fs.velocity(x).as_slice().to_vec() })
        }))
    }

    fn support_box(&self, t: f64, radius: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let fs = self.flow(t)?;
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for mask in 0..(1usize << n) {
            let corner: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { radius } else { -radius }).collect();
            let y = fs.push_forward(&corner);
            for i in 0..n {
                lo[i] = lo[i].min(y[i]);
                hi[i] = hi[i].max(y[i]);
            }
        }
        Ok((lo, hi))
    }

    fn tail_radius(&self, tail: f64) -> Option<f64> {
        Some(self.data.radius(tail))
    }

    fn tail_at(&self, radius: f64) -> Option<f64> {
        Some(self.data.tail_at(radius))
    }
}

/// A gas at rest or in uniform motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantState {
    pub rho: f64,
    pub p: f64,
    pub v: Vec<f64>,
}

impl GasState for ConstantState {
    fn dim(&self) -> usize {
        self.v.len()
    }
    fn at_time(&self, _t: f64) -> Result<PointEval<'_>> {
        Ok(Box::new(move |_x: &[f64]| Ok(Sample { rho: self.rho, p: self.p, v: self.v.clone() })))
    }
}

/// Body force per unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Forcing {
    None,
    /// F = −μV + l·V⊥ with V⊥ = (V₂, −V₁).
    Planar {
        mu: f64,
        l: f64,
    },
    /// F = −μV + δ·(V × ω).
    Spatial {
        mu: f64,
        delta: f64,
        omega: [f64; 3],
    },
}

impl Forcing {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match *self {
            Forcing::None => vec![0.0; v.len()],
            Forcing::Planar { mu, l } => vec![-mu * v[0] + l * v[1], -mu * v[1] - l * v[0]],
            Forcing::Spatial { mu, delta, omega: w } => vec![
                -mu * v[0] + delta * (v[1] * w[2] - v[2] * w[1]),
                -mu * v[1] + delta * (v[2] * w[0] - v[0] * w[2]),
                -mu * v[2] + delta * (v[0] * w[1] - v[1] * w[0]),
            ],
        }
    }

    pub fn friction(&self) -> f64 {
        match *self {
            Forcing::None => 0.0,
            Forcing::Planar { mu, .. } | Forcing::Spatial { mu, .. } => mu,
        }
    }
}

/// Tensor grid of residual nodes plus the coarse-level steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualGrid {
    pub times: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes_per_axis: usize,
    pub h_t: f64,
    pub h_x: f64,
}

impl ResidualGrid {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lo.len() != dim || self.hi.len() != dim {
            return Err(Error::param("grid", format!("box must have {dim} coordinates")));
        }
        if self.times.is_empty() || self.nodes_per_axis < 2 {
            return Err(Error::param("grid", "need at least one time and two nodes per axis"));
        }
        if !(self.h_t > 0.0 && self.h_x > 0.0) {
            return Err(Error::param("grid", "steps must be positive"));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a < b)) {
            return Err(Error::param("grid", "box bounds must satisfy lo < hi"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let dim = self.lo.len();
        let k = self.nodes_per_axis;
        let total = k.pow(dim as u32);
        (0..total)
            .map(|mut idx| {
                (0..dim)
                    .map(|d| {
                        let i = idx % k;
                        idx /= k;
                        self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (k - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Residuals at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResidual {
    pub t: f64,
    pub x: Vec<f64>,
    pub momentum: Vec<f64>,
    pub continuity: f64,
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub h_t: f64,
    pub h_x: f64,
    pub momentum_max: Vec<f64>,
    pub momentum_rms: Vec<f64>,
    pub continuity_max: f64,
    pub continuity_rms: f64,
    pub pressure_max: f64,
    pub pressure_rms: f64,
    pub total_max: f64,
    pub used: usize,
    /// Nodes below the density floor.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub grid: ResidualGrid,
    pub levels: Vec<LevelReport>,
    /// log₂ of the coarse/fine ratio of the largest residual.
    pub order: Option<f64>,
    pub order_momentum: Option<f64>,
    pub order_continuity: Option<f64>,
    pub order_pressure: Option<f64>,
}

/// Relative density floor for dividing the momentum equation by ρ.
pub const RHO_FLOOR: f64 = 1e-12;

fn d4(fp: f64, fm: f64, f2p: f64, f2m: f64, h: f64) -> f64 {
    (8.0 * (fp - fm) - (f2p - f2m)) / (12.0 * h)
}

fn node_residual(
    state: &dyn GasState,
    gamma: f64,
    forcing: &Forcing,
    t: f64,
    x: &[f64],
    h_t: f64,
    h_x: f64,
) -> Result<(Sample, NodeResidual)> {
    let n = x.len();
    // centre, then for each axis +h, −h, +2h, −2h
    let mut pts = vec![x.to_vec()];
    for i in 0..n {
        for s in [1.0, -1.0, 2.0, -2.0] {
            let mut y = x.to_vec();
            y[i] += s * h_x;
            pts.push(y);
        }
    }
    let sp = state.sample(t, &pts)?;
    let before = state.sample(t - h_t, &pts[..1])?;
    let after = state.sample(t + h_t, &pts[..1])?;
    let c = &sp[0];
    let at = |i: usize, k: usize| &sp[1 + 4 * i + k];
    let grad = |f: &dyn Fn(&Sample) -> f64| -> Vec<f64> {
        (0..n).map(|i| d4(f(at(i, 0)), f(at(i, 1)), f(at(i, 2)), f(at(i, 3)), h_x)).collect()
    };
    let dt = |f: &dyn Fn(&Sample) -> f64| (f(&after[0]) - f(&before[0])) / (2.0 * h_t);

    let grad_p = grad(&|s| s.p);
    let grad_rho = grad(&|s| s.rho);
    let div_v: f64 = (0..n).map(|i| d4(at(i, 0).v[i], at(i, 1).v[i], at(i, 2).v[i], at(i, 3).v[i], h_x)).sum();
    let force = forcing.apply(&c.v);
    let momentum: Vec<f64> = (0..n)
        .map(|k| {
            let dvk = grad(&|s| s.v[k]);
            let adv: f64 = (0..n).map(|j| c.v[j] * dvk[j]).sum();
            dt(&|s| s.v[k]) + adv + grad_p[k] / c.rho - force[k]
        })
        .collect();
    let continuity = dt(&|s| s.rho) + (0..n).map(|j| c.v[j] * grad_rho[j]).sum::<f64>() + c.rho * div_v;
    let pressure = dt(&|s| s.p) + (0..n).map(|j| c.v[j] * grad_p[j]).sum::<f64>() + gamma * c.p * div_v;
    Ok((c.clone(), NodeResidual { t, x: x.to_vec(), momentum, continuity, pressure }))
}

/// Residuals of all equations at every node for one step pair.
pub fn residual_nodes(
    state: &dyn GasState,
    gamma: f64,
    forcing: &Forcing,
    grid: &ResidualGrid,
    h_t: f64,
    h_x: f64,
) -> Result<Vec<(Sample, NodeResidual)>> {
    let pts = grid.points();
    let nodes: Vec<(f64, &Vec<f64>)> = grid.times.iter().flat_map(|&t| pts.iter().map(move |x| (t, x))).collect();
    nodes.par_iter().map(|(t, x)| node_residual(state, gamma, forcing, *t, x, h_t, h_x)).collect()
}

fn level(nodes: &[(Sample, NodeResidual)], dim: usize, h_t: f64, h_x: f64) -> LevelReport {
    let rho_max = nodes.iter().map(|(s, _)| s.rho).fold(0.0, f64::max);
    let floor = RHO_FLOOR * rho_max;
    let kept: Vec<&NodeResidual> = nodes.iter().filter(|(s, _)| s.rho > floor).map(|(_, r)| r).collect();
    let used = kept.len().max(1) as f64;
    let stat = |f: &dyn Fn(&NodeResidual) -> f64| {
        let max = kept.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
        let rms = (kept.iter().map(|r| f(r).powi(2)).sum::<f64>() / used).sqrt();
        (max, rms)
    };
    let mom: Vec<(f64, f64)> = (0..dim).map(|k| stat(&|r| r.momentum[k])).collect();
    let (cmax, crms) = stat(&|r| r.continuity);
    let (pmax, prms) = stat(&|r| r.pressure);
    let total = mom.iter().map(|m| m.0).fold(cmax.max(pmax), f64::max);
    LevelReport {
        h_t,
        h_x,
        momentum_max: mom.iter().map(|m| m.0).collect(),
        momentum_rms: mom.iter().map(|m| m.1).collect(),
        continuity_max: cmax,
        continuity_rms: crms,
        pressure_max: pmax,
        pressure_rms: prms,
        total_max: total,
        used: kept.len(),
        excluded: nodes.len() - kept.len(),
    }
}

fn order_of(coarse: f64, fine: f64) -> Option<f64> {
    // below this the residual is rounding noise and has no order
    const NOISE: f64 = 1e-12;
    (coarse > NOISE && fine > 0.0).then(|| (coarse / fine).log2())
}

/// Residuals of the continuity, pressure and momentum equations on the
/// grid with steps (h_t, h_x) and (h_t/2, h_x/2).
pub fn pde_residual(
    state: &dyn GasState,
    gamma: f64,
    forcing: &Forcing,
    grid: &ResidualGrid,
) -> Result<ResidualReport> {
    let dim = state.dim();
    grid.validate(dim)?;
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", "must exceed 1"));
    }
    if let Forcing::Planar { .. } = forcing {
        if dim != 2 {
            return Err(Error::param("forcing", "planar forcing needs a 2D state"));
        }
    }
    if let Forcing::Spatial { .. } = forcing {
        if dim != 3 {
            return Err(Error::param("forcing", "spatial forcing needs a 3D state"));
        }
    }
    let steps = [(grid.h_t, grid.h_x), (grid.h_t / 2.0, grid.h_x / 2.0)];
    let mut levels = Vec::new();
    for (ht, hx) in steps {
        let nodes = residual_nodes(state, gamma, forcing, grid, ht, hx)?;
        levels.push(level(&nodes, dim, ht, hx));
    }
    let (c, f) = (&levels[0], &levels[1]);
    let mom = |l: &LevelReport| l.momentum_max.iter().copied().fold(0.0, f64::max);
    Ok(ResidualReport {
        grid: grid.clone(),
        order: order_of(c.total_max, f.total_max),
        order_momentum: order_of(mom(c), mom(f)),
        order_continuity: order_of(c.continuity_max, f.continuity_max),
        order_pressure: order_of(c.pressure_max, f.pressure_max),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_state_has_no_residual() {
        let st = ConstantState { rho: 1.0, p: 1.0, v: vec![0.0, 0.0] };
        let grid = ResidualGrid {
            times: vec![0.0, 1.0],
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
            nodes_per_axis: 3,
            h_t: 0.1,
            h_x: 0.1,
        };
        let r = pde_residual(&st, 1.4, &Forcing::None, &grid).unwrap();
        assert_eq!(r.levels[0].total_max, 0.0);
        assert!(r.order.is_none());
    }

    #[test]
    fn planar_forcing_rotates_clockwise() {
        let f = Forcing::Planar { mu: 0.0, l: 2.0 }.apply(&[1.0, 0.0]);
        assert_eq!(f, vec![0.0, -2.0]);
    }
}
