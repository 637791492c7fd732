//! Kinematic states with velocity a(t)Λ(x), a = a₀/(1 + a₀t): density and
//! pressure are carried by the flow and obey the continuity and pressure
//! equations exactly, while the momentum equation is not imposed.

use crate::error::{Error, Result};
use crate::exact_solution::InitialData;
use crate::fields::{FieldFamily, FieldSpec};
use crate::reduced_ode::integrator::{self, FnSystem, IntegratorOptions};

use super::residual::{GasState, PointEval, Sample};

pub struct SeparatedSolution {
    pub field: FieldSpec,
    pub data: InitialData,
    pub a0: f64,
    /// Tolerance of the characteristic solves.
    pub tol: f64,
    /// Use the closed-form flow of the field family when there is one.
    pub closed_form: bool,
}

impl SeparatedSolution {
    pub fn new(field: FieldSpec, data: InitialData, a0: f64) -> Result<Self> {
        if !field.chart.is_euclidean() {
            return Err(Error::param("field", "separated states need a Euclidean chart"));
        }
        if field.dim() != data.n {
            return Err(Error::param("data", "dimension differs from the field"));
        }
        if !a0.is_finite() {
            return Err(Error::param("a0", "must be finite"));
        }
        Ok(Self { field, data, a0, tol: 1e-12, closed_form: true })
    }

    pub fn a(&self, t: f64) -> f64 {
        self.a0 / (1.0 + self.a0 * t)
    }

    /// τ(t) = ∫₀ᵗ a = ln(1 + a₀t).
    pub fn tau(&self, t: f64) -> Result<f64> {
        let s = 1.0 + self.a0 * t;
        if !(s > 0.0) {
            return Err(Error::param("t", format!("a(t) blows up at t = {}", -1.0 / self.a0)));
        }
        Ok(s.ln())
    }

    /// Follows Λ for parameter time `tau` (either sign) from x; returns the
    /// end point and ∫D over the path, measured in |τ|.
    fn follow(&self, x: &[f64], tau: f64) -> Result<(Vec<f64>, f64)> {
        let n = x.len();
        if tau == 0.0 {
            return Ok((x.to_vec(), 0.0));
        }
        if self.closed_form {
            match &self.field.family {
                FieldFamily::IdentityR => {
                    let e = tau.exp();
                    return Ok((x.iter().map(|v| v * e).collect(), n as f64 * tau.abs()));
                }
                FieldFamily::PlaneShear { k, phi } => {
                    // ξ = x₂ − Kx₁ is invariant and x₁ + φ(ξ) grows like e^τ; D ≡ 1
                    let xi = x[1] - k * x[0];
                    let f = phi.value(xi);
                    let x1 = (x[0] + f) * tau.exp() - f;
                    return Ok((vec![x1, xi + k * x1], tau.abs()));
                }
                _ => {}
            }
        }
        let s = tau.signum();
        let field = &self.field;
        let sys = FnSystem {
            dim: n + 1,
            f: move |_t: f64, y: &[f64], dy: &mut [f64]| match (field.eval(&y[..n]), field.jacobian(&y[..n])) {
                (Ok(l), Ok(j)) => {
                    for i in 0..n {
                        dy[i] = s * l[i];
                    }
                    dy[n] = j.trace();
                }
                _ => dy.iter_mut().for_each(|v| *v = f64::NAN),
            },
        };
        let mut y0 = x.to_vec();
        y0.push(0.0);
        let sol = integrator::solve(&sys, 0.0, &y0, tau.abs(), &IntegratorOptions::new(self.tol))?;
        if sol.t_final() < tau.abs() {
            return Err(Error::NonFinite { context: "characteristic of the separated field".into() });
        }
        let y = sol.final_state();
        Ok((y[..n].to_vec(), y[n]))
    }

    /// Label at t = 0 of the particle at x, and ∫₀^τ D along its path.
    pub fn pullback(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let tau = self.tau(t)?;
        let (xi, path) = self.follow(x, -tau)?;
        Ok((xi, tau.signum() * path))
    }

    pub fn push_forward(&self, t: f64, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.follow(xi, self.tau(t)?)?.0)
    }
}

impl GasState for SeparatedSolution {
    fn dim(&self) -> usize {
        self.data.n
    }

    fn at_time(&self, t: f64) -> Result<PointEval<'_>> {
        let a = self.a(t);
        self.tau(t)?;
        Ok(Box::new(move |x: &[f64]| {
            let (xi, int_d) = self.pullback(t, x)?;
            let lam = self.field.eval(x)?;
            Ok(Sample {
                rho: (self.data.rho0)(&xi) * (-int_d).exp(),
                p: (self.data.p0)(&xi) * (-self.data.gamma * int_d).exp(),
                v: lam.iter().map(|l| a * l).collect(),
            })
        }))
    }

    fn support_box(&self, t: f64, radius: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let k = 9usize;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        // grid points on the faces of the Lagrangian box
        for face in 0..2 * n {
            let (axis, side) = (face / 2, if face % 2 == 0 { -radius } else { radius });
            let others = n - 1;
            for idx in 0..k.pow(others as u32) {
                let mut xi = vec![0.0; n];
                let mut rem = idx;
                for (d, v) in xi.iter_mut().enumerate() {
                    if d == axis {
                        *v = side;
                    } else {
                        *v = -radius + 2.0 * radius * (rem % k) as f64 / (k - 1) as f64;
                        rem /= k;
                    }
                }
                let y = self.push_forward(t, &xi)?;
                for d in 0..n {
                    lo[d] = lo[d].min(y[d]);
                    hi[d] = hi[d].max(y[d]);
                }
            }
        }
        for d in 0..n {
            let pad = 0.05 * (hi[d] - lo[d]);
            lo[d] -= pad;
            hi[d] += pad;
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
