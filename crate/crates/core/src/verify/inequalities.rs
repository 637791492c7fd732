//! The interpolation inequality bounding ∫f by ∫f^γ and ∫|x|²f, and the
//! blow-up criterion for F(t).

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::geometry::DomainBox;
use crate::quadrature::{integrate_box, QuadTolerance};

use super::functionals::FunctionalSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma51Report {
    pub integral: f64,
    pub integral_pow: f64,
    pub second_moment: f64,
    pub constant: f64,
    pub lhs: f64,
    /// C·(∫f^γ)^{2/s}·(∫|x|²f)^{n(γ−1)/s}, s = (n+2)γ − n.
    pub rhs: f64,
    pub margin: f64,
    /// Same with the exponent 2γ/s on ∫f^γ; not invariant under f → cf.
    pub rhs_literal: f64,
    pub margin_literal: f64,
}

/// C = g_*^{n(γ−1)/(2s)}·(k^{n(γ−1)/s} + k^{−2γ/s}), k = 2γ/(n(γ−1)).
pub fn lemma51_constant(gamma: f64, n: usize, g_star: f64) -> f64 {
    let nf = n as f64;
    let s = (nf + 2.0) * gamma - nf;
    let k = 2.0 * gamma / (nf * (gamma - 1.0));
    g_star.powf(nf * (gamma - 1.0) / (2.0 * s)) * (k.powf(nf * (gamma - 1.0) / s) + k.powf(-2.0 * gamma / s))
}

/// Both sides of the inequality for f on [−R, R]^n.
pub fn lemma51_check(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    gamma: f64,
    n: usize,
    radius: f64,
    tol: f64,
    g_star: f64,
) -> Result<Lemma51Report> {
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", "must exceed 1"));
    }
    if !(1..=3).contains(&n) {
        return Err(Error::param("n", "must be 1, 2 or 3"));
    }
    if !(g_star > 0.0) {
        return Err(Error::param("g_star", "must be positive"));
    }
    if !(radius > 0.0 && tol > 0.0) {
        return Err(Error::param("quad", "radius and tolerance must be positive"));
    }
    let negative = AtomicBool::new(false);
    let integrand = |x: &[f64]| {
        let v = f(x);
        if v < 0.0 {
            negative.store(true, Ordering::Relaxed);
        }
        let v = v.max(0.0);
        vec![v, v.powf(gamma), v * x.iter().map(|c| c * c).sum::<f64>()]
    };
    let lo = vec![-radius; n];
    let hi = vec![radius; n];
    let q = integrate_box(&integrand, &lo, &hi, 3, &QuadTolerance::new(tol * 1e-3, tol));
    if negative.load(Ordering::Relaxed) {
        return Err(Error::param("f", "must be nonnegative"));
    }
    let (i1, ig, i2) = (q.values[0], q.values[1], q.values[2]);

    // crude tail bound from the integrands on the box faces
    let k = 11usize;
    let mut edge_max = [0.0f64; 3];
    for face in 0..2 * n {
        let axis = face / 2;
        for idx in 0..k.pow(n as u32 - 1) {
            let mut x = vec![0.0; n];
            let mut rem = idx;
            for (d, xd) in x.iter_mut().enumerate() {
                if d == axis {
                    *xd = if face % 2 == 0 { -radius } else { radius };
                } else {
                    *xd = -radius + 2.0 * radius * (rem % k) as f64 / (k - 1) as f64;
                    rem /= k;
                }
            }
            let v = integrand(&x);
            for c in 0..3 {
                edge_max[c] = edge_max[c].max(v[c]);
            }
        }
    }
    let shell = 2.0 * n as f64 * (2.0 * radius).powi(n as i32 - 1) * radius;
    for (c, total) in [i1, ig, i2].into_iter().enumerate() {
        if edge_max[c] * shell > 1e-6 * total {
            return Err(Error::InconclusiveQuadrature {
                reason: "integrand does not decay inside the box".into(),
                suggested_radius: 2.0 * radius,
            });
        }
    }

    let nf = n as f64;
    let s = (nf + 2.0) * gamma - nf;
    let c = lemma51_constant(gamma, n, g_star);
    let moment = i2.powf(nf * (gamma - 1.0) / s);
    let rhs = c * ig.powf(2.0 / s) * moment;
    let rhs_literal = c * ig.powf(2.0 * gamma / s) * moment;
    Ok(Lemma51Report {
        integral: i1,
        integral_pow: ig,
        second_moment: i2,
        constant: c,
        lhs: i1,
        rhs,
        margin: rhs - i1,
        rhs_literal,
        margin_literal: rhs_literal - i1,
    })
}

/// Inputs of the blow-up criterion for F(t) = ½∫ρ(∇|Λ|², V).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityInput {
    pub f0: f64,
    /// sup |Λ|
    pub lambda_plus: f64,
    /// |inf D|, zero when D ≥ 0
    pub d_minus: f64,
    pub mass: f64,
    pub energy: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityReport {
    pub threshold: f64,
    /// F(0) strictly above the threshold.
    pub criterion_met: bool,
    /// D₋ ≤ ME/(γ−1), without which the criterion cannot hold.
    pub necessary_ok: bool,
    pub necessary_bound: f64,
}

pub fn singularity_criterion(input: &SingularityInput) -> Result<SingularityReport> {
    let SingularityInput { f0, lambda_plus, d_minus, mass, energy, gamma } = *input;
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", "must exceed 1"));
    }
    if !(lambda_plus >= 0.0 && d_minus >= 0.0 && mass > 0.0 && energy >= 0.0) || !f0.is_finite() {
        return Err(Error::param("singularity", "need Λ₊, D₋, E ≥ 0, M > 0 and finite F(0)"));
    }
    let threshold = lambda_plus * ((gamma - 1.0) * d_minus * mass * energy).sqrt();
    let necessary_bound = mass * energy / (gamma - 1.0);
    Ok(SingularityReport {
        threshold,
        criterion_met: f0 > threshold,
        necessary_ok: d_minus <= necessary_bound,
        necessary_bound,
    })
}

/// sup|Λ| and |inf D| (0 when D ≥ 0) sampled on a uniform grid.
pub fn field_bounds(field: &FieldSpec, domain: &DomainBox, nodes: usize) -> Result<(f64, f64)> {
    let n = field.dim();
    if domain.lo.len() != n || nodes < 2 {
        return Err(Error::param("domain", "box must match the field dimension with at least 2 nodes"));
    }
    let mut lam_max: f64 = 0.0;
    let mut d_min = f64::INFINITY;
    for idx in 0..nodes.pow(n as u32) {
        let mut rem = idx;
        let x: Vec<f64> = (0..n)
            .map(|d| {
                let i = rem % nodes;
                rem /= nodes;
                domain.lo[d] + (domain.hi[d] - domain.lo[d]) * i as f64 / (nodes - 1) as f64
            })
            .collect();
        let l = field.eval(&x)?;
        lam_max = lam_max.max(l.iter().map(|v| v * v).sum::<f64>().sqrt());
        d_min = d_min.min(crate::geometry::divergence(&field.chart, field, &x)?);
    }
    Ok((lam_max, (-d_min).max(0.0)))
}

/// Criterion inputs read off a snapshot at t = 0 with the Λ-weighted
/// functionals present.
pub fn singularity_from_snapshot(
    snap: &FunctionalSnapshot,
    lambda_plus: f64,
    d_minus: f64,
    gamma: f64,
) -> Result<SingularityReport> {
    let f0 = snap.get("FL");
    if f0.is_nan() {
        return Err(Error::param("snapshot", "needs the separated-form functionals"));
    }
    singularity_criterion(&SingularityInput {
        f0,
        lambda_plus,
        d_minus,
        mass: snap.get("M"),
        energy: snap.get("E"),
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_function_gives_zero_margin() {
        let r = lemma51_check(&|_x: &[f64]| 0.0, 1.4, 2, 3.0, 1e-10, 1.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn nonnegative_divergence_has_zero_threshold() {
        let inp = SingularityInput { f0: 1e-9, lambda_plus: 3.0, d_minus: 0.0, mass: 1.0, energy: 2.0, gamma: 1.4 };
        let r = singularity_criterion(&inp).unwrap();
        assert_eq!(r.threshold, 0.0);
        assert!(r.criterion_met);
    }

    #[test]
    fn boundary_is_not_met() {
        let mut inp = SingularityInput { f0: 0.0, lambda_plus: 2.0, d_minus: 0.5, mass: 1.0, energy: 2.0, gamma: 1.4 };
        inp.f0 = singularity_criterion(&inp).unwrap().threshold;
        let r = singularity_criterion(&inp).unwrap();
        assert_eq!(r.threshold, inp.f0);
        assert!(!r.criterion_met);
    }
}
