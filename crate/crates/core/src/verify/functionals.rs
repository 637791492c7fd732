//! Integral functionals of a gas state by quadrature, and residuals of the
//! relations between their time derivatives.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::residual::{Forcing, GasState};
use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::quadrature::{integrate_box, QuadTolerance};

/// Truncation and accuracy of the functional quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSpec {
    /// Lagrangian half-width; sized from the data decay when absent.
    pub radius: Option<f64>,
    pub tol: f64,
    /// Largest tolerated mass outside the truncated box.
    pub tail: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { radius: None, tol: 1e-10, tail: 1e-10 }
    }
}

/// Velocity V = a(t)Λ(x) with a known Λ; enables the Λ-weighted
/// functionals. `euler` marks states that also satisfy the momentum
/// equation, not just the transport of ρ and p.
#[derive(Clone, Copy)]
pub struct SeparatedForm<'a> {
    pub field: &'a FieldSpec,
    pub a: &'a (dyn Fn(f64) -> f64 + Sync),
    pub euler: bool,
}

/// Extra inputs to a snapshot.
#[derive(Clone, Copy)]
pub struct Extras<'a> {
    /// Rotation axis for the 3D functionals.
    pub omega: [f64; 3],
    pub separated: Option<SeparatedForm<'a>>,
}

impl Default for Extras<'_> {
    fn default() -> Self {
        Self { omega: [0.0, 0.0, 1.0], separated: None }
    }
}

/// Largest power of D among the Q_m functionals.
pub const Q_MAX: usize = 6;
/// Q_m′ is checked for m = 1..=RATE_MAX.
pub const RATE_MAX: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalSnapshot {
    pub t: f64,
    pub dim: usize,
    pub radius: f64,
    pub values: BTreeMap<String, f64>,
    pub errors: BTreeMap<String, f64>,
    pub evaluations: usize,
}

impl FunctionalSnapshot {
    /// Value by name; NaN when the functional was not computed.
    pub fn get(&self, name: &str) -> f64 {
        self.values.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn error(&self, name: &str) -> f64 {
        self.errors.get(name).copied().unwrap_or(f64::NAN)
    }
}

fn names(dim: usize, separated: bool) -> Vec<String> {
    let base: &[&str] = if dim == 2 {
        &["M", "G", "N1", "N2", "I1", "I2", "F1", "F2", "Ek", "P", "Gx", "Gy", "Gxy"]
    } else {
        &["M", "G", "N1", "N2", "N3", "I1", "I2", "I3", "F1", "F2t", "F3", "H", "Hflux", "Ek", "P"]
    };
    let mut out: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    if separated {
        out.extend(["GL1", "GL2", "GL3", "FL"].iter().map(|s| s.to_string()));
        out.extend((0..=Q_MAX).map(|m| format!("Q{m}")));
        if dim == 2 {
            out.push("N".into());
            out.push("Jterm".into());
            out.extend((1..=RATE_MAX).map(|m| format!("R{m}")));
            out.extend((1..=RATE_MAX).map(|m| format!("L{m}")));
        }
    }
    out
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Picks the truncation radius and checks it against the decay.
fn truncation(state: &dyn GasState, quad: &QuadSpec) -> Result<f64> {
    let needed = state.tail_radius(quad.tail);
    match (quad.radius, needed) {
        (Some(r), Some(nr)) if r < nr => Err(Error::InconclusiveQuadrature {
            reason: format!("tail bound at radius {r} exceeds {}", quad.tail),
            suggested_radius: nr,
        }),
        (Some(r), _) if r > 0.0 => Ok(r),
        (Some(_), _) => Err(Error::param("radius", "must be positive")),
        (None, Some(nr)) => Ok(nr),
        (None, None) => Err(Error::param("radius", "required when the data decay is unknown")),
    }
}

/// Quadrature of every functional the state supports at time t.
pub fn functionals(
    state: &dyn GasState,
    gamma: f64,
    t: f64,
    quad: &QuadSpec,
    extras: &Extras<'_>,
) -> Result<FunctionalSnapshot> {
    let dim = state.dim();
    if !(2..=3).contains(&dim) {
        return Err(Error::param("dim", "functionals need a 2D or 3D state"));
    }
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", "must exceed 1"));
    }
    if !(quad.tol > 0.0 && quad.tail > 0.0) {
        return Err(Error::param("quad", "tolerances must be positive"));
    }
    let sep = extras.separated;
    if let Some(s) = sep {
        if s.field.dim() != dim || !s.field.chart.is_euclidean() {
            return Err(Error::param("field", "needs a Euclidean field of the state's dimension"));
        }
    }
    let radius = truncation(state, quad)?;
    let (lo, hi) = state.support_box(t, radius)?;
    let eval = state.at_time(t)?;
    let labels = names(dim, sep.is_some());
    let ncomp = labels.len();
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let omega = extras.omega;
    let a_t = sep.map(|s| (s.a)(t));

    let integrand = |x: &[f64]| -> Vec<f64> {
        let fail = |e: Error| {
            failure.lock().unwrap().get_or_insert(e);
            vec![0.0; ncomp]
        };
        let s = match eval(x) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let (rho, p, v) = (s.rho, s.p, &s.v);
        let r2 = dot(x, x);
        let v2 = dot(v, v);
        let mut out = Vec::with_capacity(ncomp);
        out.push(rho);
        out.push(0.5 * rho * r2);
        if dim == 2 {
            out.extend([rho * x[0], rho * x[1], rho * v[0], rho * v[1]]);
            out.push(rho * dot(v, x));
            out.push(rho * (v[0] * x[1] - v[1] * x[0]));
            out.push(0.5 * rho * v2);
            out.push(p);
            out.extend([0.5 * rho * x[0] * x[0], 0.5 * rho * x[1] * x[1], 0.5 * rho * x[0] * x[1]]);
        } else {
            out.extend([rho * x[0], rho * x[1], rho * x[2], rho * v[0], rho * v[1], rho * v[2]]);
            out.push(rho * dot(v, x));
            let wr = cross(&omega, x);
            let vw = cross(v, &omega);
            out.push(rho * dot(v, &wr));
            out.push(rho * dot(&vw, &wr));
            out.push(0.5 * rho * dot(&wr, &wr));
            // ∇½|ω×r|² = |ω|²r − (ω·r)ω
            let w2 = dot(&omega, &omega);
            let wx = dot(&omega, x);
            let grad_h: Vec<f64> = (0..3).map(|i| w2 * x[i] - wx * omega[i]).collect();
            out.push(rho * dot(v, &grad_h));
            out.push(0.5 * rho * v2);
            out.push(p);
        }
        if let Some(sf) = sep {
            let (lam, jac) = match (sf.field.eval(x), sf.field.jacobian(x)) {
                (Ok(l), Ok(j)) => (l, j),
                (Err(e), _) | (_, Err(e)) => return fail(e),
            };
            let l2 = dot(&lam, &lam);
            let ln = l2.sqrt();
            out.extend([0.5 * rho * ln, 0.5 * rho * l2, 0.5 * rho * l2 * ln]);
            // ½∇|Λ|² = (∂Λ)ᵀΛ
            let half_grad: Vec<f64> = (0..dim).map(|i| (0..dim).map(|k| lam[k] * jac[(k, i)]).sum()).collect();
            out.push(rho * dot(&half_grad, v));
            let d = jac.trace();
            out.extend((0..=Q_MAX).map(|m| p * d.powi(m as i32)));
            if dim == 2 {
                out.push(p * (gamma * d * d - 3.0 * d + 2.0));
                let j = jac[(0, 1)] - jac[(1, 0)];
                out.push(2.0 * rho * j * lam[0] * lam[1] * (1.0 - d));
                for m in 1..=RATE_MAX {
                    let mf = m as f64;
                    let quad_part = (1.0 + (gamma - 1.0) / mf) * d * d - 3.0 * d + 2.0;
                    out.push(p * d.powi(m as i32 - 1) * quad_part);
                }
                for m in 1..=RATE_MAX {
                    let mf = m as f64;
                    out.push(p * ((1.0 + (gamma - 1.0) / mf) * d * d - 3.0 * d + 2.0));
                }
            }
        }
        debug_assert_eq!(out.len(), ncomp);
        out
    };

    let tol = QuadTolerance::new(quad.tol * 1e-2, quad.tol);
    let q = integrate_box(&integrand, &lo, &hi, ncomp, &tol);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    if !q.converged {
        return Err(Error::InconclusiveQuadrature {
            reason: "interval budget exhausted before the tolerance was met".into(),
            suggested_radius: radius,
        });
    }
    let tail = state.tail_at(radius).unwrap_or(0.0);
    let mut values = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for (i, name) in labels.iter().enumerate() {
        values.insert(name.clone(), q.values[i]);
        // the decay constant is not known; allow an order of magnitude
        errors.insert(name.clone(), q.errors[i] + 10.0 * tail * q.values[i].abs());
    }
    let pv = values.remove("P").unwrap();
    let pe = errors.remove("P").unwrap();
    let ep = pv / (gamma - 1.0);
    values.insert("Ep".into(), ep);
    errors.insert("Ep".into(), pe / (gamma - 1.0));
    values.insert("E".into(), values["Ek"] + ep);
    errors.insert("E".into(), errors["Ek"] + errors["Ep"]);
    if dim == 2 {
        let (gx, gy, gxy) = (values["Gx"], values["Gy"], values["Gxy"]);
        values.insert("Delta".into(), gx * gy - gxy * gxy);
        let de = errors["Gx"] * gy.abs() + errors["Gy"] * gx.abs() + 2.0 * errors["Gxy"] * gxy.abs();
        errors.insert("Delta".into(), de);
    }
    if let Some(a) = a_t {
        values.insert("a".into(), a);
        errors.insert("a".into(), 0.0);
    }
    Ok(FunctionalSnapshot { t, dim, radius, values, errors, evaluations: q.evaluations })
}

/// One relation at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub t: f64,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Printed form known to disagree with the derivation; reported but
    /// excluded from `max_residual`.
    pub literal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityTable {
    pub step: f64,
    pub rows: Vec<IdentityRow>,
    pub max_residual: f64,
    /// E nonincreasing over the sampled times, up to quadrature noise.
    pub energy_monotone: bool,
}

impl IdentityTable {
    pub fn worst(&self, name: &str) -> f64 {
        self.rows.iter().filter(|r| r.name == name).map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Fourth-order central difference from values at t−2h, t−h, t+h, t+2h.
fn ddt(f: [f64; 5], h: f64) -> f64 {
    (8.0 * (f[3] - f[1]) - (f[4] - f[0])) / (12.0 * h)
}

struct Rows<'a> {
    t: f64,
    floor: f64,
    out: &'a mut Vec<IdentityRow>,
}

impl Rows<'_> {
    /// Equality lhs = Σ terms, scaled by the larger of its sides.
    fn eq(&mut self, name: &str, lhs: f64, terms: &[f64], literal: bool) {
        self.eq_scaled(name, lhs, terms, 0.0, literal)
    }

    /// As `eq`, with a reference magnitude for relations whose sides may
    /// both vanish.
    fn eq_scaled(&mut self, name: &str, lhs: f64, terms: &[f64], reference: f64, literal: bool) {
        let rhs: f64 = terms.iter().sum();
        let scale = lhs.abs().max(terms.iter().map(|v| v.abs()).sum()).max(reference.abs()).max(self.floor);
        self.out.push(IdentityRow {
            t: self.t,
            name: name.into(),
            lhs,
            rhs,
            residual: (lhs - rhs).abs() / scale,
            literal,
        });
    }

    /// d/dt of a quantity that should stay constant.
    fn constant(&mut self, name: &str, rate: f64, value: f64) {
        let scale = value.abs().max(self.floor);
        self.out.push(IdentityRow {
            t: self.t,
            name: name.into(),
            lhs: rate,
            rhs: 0.0,
            residual: rate.abs() / scale,
            literal: false,
        });
    }

    fn at_least(&mut self, name: &str, lhs: f64, bound: f64) {
        let scale = lhs.abs().max(bound.abs()).max(self.floor);
        self.out.push(IdentityRow {
            t: self.t,
            name: name.into(),
            lhs,
            rhs: bound,
            residual: (bound - lhs).max(0.0) / scale,
            literal: false,
        });
    }
}

/// Central-difference time derivatives of the functionals against the
/// right-hand sides of their evolution laws, at each time in `times`.
pub fn functional_identities(
    state: &dyn GasState,
    gamma: f64,
    forcing: &Forcing,
    times: &[f64],
    h: f64,
    quad: &QuadSpec,
    extras: &Extras<'_>,
) -> Result<IdentityTable> {
    if !(h > 0.0) {
        return Err(Error::param("h", "must be positive"));
    }
    if times.is_empty() {
        return Err(Error::param("times", "need at least one time"));
    }
    let dim = state.dim();
    let mut extras = *extras;
    if let Forcing::Spatial { omega, .. } = forcing {
        extras.omega = *omega;
    }
    let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let jobs: Vec<f64> = times.iter().flat_map(|t| offsets.iter().map(move |k| t + k * h)).collect();
    let snaps: Vec<FunctionalSnapshot> =
        jobs.par_iter().map(|&s| functionals(state, gamma, s, quad, &extras)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut energies = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let win = &snaps[5 * ti..5 * ti + 5];
        let c = &win[2];
        let d = |name: &str| ddt([0, 1, 2, 3, 4].map(|i| win[i].get(name)), h);
        let g = |name: &str| c.get(name);
        let floor = 1e-9 * (g("M").abs() + g("G").abs() + g("E").abs());
        energies.push(g("E"));
        let mut r = Rows { t, floor, out: &mut rows };
        let (mu, l, delta) = match *forcing {
            Forcing::None => (0.0, 0.0, 0.0),
            Forcing::Planar { mu, l } => (mu, l, 0.0),
            Forcing::Spatial { mu, delta, .. } => (mu, 0.0, delta),
        };
        // kinematic states carry ρ and p exactly but skip the momentum equation
        let momentum = extras.separated.is_none_or(|sf| sf.euler);
        r.eq("G'=F1", d("G"), &[g("F1")], false);
        if momentum {
            r.eq_scaled("E'=-2mu Ek", d("E"), &[-2.0 * mu * g("Ek")], g("E"), false);
        }
        if dim == 2 {
            r.eq("N1'=I1", d("N1"), &[g("I1")], false);
            r.eq("N2'=I2", d("N2"), &[g("I2")], false);
        } else {
            for i in 0..3 {
                r.eq(&format!("N{0}'=I{0}", i + 1), d(&format!("N{}", i + 1)), &[g(&format!("I{}", i + 1))], false);
            }
        }
        if momentum && dim == 2 {
            r.eq("I1'=-mu I1+l I2", d("I1"), &[-mu * g("I1"), l * g("I2")], false);
            r.eq("I2'=-l I1-mu I2", d("I2"), &[-l * g("I1"), -mu * g("I2")], false);
            r.eq(
                "F1'=2Ek+2(gamma-1)Ep-l F2-mu F1",
                d("F1"),
                &[2.0 * g("Ek"), 2.0 * (gamma - 1.0) * g("Ep"), -l * g("F2"), -mu * g("F1")],
                false,
            );
            r.eq("F2'=l F1-mu F2", d("F2"), &[l * g("F1"), -mu * g("F2")], false);
        } else if momentum {
            let w = extras.omega;
            let ivec = [g("I1"), g("I2"), g("I3")];
            let ixw = cross(&ivec, &w);
            for i in 0..3 {
                r.eq(
                    &format!("I{}'=-mu I+delta IxW", i + 1),
                    d(&format!("I{}", i + 1)),
                    &[-mu * ivec[i], delta * ixw[i]],
                    false,
                );
            }
            r.eq(
                "F1'=2Ek+3(gamma-1)Ep+delta F2t-mu F1",
                d("F1"),
                &[2.0 * g("Ek"), 3.0 * (gamma - 1.0) * g("Ep"), delta * g("F2t"), -mu * g("F1")],
                false,
            );
            r.eq("F2t'=delta F3-mu F2t", d("F2t"), &[delta * g("F3"), -mu * g("F2t")], false);
        }
        if dim == 3 {
            r.eq("H'=Hflux", d("H"), &[g("Hflux")], false);
            r.eq("H'=0", d("H"), &[0.0], true);
        }
        if let Some(sf) = extras.separated {
            let a = (sf.a)(t);
            let q1 = g("Q1");
            r.eq("G'=F", d("GL2"), &[g("FL")], false);
            r.eq("F=2aG", g("FL"), &[2.0 * a * g("GL2")], false);
            for m in 1..=3 {
                let name = format!("GL{m}");
                r.eq(&format!("G{m}'={m}aG{m}"), d(&name), &[m as f64 * a * g(&name)], false);
            }
            for (m, lo) in [(1usize, 2usize), (3, 2), (1, 3)] {
                let e = -(m as f64) / lo as f64;
                let k = |s: &FunctionalSnapshot| s.get(&format!("GL{m}")) * s.get(&format!("GL{lo}")).powf(e);
                let rate = ddt([0, 1, 2, 3, 4].map(|i| k(&win[i])), h);
                r.constant(&format!("G{m}G{lo}^(-{m}/{lo}) const"), rate, k(c));
            }
            r.eq("Ep'=-aQ", d("Ep"), &[-a * q1], false);
            r.eq("Ep'=-(gamma-1)aQ", d("Ep"), &[-(gamma - 1.0) * a * q1], true);
            r.eq("Ek=a^2G", g("Ek"), &[a * a * g("GL2")], false);
            if sf.euler {
                r.eq("F'=2Ek+Q", d("FL"), &[2.0 * g("Ek"), q1], false);
                r.eq("Ek'=-Ep'", d("Ek"), &[-d("Ep")], false);
                let e_sep = |s: &FunctionalSnapshot| s.get("Ep") + (sf.a)(s.t).powi(2) * s.get("GL2");
                let rate = ddt([0, 1, 2, 3, 4].map(|i| e_sep(&win[i])), h);
                r.constant("Ep+a^2G const", rate, e_sep(c));
            }
            if dim == 2 {
                r.eq("Ek=a^2G+Jterm", g("Ek"), &[a * a * g("GL2"), g("Jterm")], false);
                for m in 1..=RATE_MAX {
                    let mf = m as f64;
                    let qm = format!("Q{m}");
                    let lhs = d(&qm);
                    r.eq(&format!("Q{m}'"), lhs, &[-mf * a * g(&format!("R{m}"))], false);
                    if m > 1 {
                        r.eq(&format!("Q{m}' without D^(m-1)"), lhs, &[-mf * a * g(&format!("L{m}"))], true);
                    }
                    let coef = 1.0 + (gamma - 1.0) / mf;
                    let rec = -mf * a * (coef * g(&format!("Q{}", m + 1)) + 3.0 * g(&qm) - 2.0);
                    r.eq(&format!("Q{m}' recurrence"), lhs, &[rec], true);
                    if m % 2 == 1 && mf < 8.0 * (gamma - 1.0) && a != 0.0 {
                        let ok = lhs.signum() == -a.signum();
                        r.out.push(IdentityRow {
                            t,
                            name: format!("sign Q{m}'=-sign a"),
                            lhs: lhs.signum(),
                            rhs: -a.signum(),
                            residual: if ok { 0.0 } else { 1.0 },
                            literal: false,
                        });
                    }
                }
                r.eq("Q1'=-aN", d("Q1"), &[-a * g("N")], false);
                if gamma > 9.0 / 8.0 {
                    let alpha0 = (8.0 * gamma - 9.0) * (gamma - 1.0) / (4.0 * gamma);
                    r.at_least("N>=alpha0 Ep", g("N"), alpha0 * g("Ep"));
                }
            }
        }
    }
    let max_residual = rows.iter().filter(|r| !r.literal).map(|r| r.residual).fold(0.0, f64::max);
    let mono = forcing.friction() < 0.0 || energies.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1e-300));
    Ok(IdentityTable { step: h, rows, max_residual, energy_monotone: mono })
}
