//! Time-independent vector fields Λ and the conditions (A1)/(A2) that let
//! V = a(t)Λ reduce the transport equation to an ODE.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{covariant_derivative, ChartMetric, DomainBox};
use crate::reduced_ode::integrator::{self, EventKind, FnSystem, IntegratorOptions, OdeSystem};
use crate::reduced_ode::Trajectory;

/// Margin kept away from the edge of the sphere strip, in units of sin θ.
pub const STRIP_MARGIN: f64 = 1e-4;

/// Smooth scalar profiles of one variable: φ, F, Ψ₁ and the like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    Linear {
        slope: f64,
        intercept: f64,
    },
    Sin {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// amplitude · tanh(scale · s)
    Tanh {
        amplitude: f64,
        scale: f64,
    },
    /// constant + Σ cos[k−1]·cos(k s) + sin[k−1]·sin(k s)
    TrigPoly {
        constant: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: 0.0 }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.derivatives(s).0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.derivatives(s).1
    }

    /// (f, f′, f″) at s.
    pub fn derivatives(&self, s: f64) -> (f64, f64, f64) {
        match self {
            Profile::Constant { value } => (*value, 0.0, 0.0),
            Profile::Linear { slope, intercept } => (slope * s + intercept, *slope, 0.0),
            Profile::Sin { amplitude, frequency, phase } => {
                let (sn, cs) = (frequency * s + phase).sin_cos();
                (amplitude * sn, amplitude * frequency * cs, -amplitude * frequency * frequency * sn)
            }
            Profile::Tanh { amplitude, scale } => {
                let th = (scale * s).tanh();
                let sech2 = 1.0 - th * th;
                (amplitude * th, amplitude * scale * sech2, -2.0 * amplitude * scale * scale * th * sech2)
            }
            Profile::TrigPoly { constant, cos, sin } => {
                let (mut f, mut d1, mut d2) = (*constant, 0.0, 0.0);
                for (k, (a, b)) in cos.iter().zip(sin.iter().chain(std::iter::repeat(&0.0))).enumerate() {
                    let w = (k + 1) as f64;
                    let (sn, cs) = (w * s).sin_cos();
                    f += a * cs + b * sn;
                    d1 += w * (b * cs - a * sn);
                    d2 -= w * w * (a * cs + b * sn);
                }
                for (k, b) in sin.iter().enumerate().skip(cos.len()) {
                    let w = (k + 1) as f64;
                    let (sn, cs) = (w * s).sin_cos();
                    f += b * sn;
                    d1 += w * b * cs;
                    d2 -= w * w * b * sn;
                }
                (f, d1, d2)
            }
        }
    }
}

/// Which branch of the square root in the sphere-strip solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FieldFamily {
    IdentityR,
    PlaneShear { k: f64, phi: Profile },
    SphereStrip { c: f64, psi1: Profile, branch: Branch, radius: f64 },
    ImplicitCharacteristic { f: Profile, datum: Profile, with_source: bool },
    Custom,
}

pub type VectorFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
/// Source term Ξ(x₁, x₂, |Λ|) of the generalised condition ΞΛ = Λ·∇Λ.
pub type SourceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A vector field on a chart, in contravariant components.
#[derive(Clone)]
pub struct FieldSpec {
    pub chart: ChartMetric,
    pub family: FieldFamily,
    eval: VectorFn,
    jacobian: Option<MatrixFn>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("chart", &self.chart)
            .field("family", &self.family)
            .field("closed_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl FieldSpec {
    pub fn custom(chart: ChartMetric, eval: VectorFn) -> Self {
        Self { chart, family: FieldFamily::Custom, eval, jacobian: None }
    }

    pub fn with_jacobian(mut self, jacobian: MatrixFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn has_closed_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.chart.check_point(x)?;
        let v = (self.eval)(x)?;
        if v.len() != self.dim() || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { context: format!("field value at {x:?}") });
        }
        Ok(v)
    }

    /// Partial derivatives ∂_jΛ^i (not covariant), closed form when
    /// available.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => {
                self.chart.check_point(x)?;
                j(x)
            }
            None => self.fd_jacobian(x),
        }
    }

    /// Fourth-order central differences of `eval`.
    pub fn fd_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = 1e-3 * x[j].abs().max(1.0);
            let mut sample = |off: f64| -> Result<Vec<f64>> {
                xp[j] = x[j] + off;
                let v = (self.eval)(&xp);
                xp[j] = x[j];
                v
            };
            let p2 = sample(2.0 * h)?;
            let p1 = sample(h)?;
            let m1 = sample(-h)?;
            let m2 = sample(-2.0 * h)?;
            for i in 0..n {
                m[(i, j)] = (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h);
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("finite-difference Jacobian at {x:?}") });
        }
        Ok(m)
    }
}

/// Λ = r on a Euclidean chart.
pub fn identity_r(chart: ChartMetric) -> Result<FieldSpec> {
    if !chart.is_euclidean() {
        return Err(Error::param("chart", "the radius-vector field needs a Euclidean chart"));
    }
    let n = chart.dim();
    Ok(FieldSpec {
        chart,
        family: FieldFamily::IdentityR,
        eval: Arc::new(|x: &[f64]| Ok(x.to_vec())),
        jacobian: Some(Arc::new(move |_x: &[f64]| Ok(DMatrix::identity(n, n)))),
    })
}

/// Λ = (x₁ + φ(ξ), K x₁ + K φ(ξ)) with ξ = x₂ − K x₁.
pub fn plane_shear(chart: ChartMetric, k: f64, phi: Profile) -> Result<FieldSpec> {
    if !chart.is_euclidean() || chart.dim() != 2 {
        return Err(Error::param("chart", "plane fields live on the Euclidean plane"));
    }
    let (pe, pj) = (phi.clone(), phi.clone());
    Ok(FieldSpec {
        chart,
        family: FieldFamily::PlaneShear { k, phi },
        eval: Arc::new(move |x: &[f64]| {
            let l1 = x[0] + pe.value(x[1] - k * x[0]);
            Ok(vec![l1, k * l1])
        }),
        jacobian: Some(Arc::new(move |x: &[f64]| {
            let d = pj.derivative(x[1] - k * x[0]);
            let (a, b) = (1.0 - k * d, d);
            Ok(DMatrix::from_row_slice(2, 2, &[a, b, k * a, k * b]))
        })),
    })
}

/// Physical components (u, v) of the sphere-strip solution and the ratio
/// z = v/u at (φ, θ). Valid on the closed strip C sin²θ ≥ 1.
pub fn sphere_physical_components(
    c: f64,
    psi1: &Profile,
    branch: Branch,
    radius: f64,
    phi: f64,
    theta: f64,
) -> Result<SpherePoint> {
    if !(c > 1.0) {
        return Err(Error::param("c", "must exceed 1"));
    }
    let (s, cth) = theta.sin_cos();
    let mut rad = c * s * s - 1.0;
    // rounding of sin θ on the boundary itself must not leave a stray sqrt(ulp)
    if rad.abs() <= 8.0 * f64::EPSILON * c {
        rad = 0.0;
    }
    if rad < 0.0 || s <= 0.0 {
        return Err(Error::OutsideDomain { point: vec![phi, theta] });
    }
    let sg = branch.sign();
    let z = sg * rad.max(0.0).sqrt();
    let arc = (c.sqrt() * cth / (c - 1.0).sqrt()).clamp(-1.0, 1.0).asin();
    let f = -sg * radius / c.sqrt() * arc;
    let shift = -sg * (cth / (s * (c - 1.0).sqrt())).clamp(-1.0, 1.0).asin();
    let p = psi1.value(phi - shift);
    let u = (f + p) / s;
    Ok(SpherePoint { u, v: z * u, z, f, shift })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub u: f64,
    pub v: f64,
    pub z: f64,
    /// The θ-only part of the along-stream amplitude.
    pub f: f64,
    /// ℛ(θ), the phase shift carried by Ψ₁.
    pub shift: f64,
}

/// Sphere-strip field on the sphere of radius `radius`, returned in
/// contravariant components (Λ¹, Λ²) = (u / (r sin θ), v / r).
pub fn sphere_field(c: f64, psi1: Profile, branch: Branch, radius: f64) -> Result<FieldSpec> {
    if !(c > 1.0) {
        return Err(Error::param("c", "must exceed 1"));
    }
    let chart = ChartMetric::sphere(radius)?;
    let s_min = 1.0 / c.sqrt() + STRIP_MARGIN;
    if s_min >= 1.0 {
        return Err(Error::param("c", "strip is empty after the margin"));
    }
    let in_strip = move |x: &[f64]| -> Result<()> {
        if x[1].sin() < s_min {
            Err(Error::OutsideDomain { point: x.to_vec() })
        } else {
            Ok(())
        }
    };
    let pe = psi1.clone();
    let pj = psi1.clone();
    let eval: VectorFn = Arc::new(move |x: &[f64]| {
        in_strip(x)?;
        let sp = sphere_physical_components(c, &pe, branch, radius, x[0], x[1])?;
        Ok(vec![sp.u / (radius * x[1].sin()), sp.v / radius])
    });
    let jac: MatrixFn = Arc::new(move |x: &[f64]| {
        in_strip(x)?;
        let sp = sphere_physical_components(c, &pj, branch, radius, x[0], x[1])?;
        let (s, cth) = x[1].sin_cos();
        let z = sp.z;
        let dp = pj.derivative(x[0] - sp.shift);
        let p = pj.value(x[0] - sp.shift);
        let df = radius * s / z;
        let dshift = 1.0 / (s * z);
        let dz = c * s * cth / z;
        let u_phi = dp / s;
        let u_th = (df - dp * dshift) / s - cth * (sp.f + p) / (s * s);
        let u = sp.u;
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[
                u_phi / (radius * s),
                u_th / (radius * s) - u * cth / (radius * s * s),
                z * u_phi / radius,
                (dz * u + z * u_th) / radius,
            ],
        ))
    });
    Ok(FieldSpec { chart, family: FieldFamily::SphereStrip { c, psi1, branch, radius }, eval, jacobian: Some(jac) })
}

/// Result of solving the characteristic relations at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicPoint {
    pub z: f64,
    /// Foot of the characteristic on x₁ = 0.
    pub xi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Solves z = F(x₂ − z x₁) by safeguarded Newton with bisection fallback.
pub fn solve_ratio(f: &Profile, x1: f64, x2: f64) -> Result<f64> {
    let g = |z: f64| z - f.value(x2 - z * x1);
    let dg = |z: f64| 1.0 + x1 * f.derivative(x2 - z * x1);
    let crit = |z: f64| {
        let d = f.derivative(x2 - z * x1);
        if d != 0.0 {
            -1.0 / d
        } else {
            f64::INFINITY
        }
    };
    let z0 = f.value(x2);
    let g0 = g(z0);
    if g0 == 0.0 {
        return check_pre_shock(f, x1, x2, z0);
    }
    // bracket the root around the initial guess
    let mut step = 1.0_f64.max(z0.abs() * 0.1);
    let (mut lo, mut hi) = (f64::NAN, f64::NAN);
    for _ in 0..80 {
        let (a, b) = (z0 - step, z0 + step);
        if g(a) * g0 <= 0.0 {
            lo = a;
            hi = z0;
            break;
        }
        if g(b) * g0 <= 0.0 {
            lo = z0;
            hi = b;
            break;
        }
        step *= 2.0;
    }
    if lo.is_nan() {
        return Err(Error::ShockRegion { x1_critical: crit(z0) });
    }
    let glo = g(lo);
    let mut z = z0;
    for _ in 0..100 {
        let gz = g(z);
        if gz == 0.0 {
            return check_pre_shock(f, x1, x2, z);
        }
        if (gz < 0.0) == (glo < 0.0) {
            lo = z;
        } else {
            hi = z;
        }
        let d = dg(z);
        let mut next = if d != 0.0 { z - gz / d } else { f64::NAN };
        if !(next > lo.min(hi) && next < lo.max(hi)) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-12 * z.abs().max(1.0) {
            return check_pre_shock(f, x1, x2, next);
        }
        z = next;
    }
    Err(Error::ShockRegion { x1_critical: crit(z) })
}

fn check_pre_shock(f: &Profile, x1: f64, x2: f64, z: f64) -> Result<f64> {
    let d = f.derivative(x2 - z * x1);
    if 1.0 + x1 * d <= 0.0 {
        return Err(Error::ShockRegion { x1_critical: -1.0 / d });
    }
    Ok(z)
}

/// Builds (z, Λ₁, Λ₂) at x from the Cauchy datum z(0, x₂) = F(x₂) and
/// Λ₁(0, s) = datum(s). Without a source Λ₁ grows at unit rate along the
/// characteristic; with a source it follows dΛ₁/dx₁ = Ξ.
pub fn characteristics_solve(
    f: &Profile,
    datum: &Profile,
    x: &[f64],
    source: Option<&SourceFn>,
) -> Result<CharacteristicPoint> {
    if x.len() != 2 {
        return Err(Error::param("x", "characteristics are solved on the plane"));
    }
    let (x1, x2) = (x[0], x[1]);
    let z = solve_ratio(f, x1, x2)?;
    let xi = x2 - z * x1;
    let lambda1 = match source {
        None => x1 + datum.value(xi),
        Some(src) => {
            if x1 == 0.0 {
                datum.value(xi)
            } else {
                let norm = (1.0 + z * z).sqrt();
                let src = src.clone();
                let sys = FnSystem {
                    dim: 1,
                    f: move |sig: f64, y: &[f64], dy: &mut [f64]| {
                        let s = sig * x1;
                        dy[0] = x1 * src(s, xi + z * s, y[0].abs() * norm);
                    },
                };
                let sol = integrator::solve(&sys, 0.0, &[datum.value(xi)], 1.0, &IntegratorOptions::new(1e-12))?;
                if !sol.events.is_empty() {
                    return Err(Error::NonFinite { context: "source integration along the characteristic".into() });
                }
                sol.final_state()[0]
            }
        }
    };
    Ok(CharacteristicPoint { z, xi, lambda1, lambda2: z * lambda1 })
}

/// Field built pointwise from [`characteristics_solve`].
pub fn characteristic_field(
    chart: ChartMetric,
    f: Profile,
    datum: Profile,
    source: Option<SourceFn>,
) -> Result<FieldSpec> {
    if !chart.is_euclidean() || chart.dim() != 2 {
        return Err(Error::param("chart", "plane fields live on the Euclidean plane"));
    }
    let with_source = source.is_some();
    let (fe, de) = (f.clone(), datum.clone());
    let eval: VectorFn = Arc::new(move |x: &[f64]| {
        let p = characteristics_solve(&fe, &de, x, source.as_ref())?;
        Ok(vec![p.lambda1, p.lambda2])
    });
    let jacobian: Option<MatrixFn> = if with_source {
        None
    } else {
        let (fj, dj) = (f.clone(), datum.clone());
        Some(Arc::new(move |x: &[f64]| {
            let z = solve_ratio(&fj, x[0], x[1])?;
            let xi = x[1] - z * x[0];
            let fp = fj.derivative(xi);
            let den = 1.0 + x[0] * fp;
            let (z1, z2) = (-z * fp / den, fp / den);
            let (xi1, xi2) = (-z - x[0] * z1, 1.0 - x[0] * z2);
            let dp = dj.derivative(xi);
            let l1 = x[0] + dj.value(xi);
            let (a1, a2) = (1.0 + dp * xi1, dp * xi2);
            Ok(DMatrix::from_row_slice(2, 2, &[a1, a2, z1 * l1 + z * a1, z2 * l1 + z * a2]))
        }))
    };
    Ok(FieldSpec { chart, family: FieldFamily::ImplicitCharacteristic { f, datum, with_source }, eval, jacobian })
}

/// ∇_jΛ^i − c δ^i_j with c = D / dim, together with c.
pub fn a1_residual(chart: &ChartMetric, field: &FieldSpec, x: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let m = covariant_derivative(chart, field, x)?;
    let n = m.nrows();
    let c = m.trace() / n as f64;
    Ok((m - DMatrix::identity(n, n) * c, c))
}

/// Λ^i − Λ^j∇_jΛ^i.
pub fn a2_residual(chart: &ChartMetric, field: &FieldSpec, x: &[f64]) -> Result<Vec<f64>> {
    xi_a2_residual(chart, field, x, 1.0)
}

/// ΞΛ^i − Λ^j∇_jΛ^i for a scalar factor Ξ evaluated at x.
pub fn xi_a2_residual(chart: &ChartMetric, field: &FieldSpec, x: &[f64], xi: f64) -> Result<Vec<f64>> {
    let lam = field.eval(x)?;
    let m = covariant_derivative(chart, field, x)?;
    let n = lam.len();
    Ok((0..n).map(|i| xi * lam[i] - (0..n).map(|j| lam[j] * m[(i, j)]).sum::<f64>()).collect())
}

fn permutations(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    if items.len() <= 1 {
        return vec![(items.to_vec(), 1.0)];
    }
    let mut out = Vec::new();
    for (pos, &first) in items.iter().enumerate() {
        let rest: Vec<usize> = items.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, v)| *v).collect();
        // moving the chosen element to the front costs `pos` transpositions
        let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
        for (mut p, s) in permutations(&rest) {
            p.insert(0, first);
            out.push((p, sign * s));
        }
    }
    out
}

fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

/// J_m of a matrix: the sum over index subsets K of size m of the signed
/// permutation sums over K.
pub fn jm_value(m_mat: &DMatrix<f64>, m: usize) -> f64 {
    let n = m_mat.nrows();
    if m == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in subsets(n, m) {
        for (perm, sign) in permutations(&k) {
            total += sign * k.iter().zip(&perm).map(|(&i, &j)| m_mat[(i, j)]).product::<f64>();
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JmReport {
    pub m: usize,
    pub value: f64,
    pub divergence: f64,
    /// J_0 … J_dim.
    pub all: Vec<f64>,
    /// Residuals of the trace identities: `square` (D = D² − 2J₂), `cube`
    /// (D = D³ + 3J₃ − 3DJ₂, dim ≥ 3) and `determinant`
    /// (1 − D + J₂ − J₃ + …).
    pub identity_residuals: BTreeMap<String, f64>,
}

pub fn jm(chart: &ChartMetric, field: &FieldSpec, x: &[f64], m: usize) -> Result<JmReport> {
    let n = chart.dim();
    if m < 2 || m > n {
        return Err(Error::param("m", format!("must lie in 2..={n}")));
    }
    let mat = covariant_derivative(chart, field, x)?;
    Ok(jm_report(&mat, m))
}

pub fn jm_report(mat: &DMatrix<f64>, m: usize) -> JmReport {
    let n = mat.nrows();
    let d = mat.trace();
    let all: Vec<f64> = (0..=n).map(|k| jm_value(mat, k)).collect();
    let mut res = BTreeMap::new();
    res.insert("square".to_string(), d - (d * d - 2.0 * all[2]));
    if n >= 3 {
        res.insert("cube".to_string(), d - (d * d * d + 3.0 * all[3] - 3.0 * d * all[2]));
    }
    let det: f64 = all.iter().enumerate().map(|(k, v)| if k % 2 == 0 { *v } else { -*v }).sum();
    res.insert("determinant".to_string(), det);
    JmReport { m, value: all[m], divergence: d, all, identity_residuals: res }
}

type Poly = Vec<Ratio<i64>>;

fn poly_add(a: &Poly, b: &Poly) -> Poly {
    let n = a.len().max(b.len());
    (0..n).map(|i| a.get(i).copied().unwrap_or_default() + b.get(i).copied().unwrap_or_default()).collect()
}

fn poly_scale(a: &Poly, s: Ratio<i64>) -> Poly {
    a.iter().map(|c| c * s).collect()
}

fn poly_shift(a: &Poly) -> Poly {
    let mut out = vec![Ratio::from_integer(0)];
    out.extend_from_slice(a);
    out
}

/// Monic polynomial (ascending coefficients) whose roots are the constant
/// divergences admissible in dimension n.
///
/// Each trace identity p_k = tr(∇Λ)^k = D is solved for J_k in turn
/// (J₂ = (D² − D)/2, J₃ = (D − D³ + 3DJ₂)/3, J₄ = (D⁴ − 4D²J₂ + 4DJ₃ +
/// 2J₂² − D)/4), and the results are substituted into
/// 1 − D + J₂ − … ± J_n = 0.
pub fn divergence_polynomial(n: usize) -> Result<Vec<f64>> {
    if !(2..=4).contains(&n) {
        return Err(Error::param("n", "must be 2, 3 or 4"));
    }
    let one = Ratio::from_integer(1);
    let mut e: Vec<Poly> = vec![vec![one]];
    for m in 1..=n {
        let mut acc: Poly = vec![];
        for i in 1..=m {
            let term = poly_shift(&e[m - i]);
            let sgn = if i % 2 == 1 { one } else { -one };
            acc = poly_add(&acc, &poly_scale(&term, sgn));
        }
        e.push(poly_scale(&acc, Ratio::new(1, m as i64)));
    }
    let mut p: Poly = vec![];
    for (k, ek) in e.iter().enumerate() {
        let sgn = if k % 2 == 0 { one } else { -one };
        p = poly_add(&p, &poly_scale(ek, sgn));
    }
    while p.last().is_some_and(|c| *c.numer() == 0) {
        p.pop();
    }
    let lead = *p.last().expect("nonzero polynomial");
    Ok(p.iter().map(|c| c / lead).map(|c| *c.numer() as f64 / *c.denom() as f64).collect())
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of [`divergence_polynomial`] on [0, n + 1], found by a
/// dyadic sign scan and bisection.
pub fn divergence_roots(n: usize) -> Result<Vec<f64>> {
    let p = divergence_polynomial(n)?;
    let steps = 64 * (n + 1);
    let h = 1.0 / 64.0;
    let mut roots = Vec::new();
    let mut prev_x = 0.0;
    let mut prev = horner(&p, 0.0);
    if prev == 0.0 {
        roots.push(0.0);
    }
    for i in 1..=steps {
        let x = i as f64 * h;
        let v = horner(&p, x);
        if v == 0.0 {
            roots.push(x);
        } else if prev != 0.0 && (v < 0.0) != (prev < 0.0) {
            let (mut a, mut b, mut fa) = (prev_x, x, prev);
            while b - a > 1e-15 * b.abs().max(1.0) {
                let mid = 0.5 * (a + b);
                let fm = horner(&p, mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if (fm < 0.0) == (fa < 0.0) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev = v;
    }
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialCondition {
    pub hess: f64,
    pub laplacian: f64,
    /// Hess Φ − ΔΦ + 1.
    pub residual: f64,
}

/// Necessary condition for a potential Φ with Λ = ∇Φ to satisfy (A2).
pub fn potential_condition(
    chart: &ChartMetric,
    potential: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
) -> Result<PotentialCondition> {
    if chart.dim() != 2 {
        return Err(Error::param("chart", "the potential condition is stated in 2D"));
    }
    chart.check_point(x)?;
    let n = 2;
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let at = |dx: &[f64]| {
        let p: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
        potential(&p)
    };
    let f0 = potential(x);
    let mut grad = [0.0; 2];
    let mut hess = [[0.0; 2]; 2];
    for i in 0..n {
        let mut e = [0.0; 2];
        e[i] = h[i];
        let fp = at(&e);
        e[i] = -h[i];
        let fm = at(&e);
        grad[i] = (fp - fm) / (2.0 * h[i]);
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    let mixed =
        (at(&[h[0], h[1]]) - at(&[h[0], -h[1]]) - at(&[-h[0], h[1]]) + at(&[-h[0], -h[1]])) / (4.0 * h[0] * h[1]);
    hess[0][1] = mixed;
    hess[1][0] = mixed;
    let gamma = chart.christoffel(x)?;
    let ginv = chart.inverse_metric(x)?;
    let mut m = DMatrix::zeros(2, 2);
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                let cov = hess[j][k] - (0..n).map(|l| gamma.get(l, j, k) * grad[l]).sum::<f64>();
                v += ginv[(i, k)] * cov;
            }
            m[(i, j)] = v;
        }
    }
    let hs = m[(0, 0)] * m[(1, 1)] - m[(1, 0)] * m[(0, 1)];
    let lap = m.trace();
    Ok(PotentialCondition { hess: hs, laplacian: lap, residual: hs - lap + 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoriolisResiduals {
    /// (A2) residual of Λ.
    pub r1: f64,
    /// Stationarity of Ξ under rotation: Ξ·∇Ξ − l Ξ⊥.
    pub r2: f64,
    /// Compatibility: l Λ⊥ − (Ξ·∇Λ + Λ·∇Ξ).
    pub r3: f64,
}

/// Max-abs residuals of the ansatz u = a(t)Λ + Ξ for the rotating
/// transport equation over the sample points.
pub fn coriolis_ansatz_residual(
    chart: &ChartMetric,
    lam: &FieldSpec,
    xi: &FieldSpec,
    l: &dyn Fn(&[f64]) -> f64,
    points: &[Vec<f64>],
) -> Result<CoriolisResiduals> {
    if chart.dim() != 2 {
        return Err(Error::param("chart", "the rotating ansatz is stated in 2D"));
    }
    let mut out = CoriolisResiduals { r1: 0.0, r2: 0.0, r3: 0.0 };
    for x in points {
        let a = lam.eval(x)?;
        let b = xi.eval(x)?;
        let da = covariant_derivative(chart, lam, x)?;
        let db = covariant_derivative(chart, xi, x)?;
        let e = chart.discriminant_mixed(x)?;
        let lx = l(x);
        for i in 0..2 {
            let a_grad_a: f64 = (0..2).map(|j| a[j] * da[(i, j)]).sum();
            let b_grad_b: f64 = (0..2).map(|j| b[j] * db[(i, j)]).sum();
            let b_grad_a: f64 = (0..2).map(|j| b[j] * da[(i, j)]).sum();
            let a_grad_b: f64 = (0..2).map(|j| a[j] * db[(i, j)]).sum();
            let rot_b: f64 = (0..2).map(|j| e[(i, j)] * b[j]).sum();
            let rot_a: f64 = (0..2).map(|j| e[(i, j)] * a[j]).sum();
            out.r1 = out.r1.max((a[i] - a_grad_a).abs());
            out.r2 = out.r2.max((b_grad_b - lx * rot_b).abs());
            out.r3 = out.r3.max((lx * rot_a - b_grad_a - a_grad_b).abs());
        }
    }
    Ok(out)
}

/// Max-abs residual of the pairwise coupling
/// Λ_m·∇Λ_l + Λ_l·∇Λ_m = Σ β_k Λ_k over all pairs m ≠ l.
pub fn multi_field_residual(
    chart: &ChartMetric,
    fields: &[FieldSpec],
    beta: &[f64],
    points: &[Vec<f64>],
) -> Result<f64> {
    if fields.len() != beta.len() {
        return Err(Error::param("beta", "one coefficient per field"));
    }
    let n = chart.dim();
    let mut worst = 0.0_f64;
    for x in points {
        let vals: Vec<Vec<f64>> = fields.iter().map(|f| f.eval(x)).collect::<Result<_>>()?;
        let grads: Vec<DMatrix<f64>> =
            fields.iter().map(|f| covariant_derivative(chart, f, x)).collect::<Result<_>>()?;
        for m in 0..fields.len() {
            for l in (m + 1)..fields.len() {
                for i in 0..n {
                    let lhs: f64 = (0..n).map(|j| vals[m][j] * grads[l][(i, j)] + vals[l][j] * grads[m][(i, j)]).sum();
                    let rhs: f64 = beta.iter().zip(&vals).map(|(b, v)| b * v[i]).sum();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiFieldRun {
    pub trajectory: Trajectory,
    /// Estimated blow-up time when some |a_k| exceeded 1/tol.
    pub blow_up_time: Option<f64>,
}

struct MultiField {
    beta: Vec<f64>,
    limit: f64,
}

impl OdeSystem for MultiField {
    fn dim(&self) -> usize {
        self.beta.len()
    }
    fn rhs(&self, _t: f64, a: &[f64], da: &mut [f64]) {
        let total: f64 = a.iter().sum();
        for k in 0..a.len() {
            da[k] = -a[k] * a[k] - self.beta[k] * a[k] * (total - a[k]);
        }
    }
    fn check(&self, _t: f64, a: &[f64]) -> Option<EventKind> {
        a.iter().any(|v| v.abs() > self.limit).then_some(EventKind::BlowUp)
    }
}

/// Coefficients a_k(t) of u = Σ a_k Λ_k for coupled fields.
pub fn multi_field_coeffs(beta: &[f64], a0: &[f64], t_end: f64, tol: f64) -> Result<MultiFieldRun> {
    let beta = if beta.is_empty() { vec![0.0; a0.len()] } else { beta.to_vec() };
    if beta.len() != a0.len() || a0.is_empty() {
        return Err(Error::param("beta", "one coefficient per field"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let sys = MultiField { beta, limit: 1.0 / tol };
    let opts = IntegratorOptions::new(tol.clamp(1e-13, 1e-3));
    let sol = integrator::solve(&sys, 0.0, a0, t_end, &opts)?;
    let names = (1..=a0.len()).map(|k| format!("a{k}")).collect();
    let blow_up_time = sol.events.first().map(|ev| {
        let big = sol.final_state().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        ev.t + 1.0 / big
    });
    Ok(MultiFieldRun { trajectory: Trajectory::from_steps(names, &sol), blow_up_time })
}

/// JSON description of a built-in field family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDescriptor {
    pub family: String,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub domain: Option<DomainBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityParams {
    #[serde(default = "two")]
    dim: usize,
}

fn two() -> usize {
    2
}

fn unit() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShearParams {
    k: f64,
    phi: Profile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereParams {
    c: f64,
    #[serde(default = "Profile::zero")]
    psi1: Profile,
    #[serde(default = "plus")]
    branch: Branch,
    #[serde(default = "unit")]
    radius: f64,
}

fn plus() -> Branch {
    Branch::Plus
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CharacteristicParams {
    f: Profile,
    #[serde(default = "Profile::zero")]
    datum: Profile,
}

fn params<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Result<T> {
    let v = if v.is_null() { serde_json::Value::Object(Default::default()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| Error::param("parameters", e.to_string()))
}

impl FieldDescriptor {
    pub fn build(&self) -> Result<FieldSpec> {
        let plane = |dim: usize| match &self.domain {
            Some(d) => ChartMetric::euclidean_on(d.clone()),
            None => Ok(ChartMetric::euclidean(dim)),
        };
        match self.family.as_str() {
            "identity-r" => {
                let p: IdentityParams = params(&self.parameters)?;
                if p.dim != 2 && p.dim != 3 {
                    return Err(Error::param("dim", "must be 2 or 3"));
                }
                identity_r(plane(p.dim)?)
            }
            "plane-shear" => {
                let p: ShearParams = params(&self.parameters)?;
                plane_shear(plane(2)?, p.k, p.phi)
            }
            "sphere-strip" => {
                let p: SphereParams = params(&self.parameters)?;
                sphere_field(p.c, p.psi1, p.branch, p.radius)
            }
            "implicit-characteristic" => {
                let p: CharacteristicParams = params(&self.parameters)?;
                characteristic_field(plane(2)?, p.f, p.datum, None)
            }
            other => Err(Error::param("family", format!("unknown family `{other}`"))),
        }
    }
}
