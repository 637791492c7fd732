//! Initial density/pressure families, compatibility checks, the Makino
//! variable and the parameter inequalities for interior solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::quadrature::{integrate_box, QuadTolerance};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DataFamily {
    /// p₀ = (1+|r|²)^{−a}, ρ₀ = (2a/κ)(1+|r|²)^{−a−1}.
    Algebraic {
        a: f64,
    },
    Gaussian {
        rho_c: f64,
        rho_width: f64,
        p_c: f64,
        p_width: f64,
    },
    Custom,
}

/// How fast the data decay, used to size truncated quadrature boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Decay {
    /// Integrands of the moments fall off like |x|^{−exponent}.
    Algebraic { exponent: f64 },
    /// Integrands fall off like exp(−|x|²/width²).
    Gaussian { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataMoments {
    pub mass: f64,
    /// G = ½∫ρ|x|².
    pub g: f64,
    pub ep: f64,
}

#[derive(Clone)]
pub struct InitialData {
    pub family: DataFamily,
    pub n: usize,
    pub gamma: f64,
    pub rho0: ScalarFn,
    pub p0: ScalarFn,
    pub grad_p0: Option<GradFn>,
    /// Constant of the radial compatibility ∇p₀ = −κρ₀x, when the family
    /// is built to satisfy it.
    pub kappa: Option<f64>,
    pub decay: Decay,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialData")
            .field("family", &self.family)
            .field("n", &self.n)
            .field("gamma", &self.gamma)
            .field("kappa", &self.kappa)
            .finish()
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl InitialData {
    /// The algebraic family on the plane. `g1_0` = 1/G(0) fixes the
    /// density scale; E_p(0) = π/((γ−1)(a−1)) is forced by p₀.
    pub fn algebraic(a: f64, gamma: f64, g1_0: f64) -> Result<Self> {
        if !(a > 3.0) {
            return Err(Error::param("a", "must exceed 3"));
        }
        if !(gamma > 1.0) {
            return Err(Error::param("gamma", "must exceed 1"));
        }
        if !(g1_0 > 0.0) {
            return Err(Error::param("g1_0", "must be positive"));
        }
        let ep0 = PI / ((gamma - 1.0) * (a - 1.0));
        let kappa = (gamma - 1.0) * g1_0 * ep0;
        let c = 2.0 * a / kappa;
        Ok(Self {
            family: DataFamily::Algebraic { a },
            n: 2,
            gamma,
            rho0: Arc::new(move |x| c * (1.0 + norm2(x)).powf(-a - 1.0)),
            p0: Arc::new(move |x| (1.0 + norm2(x)).powf(-a)),
            grad_p0: Some(Arc::new(move |x| {
                let w = -2.0 * a * (1.0 + norm2(x)).powf(-a - 1.0);
                x.iter().map(|v| w * v).collect()
            })),
            kappa: Some(kappa),
            decay: Decay::Algebraic { exponent: 2.0 * a },
        })
    }

    /// Gaussian density and pressure; radially compatible iff the widths
    /// agree.
    pub fn gaussian(n: usize, gamma: f64, rho_c: f64, rho_width: f64, p_c: f64, p_width: f64) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::param("n", "must be 2 or 3"));
        }
        if !(gamma > 1.0) {
            return Err(Error::param("gamma", "must exceed 1"));
        }
        if !(rho_c > 0.0 && rho_width > 0.0 && p_c > 0.0 && p_width > 0.0) {
            return Err(Error::param("gaussian", "amplitudes and widths must be positive"));
        }
        let (rw2, pw2) = (rho_width * rho_width, p_width * p_width);
        Ok(Self {
            family: DataFamily::Gaussian { rho_c, rho_width, p_c, p_width },
            n,
            gamma,
            rho0: Arc::new(move |x| rho_c * (-norm2(x) / rw2).exp()),
            p0: Arc::new(move |x| p_c * (-norm2(x) / pw2).exp()),
            grad_p0: Some(Arc::new(move |x| {
                let w = -2.0 * p_c / pw2 * (-norm2(x) / pw2).exp();
                x.iter().map(|v| w * v).collect()
            })),
            kappa: (rho_width == p_width).then(|| 2.0 * p_c / (pw2 * rho_c)),
            decay: Decay::Gaussian { width: rho_width.max(p_width) },
        })
    }

    pub fn custom(n: usize, gamma: f64, rho0: ScalarFn, p0: ScalarFn, decay: Decay) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::param("n", "must be 2 or 3"));
        }
        if let Decay::Algebraic { exponent } = decay {
            if !(exponent > n as f64 + 2.0) {
                return Err(Error::param("decay", "second moments diverge for this decay exponent"));
            }
        }
        Ok(Self { family: DataFamily::Custom, n, gamma, rho0, p0, grad_p0: None, kappa: None, decay })
    }

    /// Closed-form mass, G(0) and E_p(0) where the family has them.
    pub fn closed_moments(&self) -> Option<DataMoments> {
        let g = self.gamma;
        match self.family {
            DataFamily::Algebraic { a } => {
                let kappa = self.kappa?;
                Some(DataMoments {
                    mass: 2.0 * PI / kappa,
                    g: PI / (kappa * (a - 1.0)),
                    ep: PI / ((g - 1.0) * (a - 1.0)),
                })
            }
            DataFamily::Gaussian { rho_c, rho_width, p_c, p_width } => {
                let h = self.n as f64 / 2.0;
                let mass = rho_c * (PI * rho_width * rho_width).powf(h);
                Some(DataMoments {
                    mass,
                    g: 0.5 * h * rho_width * rho_width * mass,
                    ep: p_c * (PI * p_width * p_width).powf(h) / (g - 1.0),
                })
            }
            DataFamily::Custom => None,
        }
    }

    /// Half-width of a box outside which the moment integrands carry less
    /// than `tail` in total.
    pub fn radius(&self, tail: f64) -> f64 {
        let n = self.n as f64;
        let sphere = if self.n == 2 { 2.0 * PI } else { 4.0 * PI };
        match self.decay {
            Decay::Algebraic { exponent } => {
                let k = exponent - n;
                (sphere / (k * tail)).powf(1.0 / k).max(1.0)
            }
            Decay::Gaussian { width } => width * (-(tail.ln()) + 2.0 * n).sqrt(),
        }
    }

    /// Tail mass outside [−R, R]^n implied by the decay; inverse of
    /// `radius`.
    pub fn tail_at(&self, radius: f64) -> f64 {
        let n = self.n as f64;
        let sphere = if self.n == 2 { 2.0 * PI } else { 4.0 * PI };
        match self.decay {
            Decay::Algebraic { exponent } => {
                let k = exponent - n;
                sphere / (k * radius.powf(k))
            }
            Decay::Gaussian { width } => (2.0 * n - (radius / width).powi(2)).exp(),
        }
    }

    /// Moments by quadrature over [−R, R]^n.
    pub fn moments_quadrature(&self, radius: f64, tol: f64) -> DataMoments {
        let lo = vec![-radius; self.n];
        let hi = vec![radius; self.n];
        let (rho0, p0) = (self.rho0.clone(), self.p0.clone());
        let f = move |x: &[f64]| {
            let r = rho0(x);
            vec![r, 0.5 * r * norm2(x), p0(x)]
        };
        let q = integrate_box(&f, &lo, &hi, 3, &QuadTolerance::new(tol, tol));
        DataMoments { mass: q.values[0], g: q.values[1], ep: q.values[2] / (self.gamma - 1.0) }
    }

    /// G₁(0) = 1/G(0) and E_p(0) of the family, by closed form when known.
    pub fn g1_ep(&self) -> Result<(f64, f64)> {
        let m = match self.closed_moments() {
            Some(m) => m,
            None => self.moments_quadrature(self.radius(1e-10), 1e-10),
        };
        Ok((1.0 / m.g, m.ep))
    }

    /// Pressure constant K = E_p(0)·G(0)^{γ−1} of the 2D special system.
    pub fn special_k(&self) -> Result<f64> {
        let (g1, ep) = self.g1_ep()?;
        Ok(ep * g1.powf(1.0 - self.gamma))
    }

    /// Relative mismatch between (G₁(0), E_p(0)) recomputed by quadrature
    /// and the values the construction used.
    pub fn self_consistency(&self) -> Result<(f64, f64)> {
        let (g1, ep) = self.g1_ep()?;
        let q = self.moments_quadrature(self.radius(1e-11), 1e-11);
        Ok(((1.0 / q.g - g1).abs() / g1, (q.ep - ep).abs() / ep))
    }

    /// Initial entropy normalized to vanish at the origin.
    pub fn entropy0(&self, x: &[f64]) -> Option<f64> {
        let (r, p) = ((self.rho0)(x), (self.p0)(x));
        if !(r > 0.0 && p > 0.0) {
            return None;
        }
        let o = vec![0.0; self.n];
        let s0 = (self.p0)(&o).ln() - self.gamma * (self.rho0)(&o).ln();
        Some(p.ln() - self.gamma * r.ln() - s0)
    }

    /// ∇p₀ from the closed form when available, else 4th-order differences.
    pub fn grad_p0(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad_p0 {
            return g(x);
        }
        let mut out = vec![0.0; self.n];
        let mut y = x.to_vec();
        for i in 0..self.n {
            let h = 1e-3 * x[i].abs().max(1.0);
            let mut at = |d: f64| {
                y[i] = x[i] + d;
                let v = (self.p0)(&y);
                y[i] = x[i];
                v
            };
            out[i] = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        }
        out
    }
}

pub enum CompatMode<'a> {
    /// ∇p₀ + κρ₀x = 0 with κ from the data (or fitted when absent).
    Radial,
    /// ∇p₀/ρ₀ = Cx + c₀ by least squares.
    Affine,
    /// ∇p₀ = φρ₀Λ − ρ₀F with a single fitted φ.
    Forced { field: &'a FieldSpec, forcing: GradFn },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    pub mode: String,
    pub max_residual: f64,
    pub rms_residual: f64,
    pub used: usize,
    /// Grid points dropped because ρ₀ vanishes there.
    pub excluded: usize,
    pub kappa: Option<f64>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub offset: Option<Vec<f64>>,
    pub phi: Option<f64>,
}

pub fn compat_residual(data: &InitialData, mode: &CompatMode<'_>, grid: &[Vec<f64>]) -> Result<CompatReport> {
    let n = data.n;
    if grid.iter().any(|x| x.len() != n) {
        return Err(Error::param("grid", format!("points must have {n} coordinates")));
    }
    let pts: Vec<&Vec<f64>> = grid.iter().filter(|x| (data.rho0)(x) > 0.0).collect();
    let excluded = grid.len() - pts.len();
    if pts.is_empty() {
        return Err(Error::param("grid", "density vanishes on every grid point"));
    }
    let mut report = CompatReport {
        mode: String::new(),
        max_residual: 0.0,
        rms_residual: 0.0,
        used: pts.len(),
        excluded,
        kappa: None,
        matrix: None,
        offset: None,
        phi: None,
    };
    let finish = |res: Vec<f64>, rep: &mut CompatReport| {
        rep.max_residual = res.iter().copied().fold(0.0, f64::max);
        rep.rms_residual = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
    };
    match mode {
        CompatMode::Radial => {
            report.mode = "radial".into();
            let kappa = match data.kappa {
                Some(k) => k,
                None => {
                    let (mut num, mut den) = (0.0, 0.0);
                    for x in &pts {
                        let g = data.grad_p0(x);
                        let r = (data.rho0)(x);
                        num -= g.iter().zip(x.iter()).map(|(a, b)| a * r * b).sum::<f64>();
                        den += r * r * norm2(x);
                    }
                    if den > 0.0 {
                        num / den
                    } else {
                        0.0
                    }
                }
            };
            report.kappa = Some(kappa);
            let res = pts
                .iter()
                .map(|x| {
                    let g = data.grad_p0(x);
                    let r = (data.rho0)(x);
                    g.iter().zip(x.iter()).map(|(a, b)| (a + kappa * r * b).powi(2)).sum::<f64>().sqrt()
                })
                .collect();
            finish(res, &mut report);
        }
        CompatMode::Affine => {
            report.mode = "affine".into();
            let rows = pts.len();
            let mut design = DMatrix::zeros(rows, n + 1);
            let mut target = DMatrix::zeros(rows, n);
            for (k, x) in pts.iter().enumerate() {
                let g = data.grad_p0(x);
                let r = (data.rho0)(x);
                for j in 0..n {
                    design[(k, j)] = x[j];
                    target[(k, j)] = g[j] / r;
                }
                design[(k, n)] = 1.0;
            }
            let coef = design
                .clone()
                .svd(true, true)
                .solve(&target, 1e-14)
                .map_err(|e| Error::NonFinite { context: format!("affine fit: {e}") })?;
            // coef is (n+1) × n: row j holds ∂/∂x_j, last row the offset
            report.matrix = Some((0..n).map(|i| (0..n).map(|j| coef[(j, i)]).collect()).collect());
            report.offset = Some((0..n).map(|i| coef[(n, i)]).collect());
            let fit = &design * &coef;
            let res =
                (0..rows).map(|k| (0..n).map(|j| (fit[(k, j)] - target[(k, j)]).powi(2)).sum::<f64>().sqrt()).collect();
            finish(res, &mut report);
        }
        CompatMode::Forced { field, forcing } => {
            report.mode = "forced".into();
            let mut g_all = Vec::with_capacity(pts.len());
            let mut l_all = Vec::with_capacity(pts.len());
            for x in &pts {
                let r = (data.rho0)(x);
                let gp = data.grad_p0(x);
                let f = forcing(x);
                let lam = field.eval(x)?;
                g_all.push(gp.iter().zip(&f).map(|(a, b)| a + r * b).collect::<Vec<f64>>());
                l_all.push(lam.iter().map(|v| r * v).collect::<Vec<f64>>());
            }
            let num: f64 =
                g_all.iter().zip(&l_all).map(|(g, l)| g.iter().zip(l).map(|(a, b)| a * b).sum::<f64>()).sum();
            let den: f64 = l_all.iter().map(|l| norm2(l)).sum();
            let phi = if den > 0.0 { num / den } else { 0.0 };
            report.phi = Some(phi);
            let res = g_all
                .iter()
                .zip(&l_all)
                .map(|(g, l)| g.iter().zip(l).map(|(a, b)| (a - phi * b).powi(2)).sum::<f64>().sqrt())
                .collect();
            finish(res, &mut report);
        }
    }
    Ok(report)
}

/// Makino's variable Π = κ p^{(γ−1)/(2γ)}, κ = 2√γ/(γ−1).
pub fn makino_variable(p: f64, gamma: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::param("p", "must be nonnegative"));
    }
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", "must exceed 1"));
    }
    Ok(2.0 * gamma.sqrt() / (gamma - 1.0) * p.powf((gamma - 1.0) / (2.0 * gamma)))
}

pub fn makino_inverse(pi: f64, gamma: f64) -> Result<f64> {
    if !(pi >= 0.0) {
        return Err(Error::param("pi", "must be nonnegative"));
    }
    let kappa = 2.0 * gamma.sqrt() / (gamma - 1.0);
    Ok((pi / kappa).powf(2.0 * gamma / (gamma - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub q_bar: f64,
    /// A feasible (ε, q), if the scan found one.
    pub witness: Option<(f64, f64)>,
    pub feasible_cells: usize,
    pub scanned_cells: usize,
}

fn feasible(eps: f64, q: f64, mu: f64, delta: f64, gamma: f64, n: f64) -> bool {
    q > 0.0
        && q < 1.0
        && eps >= 1.0 / (1.0 - q)
        && eps <= (gamma - 1.0) * n / (2.0 * q)
        && eps * delta > 1.0
        && (mu > 0.0 || eps <= 2.0)
}

/// Scans (0, q̄) × (1, 4] for parameters satisfying the inequalities of
/// the interior-solution corollary.
pub fn corollary_feasible_params(mu: f64, delta: f64, gamma: f64, n: usize) -> Result<CorollaryReport> {
    if !(mu >= 0.0) {
        return Err(Error::param("mu", "must be nonnegative"));
    }
    if !(delta > 0.0) {
        return Err(Error::param("delta", "must be positive"));
    }
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", "must exceed 1"));
    }
    if !(2..=3).contains(&n) {
        return Err(Error::param("n", "must be 2 or 3"));
    }
    let nf = n as f64;
    let q_bar = (delta * nf * (gamma - 1.0) / 2.0).min(nf * (gamma - 1.0) / (2.0 + nf * (gamma - 1.0)));
    let (nq, ne) = (200usize, 300usize);
    let mut witness = None;
    let mut count = 0;
    for i in 1..nq {
        let q = q_bar * i as f64 / nq as f64;
        for j in 1..=ne {
            let eps = 1.0 + 3.0 * j as f64 / ne as f64;
            if feasible(eps, q, mu, delta, gamma, nf) {
                count += 1;
                witness.get_or_insert((eps, q));
            }
        }
    }
    Ok(CorollaryReport { q_bar, witness, feasible_cells: count, scanned_cells: (nq - 1) * ne })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algebraic_data_values() {
        let d = InitialData::algebraic(4.0, 1.4, 0.7).unwrap();
        assert_eq!((d.p0)(&[0.0, 0.0]), 1.0);
        let m = d.closed_moments().unwrap();
        assert!((1.0 / m.g - 0.7).abs() < 1e-14);
        assert!((d.kappa.unwrap() - 0.4 * 0.7 * m.ep).abs() < 1e-15);
    }

    #[test]
    fn algebraic_entropy_profile() {
        let d = InitialData::algebraic(4.0, 1.4, 0.7).unwrap();
        let s = d.entropy0(&[0.6, -0.8]).unwrap();
        assert!((s - (4.0 * 0.4 + 1.4) * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn makino_round_trip() {
        for &p in &[1e-8, 0.3, 1.0, 7.5, 1e3] {
            let pi = makino_variable(p, 1.4).unwrap();
            assert!((makino_inverse(pi, 1.4).unwrap() - p).abs() <= 1e-12 * p);
        }
        assert_eq!(makino_variable(0.0, 1.4).unwrap(), 0.0);
    }

    #[test]
    fn corollary_degenerates_for_small_delta() {
        let r = corollary_feasible_params(0.0, 0.1, 1.4, 2).unwrap();
        assert!(r.witness.is_none());
    }

    #[test]
    fn gaussian_compatibility_constant() {
        let d = InitialData::gaussian(2, 1.4, 2.0, 1.5, 3.0, 1.5).unwrap();
        let x = [0.4, -0.3];
        let g = d.grad_p0(&x);
        let k = d.kappa.unwrap();
        for i in 0..2 {
            assert!((g[i] + k * (d.rho0)(&x) * x[i]).abs() < 1e-15);
        }
    }
}
