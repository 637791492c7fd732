//! Coordinate charts, Christoffel symbols and covariant derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;

/// Relative finite-difference step for metric derivatives.
pub const H_GEO: f64 = 1e-5;

/// Half-width of the excluded band around the sphere poles.
pub const POLE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::param("domain", "lo and hi differ in length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::param("domain", "every lo must be below its hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_strict(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a < v && v < b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartKind {
    Euclidean,
    /// Coordinates (φ, θ) on a sphere of the given radius.
    Sphere {
        radius: f64,
    },
    /// Diagonal metric supplied as a closure.
    Custom,
}

/// Diagonal entries g_ii(x) of a custom metric.
pub type DiagonalMetric = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct ChartMetric {
    dim: usize,
    kind: ChartKind,
    domain: DomainBox,
    diagonal: Option<DiagonalMetric>,
}

impl fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartMetric")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("domain", &self.domain)
            .finish()
    }
}

impl ChartMetric {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "charts are 2D or 3D");
        Self { dim, kind: ChartKind::Euclidean, domain: DomainBox::unbounded(dim), diagonal: None }
    }

    pub fn euclidean_on(domain: DomainBox) -> Result<Self> {
        let dim = domain.dim();
        if dim != 2 && dim != 3 {
            return Err(Error::param("dim", "charts are 2D or 3D"));
        }
        Ok(Self { dim, kind: ChartKind::Euclidean, domain, diagonal: None })
    }

    /// Sphere of radius `radius` in coordinates (φ, θ), θ ∈ (0, π).
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", "must be positive"));
        }
        let domain = DomainBox { lo: vec![f64::NEG_INFINITY, 0.0], hi: vec![f64::INFINITY, std::f64::consts::PI] };
        Ok(Self { dim: 2, kind: ChartKind::Sphere { radius }, domain, diagonal: None })
    }

    pub fn custom_diagonal(domain: DomainBox, diagonal: DiagonalMetric) -> Result<Self> {
        let dim = domain.dim();
        if dim != 2 && dim != 3 {
            return Err(Error::param("dim", "charts are 2D or 3D"));
        }
        Ok(Self { dim, kind: ChartKind::Custom, domain, diagonal: Some(diagonal) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, ChartKind::Euclidean)
    }

    /// Rejects points outside the domain and, on the sphere, near the poles.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) || !self.domain.contains_strict(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        if let ChartKind::Sphere { .. } = self.kind {
            let theta = x[1];
            if theta.abs() < POLE_MARGIN || (theta - std::f64::consts::PI).abs() < POLE_MARGIN {
                return Err(Error::SingularChart { point: x.to_vec() });
            }
        }
        Ok(())
    }

    fn diagonal_at(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ChartKind::Euclidean => vec![1.0; self.dim],
            ChartKind::Sphere { radius } => {
                let s = x[1].sin();
                vec![radius * radius * s * s, radius * radius]
            }
            ChartKind::Custom => (self.diagonal.as_ref().expect("custom chart carries its metric"))(x),
        }
    }

    /// Metric components g_ij(x).
    pub fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let d = self.diagonal_at(x);
        if d.len() != self.dim || d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::SingularChart { point: x.to_vec() });
        }
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
    }

    pub fn inverse_metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric(x)?;
        Ok(DMatrix::from_diagonal(&g.diagonal().map(|v| 1.0 / v)))
    }

    pub fn sqrt_det(&self, x: &[f64]) -> Result<f64> {
        Ok(self.metric(x)?.diagonal().product().sqrt())
    }

    /// Mixed discriminant tensor e^i_{·j} = g^{ik} e_{kj} with e₁₂ = +√det g.
    pub fn discriminant_mixed(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.dim != 2 {
            return Err(Error::param("dim", "the discriminant tensor is defined on 2D charts"));
        }
        let g = self.metric(x)?;
        let s = (g[(0, 0)] * g[(1, 1)]).sqrt();
        Ok(DMatrix::from_row_slice(2, 2, &[0.0, s / g[(0, 0)], -s / g[(1, 1)], 0.0]))
    }

    /// Γ^k_{ij}(x): closed forms for tagged charts, central differences of
    /// the diagonal for custom ones.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        self.check_point(x)?;
        let n = self.dim;
        let mut gamma = Christoffel::zeros(n);
        match self.kind {
            ChartKind::Euclidean => {}
            ChartKind::Sphere { .. } => {
                let (s, c) = x[1].sin_cos();
                gamma.set(1, 0, 0, -s * c);
                gamma.set(0, 0, 1, c / s);
                gamma.set(0, 1, 0, c / s);
            }
            ChartKind::Custom => {
                let h = self.metric(x)?.diagonal();
                // dh[m][a] = ∂_m g_aa
                let mut dh = vec![vec![0.0; n]; n];
                let mut xp = x.to_vec();
                for m in 0..n {
                    let step = H_GEO * x[m].abs().max(1.0);
                    xp[m] = x[m] + step;
                    let up = self.diagonal_at(&xp);
                    xp[m] = x[m] - step;
                    let dn = self.diagonal_at(&xp);
                    xp[m] = x[m];
                    for a in 0..n {
                        dh[m][a] = (up[a] - dn[a]) / (2.0 * step);
                    }
                }
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = 0.0;
                            if j == k {
                                v += dh[i][k];
                            }
                            if i == k {
                                v += dh[j][k];
                            }
                            if i == j {
                                v -= dh[k][i];
                            }
                            gamma.set(k, i, j, 0.5 * v / h[k]);
                        }
                    }
                }
            }
        }
        Ok(gamma)
    }
}

/// Christoffel symbols Γ^k_{ij} at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// ∇_jΛ^i as the (i, j) entry.
pub fn covariant_derivative(chart: &ChartMetric, field: &FieldSpec, x: &[f64]) -> Result<DMatrix<f64>> {
    chart.check_point(x)?;
    let lam = field.eval(x)?;
    let mut m = field.jacobian(x)?;
    if !chart.is_euclidean() {
        let gamma = chart.christoffel(x)?;
        let n = chart.dim();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += (0..n).map(|k| gamma.get(i, j, k) * lam[k]).sum::<f64>();
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "covariant derivative".into() });
    }
    Ok(m)
}

pub fn divergence(chart: &ChartMetric, field: &FieldSpec, x: &[f64]) -> Result<f64> {
    Ok(covariant_derivative(chart, field, x)?.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn euclidean_symbols_vanish() {
        let chart = ChartMetric::euclidean(3);
        let g = chart.christoffel(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(chart.metric(&[0.3, -1.0, 2.0]).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn sphere_symbols_at_sixty_degrees() {
        let chart = ChartMetric::sphere(1.0).unwrap();
        let t = PI / 3.0;
        let g = chart.christoffel(&[0.2, t]).unwrap();
        assert!((g.get(1, 0, 0) + t.sin() * t.cos()).abs() < 1e-15);
        assert!((g.get(0, 0, 1) - 1.0 / t.tan()).abs() < 1e-15);
        assert_eq!(g.get(0, 0, 1), g.get(0, 1, 0));
        for (k, i, j) in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)] {
            assert_eq!(g.get(k, i, j), 0.0);
        }
    }

    #[test]
    fn poles_are_rejected() {
        let chart = ChartMetric::sphere(2.0).unwrap();
        assert!(matches!(chart.christoffel(&[0.0, 5e-7]), Err(Error::SingularChart { .. })));
        assert!(matches!(chart.christoffel(&[0.0, PI - 5e-7]), Err(Error::SingularChart { .. })));
        assert!(matches!(chart.christoffel(&[0.0, -0.1]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn discriminant_on_plane_rotates_by_minus_ninety() {
        let chart = ChartMetric::euclidean(2);
        let e = chart.discriminant_mixed(&[1.0, 2.0]).unwrap();
        let v = &e * nalgebra::DVector::from_vec(vec![3.0, 5.0]);
        assert_eq!(v.as_slice(), &[5.0, -3.0]);
    }
}
