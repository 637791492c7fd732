//! Adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued integrands,
//! nested axis by axis over boxes.

use rayon::prelude::*;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Abscissae of the 15-point rule on [-1, 1], in a fixed order.
fn nodes() -> [f64; 15] {
    let mut x = [0.0; 15];
    for i in 0..7 {
        x[2 * i] = -XGK[i];
        x[2 * i + 1] = XGK[i];
    }
    x[14] = 0.0;
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl QuadTolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evaluations: usize,
    /// False when the interval budget ran out before the tolerance was met.
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

/// Applies the (7, 15) pair on [a, b] given the 15 integrand samples in
/// `nodes()` order.
fn combine(a: f64, b: f64, samples: &[Vec<f64>], ncomp: usize) -> (Vec<f64>, Vec<f64>) {
    let half = 0.5 * (b - a);
    let mut k = vec![0.0; ncomp];
    let mut g = vec![0.0; ncomp];
    for i in 0..7 {
        let (lo, hi) = (&samples[2 * i], &samples[2 * i + 1]);
        for c in 0..ncomp {
            let s = lo[c] + hi[c];
            k[c] += WGK[i] * s;
            if i % 2 == 1 {
                g[c] += WG[i / 2] * s;
            }
        }
    }
    for c in 0..ncomp {
        k[c] += WGK[7] * samples[14][c];
        g[c] += WG[3] * samples[14][c];
    }
    let value: Vec<f64> = k.iter().map(|v| v * half).collect();
    let error: Vec<f64> = k.iter().zip(&g).map(|(kv, gv)| ((kv - gv) * half).abs()).collect();
    (value, error)
}

fn panel<F>(f: &F, a: f64, b: f64, ncomp: usize, parallel: bool) -> Panel
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let xs = nodes();
    let samples: Vec<Vec<f64>> = if parallel {
        xs.par_iter().map(|x| f(mid + half * x)).collect()
    } else {
        xs.iter().map(|x| f(mid + half * x)).collect()
    };
    let (value, error) = combine(a, b, &samples, ncomp);
    Panel { a, b, value, error }
}

fn within(total: &[f64], err: &[f64], tol: &QuadTolerance) -> bool {
    total.iter().zip(err).all(|(v, e)| *e <= tol.abs.max(tol.rel * v.abs()))
}

/// Globally adaptive integration of a vector-valued function on [a, b].
///
/// `parallel` evaluates the 15 nodes of each panel concurrently; the
/// reduction order is fixed either way.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, ncomp: usize, tol: &QuadTolerance, parallel: bool) -> QuadResult
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    let mut panels = vec![panel(&f, a, b, ncomp, parallel)];
    let mut evaluations = 15;
    loop {
        let mut total = vec![0.0; ncomp];
        let mut err = vec![0.0; ncomp];
        for p in &panels {
            for c in 0..ncomp {
                total[c] += p.value[c];
                err[c] += p.error[c];
            }
        }
        let done = within(&total, &err, tol);
        if done || panels.len() >= tol.max_intervals {
            return QuadResult { values: total, errors: err, evaluations, converged: done };
        }
        // split the panel with the worst scaled error
        let scale: Vec<f64> = total.iter().map(|v| tol.abs.max(tol.rel * v.abs())).collect();
        let worst = panels
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.error.iter().zip(&scale).map(|(e, s)| e / s).fold(0.0, f64::max)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            panels.push(p);
            let (values, errors) = panels.iter().fold((vec![0.0; ncomp], vec![0.0; ncomp]), |(mut v, mut e), q| {
                for c in 0..ncomp {
                    v[c] += q.value[c];
                    e[c] += q.error[c];
                }
                (v, e)
            });
            return QuadResult { values, errors, evaluations, converged: false };
        }
        panels.push(panel(&f, p.a, m, ncomp, parallel));
        panels.push(panel(&f, m, p.b, ncomp, parallel));
        evaluations += 30;
        // keep a canonical order so the final sum is reproducible
        panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    }
}

/// Nested adaptive integration over the box `[lo, hi]`.
///
/// The outermost axis is parallelised across nodes; inner axes run
/// sequentially. Inner integrals use a tolerance ten times tighter so
/// their error does not drive outer refinement.
pub fn integrate_box<F>(f: &F, lo: &[f64], hi: &[f64], ncomp: usize, tol: &QuadTolerance) -> QuadResult
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    assert_eq!(lo.len(), hi.len());
    let mut point = vec![0.0; lo.len()];
    nested(f, lo, hi, 0, &mut point, ncomp, tol, true)
}

#[allow(clippy::too_many_arguments)]
fn nested<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    axis: usize,
    point: &mut [f64],
    ncomp: usize,
    tol: &QuadTolerance,
    parallel: bool,
) -> QuadResult
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let dim = lo.len();
    if axis + 1 == dim {
        let base = point.to_vec();
        return integrate_1d(
            |x| {
                let mut p = base.clone();
                p[axis] = x;
                f(&p)
            },
            lo[axis],
            hi[axis],
            ncomp,
            tol,
            parallel,
        );
    }
    let inner_tol = QuadTolerance { abs: tol.abs * 0.1, rel: tol.rel * 0.1, max_intervals: tol.max_intervals };
    let base = point.to_vec();
    let evals = std::sync::atomic::AtomicUsize::new(0);
    let ok = std::sync::atomic::AtomicBool::new(true);
    let mut res = integrate_1d(
        |x| {
            let mut p = base.clone();
            p[axis] = x;
            let r = nested(f, lo, hi, axis + 1, &mut p, ncomp, &inner_tol, false);
            evals.fetch_add(r.evaluations, std::sync::atomic::Ordering::Relaxed);
            if !r.converged {
                ok.store(false, std::sync::atomic::Ordering::Relaxed);
            }
            r.values
        },
        lo[axis],
        hi[axis],
        ncomp,
        tol,
        parallel,
    );
    res.evaluations = evals.into_inner();
    res.converged &= ok.into_inner();
    res
}
