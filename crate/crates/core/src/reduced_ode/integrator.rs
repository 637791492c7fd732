//! Dormand–Prince 5(4) with PI step control and continuous output.

use serde::Serialize;

use crate::error::{Error, Result};

/// Components above this magnitude count as a blow-up.
pub const BLOW_UP_LEVEL: f64 = 1e12;

pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Inspects an accepted state. Returning an event stops the run.
    fn check(&self, _t: f64, _y: &[f64]) -> Option<EventKind> {
        None
    }
}

/// Closure-backed system.
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

/// Runs a system backwards: s = −t, dy/ds = −f(−s, y).
pub struct Reversed<'a, S: ?Sized>(pub &'a S);

impl<S: OdeSystem + ?Sized> OdeSystem for Reversed<'_, S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rhs(&self, s: f64, y: &[f64], dy: &mut [f64]) {
        self.0.rhs(-s, y, dy);
        for v in dy.iter_mut() {
            *v = -*v;
        }
    }
    fn check(&self, s: f64, y: &[f64]) -> Option<EventKind> {
        self.0.check(-s, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    BlowUp,
    PositivityLoss,
    DeterminantLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Used for both the absolute and the relative tolerance.
    pub tol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    /// Largest allowed step; `None` leaves it to the controller.
    pub max_step: Option<f64>,
}

impl IntegratorOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_steps: 10_000_000, initial_step: None, max_step: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1e-13..=1e-3).contains(&self.tol) {
            return Err(Error::param("tol", "must lie in [1e-13, 1e-3]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct DenseStep {
    t: f64,
    h: f64,
    // five coefficient blocks of length dim
    rcont: Vec<f64>,
}

/// Accepted steps plus enough data to evaluate the solution anywhere in
/// the covered span.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    t0: f64,
    y0: Vec<f64>,
    steps: Vec<DenseStep>,
    t_last: f64,
    y_last: Vec<f64>,
    pub events: Vec<Event>,
    pub rhs_evals: usize,
    pub rejected: usize,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    /// Last time reached (the end time unless an event stopped the run).
    pub fn t_final(&self) -> f64 {
        self.t_last
    }

    pub fn final_state(&self) -> &[f64] {
        &self.y_last
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps.len()
    }

    /// Times of the accepted step boundaries, starting with t0.
    pub fn step_times(&self) -> Vec<f64> {
        let mut ts = Vec::with_capacity(self.steps.len() + 1);
        ts.push(self.t0);
        ts.extend(self.steps.iter().map(|s| s.t + s.h));
        ts
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t_last
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Option<()> {
        if !self.covers(t) {
            return None;
        }
        if self.steps.is_empty() || t == self.t0 {
            out.copy_from_slice(&self.y0);
            return Some(());
        }
        if t == self.t_last {
            out.copy_from_slice(&self.y_last);
            return Some(());
        }
        let idx = self.steps.partition_point(|s| s.t + s.h < t).min(self.steps.len() - 1);
        let st = &self.steps[idx];
        let n = self.dim;
        let th = (t - st.t) / st.h;
        let th1 = 1.0 - th;
        let r = &st.rcont;
        for i in 0..n {
            out[i] = r[i] + th * (r[n + i] + th1 * (r[2 * n + i] + th * (r[3 * n + i] + th1 * r[4 * n + i])));
        }
        Some(())
    }

    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out).map(|_| out)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn rms_norm(v: &[f64], sk: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(sk).map(|(a, b)| (a / b) * (a / b)).sum();
    (s / v.len() as f64).sqrt()
}

/// Integrates `sys` from `t0` to `t_end > t0`.
///
/// Events recorded by [`OdeSystem::check`] or by the blow-up guard stop
/// the run early; the solution then covers `[t0, t_final()]`.
pub fn solve<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<DenseSolution> {
    opts.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::param("state0", format!("expected {n} components, got {}", y0.len())));
    }
    if !(t_end > t0) || !t_end.is_finite() || !t0.is_finite() {
        return Err(Error::param("t_end", "must be finite and beyond the start time"));
    }
    crate::error::ensure_finite(y0, "initial state")?;

    let tol = opts.tol;
    let span = t_end - t0;
    let h_min = 1e-14 * t_end.abs().max(span);
    let h_max = opts.max_step.unwrap_or(span).min(span);

    let mut sol = DenseSolution {
        dim: n,
        t0,
        y0: y0.to_vec(),
        steps: Vec::new(),
        t_last: t0,
        y_last: y0.to_vec(),
        events: Vec::new(),
        rhs_evals: 0,
        rejected: 0,
    };
    if let Some(kind) = sys.check(t0, y0) {
        sol.events.push(Event { kind, t: t0 });
        return Ok(sol);
    }

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut sk = vec![0.0; n];

    sys.rhs(t, &y, &mut k1);
    sol.rhs_evals += 1;
    crate::error::ensure_finite(&k1, "right-hand side at the initial state")?;

    let mut h = match opts.initial_step {
        Some(h) => h.min(h_max),
        None => {
            for i in 0..n {
                sk[i] = tol + tol * y[i].abs();
            }
            let d0 = rms_norm(&y, &sk);
            let d1 = rms_norm(&k1, &sk);
            let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0 = h0.min(h_max);
            for i in 0..n {
                ytmp[i] = y[i] + h0 * k1[i];
            }
            sys.rhs(t + h0, &ytmp, &mut k2);
            sol.rhs_evals += 1;
            for i in 0..n {
                err[i] = k2[i] - k1[i];
            }
            let d2 = rms_norm(&err, &sk) / h0;
            let dm = d1.max(d2);
            let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
            (100.0 * h0).min(h1).min(h_max)
        }
    };

    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;
    let mut fac_old = 1e-4_f64;
    let mut last_rejected = false;

    loop {
        if sol.steps.len() >= opts.max_steps {
            return Err(Error::TooManySteps { t, max_steps: opts.max_steps });
        }
        let mut last = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            last = true;
        }
        if h < h_min {
            let ymax = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let y0max = y0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if ymax > 1e6 * y0max.max(1.0) {
                sol.events.push(Event { kind: EventKind::BlowUp, t });
                return Ok(sol);
            }
            return Err(Error::StepUnderflow { t, h });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + h };
        sys.rhs(t_new, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t_new, &ynew, &mut k7);
        sol.rhs_evals += 6;

        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            sk[i] = tol + tol * y[i].abs().max(ynew[i].abs());
        }
        let e = rms_norm(&err, &sk);

        if !e.is_finite() {
            sol.rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        let fac11 = e.powf(EXPO1);
        if e <= 1.0 {
            let mut rcont = vec![0.0; 5 * n];
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h * k1[i] - dy;
                rcont[i] = y[i];
                rcont[n + i] = dy;
                rcont[2 * n + i] = bspl;
                rcont[3 * n + i] = dy - h * k7[i] - bspl;
                rcont[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            sol.steps.push(DenseStep { t, h, rcont });
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            sol.t_last = t;
            sol.y_last.copy_from_slice(&y);

            if y.iter().any(|v| v.abs() > BLOW_UP_LEVEL) {
                sol.events.push(Event { kind: EventKind::BlowUp, t });
                return Ok(sol);
            }
            if let Some(kind) = sys.check(t, &y) {
                sol.events.push(Event { kind, t });
                return Ok(sol);
            }
            if last {
                return Ok(sol);
            }

            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = e.max(1e-4);
            h = h_new.min(h_max);
            last_rejected = false;
        } else {
            sol.rejected += 1;
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_decay_matches_closed_form() {
        let sys = FnSystem { dim: 1, f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0] * y[0] };
        let sol = solve(&sys, 0.0, &[1.0], 10.0, &IntegratorOptions::new(1e-10)).unwrap();
        assert!((sol.final_state()[0] - 1.0 / 11.0).abs() < 1e-9);
        for &t in &[0.37, 2.5, 7.123] {
            let y = sol.eval(t).unwrap()[0];
            assert!((y - 1.0 / (1.0 + t)).abs() < 1e-8, "dense output at {t}");
        }
    }

    #[test]
    fn harmonic_oscillator_keeps_phase() {
        let sys = FnSystem {
            dim: 2,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
        };
        let sol = solve(&sys, 0.0, &[1.0, 0.0], 20.0, &IntegratorOptions::new(1e-12)).unwrap();
        let y = sol.final_state();
        assert!((y[0] - 20f64.cos()).abs() < 1e-9);
        assert!((y[1] + 20f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_an_event() {
        let sys = FnSystem { dim: 1, f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0] * y[0] };
        let sol = solve(&sys, 0.0, &[-1.0], 2.0, &IntegratorOptions::new(1e-10)).unwrap();
        assert_eq!(sol.events.len(), 1);
        assert_eq!(sol.events[0].kind, EventKind::BlowUp);
        assert!((sol.events[0].t - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reversed_runs_backwards() {
        let sys = FnSystem { dim: 1, f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] };
        let sol = solve(&Reversed(&sys), 0.0, &[1.0], 1.0, &IntegratorOptions::new(1e-11)).unwrap();
        assert!((sol.final_state()[0] - (-1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn tolerance_outside_range_is_rejected() {
        let sys = FnSystem { dim: 1, f: |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 0.0 };
        assert!(solve(&sys, 0.0, &[1.0], 1.0, &IntegratorOptions::new(1e-2)).is_err());
        assert!(solve(&sys, 0.0, &[1.0], 1.0, &IntegratorOptions::new(1e-14)).is_err());
    }
}
