use clap::{Args, Subcommand};
use gasflow::reduced_ode::analysis::{asymptotic_fit, Equilibrium, FitModel, FitResult};
use gasflow::reduced_ode::{self as ro, energy, general_scaled, ParamSet, SystemKind};
use gasflow::DenseSolution;
use serde::{Deserialize, Serialize};

use crate::config::{load, positive, positive_count, set, Common, ParamFlags};
use crate::emit::{json, nums, svg, Cell, Csv, Marker, OutDir, Polyline};
use crate::{dry_run, CliError, List};

#[derive(Subcommand, Debug)]
pub enum OdeCmd {
    /// Integrate one reduced system from one initial state.
    #[command(allow_negative_numbers = true)]
    Run(RunArgs),
    /// Forward and backward trajectories from a set of seeds.
    #[command(allow_negative_numbers = true)]
    Phase(PhaseArgs),
    /// Rest points and their linear stability.
    #[command(allow_negative_numbers = true)]
    Equilibria(EqArgs),
    /// Late-time power-law fits against the predicted rates.
    #[command(allow_negative_numbers = true)]
    Asymptotics(AsymArgs),
}

pub fn run(cmd: OdeCmd) -> Result<(), CliError> {
    match cmd {
        OdeCmd::Run(a) => ode_run(a),
        OdeCmd::Phase(a) => ode_phase(a),
        OdeCmd::Equilibria(a) => ode_equilibria(a),
        OdeCmd::Asymptotics(a) => ode_asymptotics(a),
    }
}

fn parse_system(s: Option<String>) -> Result<Option<SystemKind>, CliError> {
    s.map(|s| SystemKind::parse(&s).map_err(CliError::from)).transpose()
}

fn require_system(s: Option<SystemKind>) -> Result<SystemKind, CliError> {
    s.ok_or_else(|| CliError::Config("`system` is required".into()))
}

fn is_planar(kind: SystemKind) -> bool {
    matches!(kind, SystemKind::ConstDiv | SystemKind::DryFriction | SystemKind::AeroFriction)
}

pub fn default_state(kind: SystemKind, gamma: f64) -> Result<Vec<f64>, CliError> {
    Ok(match kind {
        SystemKind::TwoDSpecial => vec![1.0, 0.1, 0.2],
        SystemKind::TwoDGeneral => {
            let g = general_scaled(1.0, 1.2, 0.1, gamma)?;
            vec![g[0], g[1], g[2], 0.3, 0.2, -0.4, 0.5]
        }
        SystemKind::TwoDWithShift => vec![1.0, 0.0, 0.0, 0.2, 0.1, 0.0, 0.0],
        SystemKind::ThreeD => vec![0.2, 0.1, 1.0],
        _ => vec![0.5, 1.0],
    })
}

fn check_state(kind: SystemKind, state: &[f64]) -> Result<(), CliError> {
    if state.len() != kind.dim() {
        return Err(CliError::Config(format!(
            "`state` needs {} components ({}) for {}",
            kind.dim(),
            kind.state_names().join(", "),
            kind.label()
        )));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("`state` must be finite".into()));
    }
    Ok(())
}

fn names(kind: SystemKind) -> Vec<String> {
    kind.state_names().iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------- run

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunCfg {
    pub system: Option<SystemKind>,
    pub params: ParamSet,
    pub state: Option<Vec<f64>>,
    pub t_end: f64,
    pub tol: f64,
    /// Uniform output samples; accepted steps when absent.
    pub samples: Option<usize>,
}

impl Default for RunCfg {
    fn default() -> Self {
        Self { system: None, params: ParamSet::default(), state: None, t_end: 10.0, tol: 1e-10, samples: None }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    system: Option<String>,
    #[command(flatten)]
    params: ParamFlags,
    /// Comma-separated initial state.
    #[arg(long)]
    state: Option<List>,
    /// Initial a of the (a, Gtilde) systems.
    #[arg(long)]
    a0: Option<f64>,
    /// Initial Gtilde of the (a, Gtilde) systems.
    #[arg(long)]
    gtilde0: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Serialize)]
struct EnergySummary {
    kinetic: f64,
    potential: f64,
    total: f64,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    system: &'static str,
    params: &'a ParamSet,
    initial_state: &'a [f64],
    t_final: f64,
    final_state: &'a [f64],
    steps: usize,
    events: &'a [gasflow::Event],
    energy_initial: Option<EnergySummary>,
    energy_final: Option<EnergySummary>,
}

fn energy_summary(kind: SystemKind, y: &[f64], p: &ParamSet) -> Option<EnergySummary> {
    energy(kind, y, p).ok().map(|e| EnergySummary { kinetic: e.kinetic, potential: e.potential, total: e.total })
}

fn ode_run(a: RunArgs) -> Result<(), CliError> {
    let mut cfg: RunCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.system, parse_system(a.system)?.map(Some));
    a.params.apply(&mut cfg.params);
    set(&mut cfg.state, a.state.map(|l| Some(l.0)));
    set(&mut cfg.t_end, a.t_end);
    set(&mut cfg.tol, a.tol);
    set(&mut cfg.samples, a.samples.map(Some));
    let kind = require_system(cfg.system)?;
    if a.a0.is_some() || a.gtilde0.is_some() {
        if !is_planar(kind) {
            return Err(CliError::Config("`--a0`/`--gtilde0` apply to the (a, Gtilde) systems".into()));
        }
        let mut s = cfg.state.clone().unwrap_or(default_state(kind, cfg.params.gamma)?);
        set(&mut s[0], a.a0);
        set(&mut s[1], a.gtilde0);
        cfg.state = Some(s);
    }
    let state = match &cfg.state {
        Some(s) => s.clone(),
        None => default_state(kind, cfg.params.gamma)?,
    };
    check_state(kind, &state)?;
    positive("t_end", cfg.t_end)?;
    positive("tol", cfg.tol)?;
    if let Some(n) = cfg.samples {
        positive_count("samples", n)?;
    }
    cfg.params.validate()?;
    cfg.state = Some(state.clone());
    if a.common.dry_run {
        return dry_run(&cfg);
    }

    let sol = ro::solve_dense(kind, &state, &cfg.params, cfg.t_end, cfg.tol)?;
    let tr = match cfg.samples {
        Some(n) => ro::Trajectory::uniform(names(kind), &sol, n),
        None => ro::Trajectory::from_steps(names(kind), &sol),
    };
    let out = OutDir::new(a.common.out.as_deref())?;
    let mut header = vec!["t".to_string()];
    header.extend(names(kind));
    let mut csv = Csv::new(&header);
    for (t, y) in tr.times.iter().zip(&tr.states) {
        let mut row = vec![Cell::N(*t)];
        row.extend(nums(y));
        csv.row(&row);
    }
    out.write("trajectory.csv", &csv.render())?;
    let summary = RunSummary {
        system: kind.label(),
        params: &cfg.params,
        initial_state: &state,
        t_final: sol.t_final(),
        final_state: sol.final_state(),
        steps: sol.accepted_steps(),
        events: &sol.events,
        energy_initial: energy_summary(kind, &state, &cfg.params),
        energy_final: energy_summary(kind, sol.final_state(), &cfg.params),
    };
    out.json("summary.json", &summary)?;
    println!("{}", json(&summary));
    if !sol.events.is_empty() {
        out.json("event.json", &sol.events)?;
        return Err(CliError::Event(json(&sol.events)));
    }
    Ok(())
}

// ---------------------------------------------------------------- phase

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseCfg {
    pub system: Option<SystemKind>,
    pub params: ParamSet,
    pub seeds: Option<Vec<Vec<f64>>>,
    pub t_end: f64,
    pub tol: f64,
    pub samples: usize,
}

impl Default for PhaseCfg {
    fn default() -> Self {
        Self { system: None, params: ParamSet::default(), seeds: None, t_end: 5.0, tol: 1e-10, samples: 200 }
    }
}

#[derive(Args, Debug)]
pub struct PhaseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    system: Option<String>,
    #[command(flatten)]
    params: ParamFlags,
    /// Seeds as a JSON list of states.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

pub fn default_seeds(kind: SystemKind) -> Option<Vec<Vec<f64>>> {
    if is_planar(kind) {
        let mut s = Vec::new();
        for gt in [0.5, 1.5] {
            for a in [-1.0, -0.4, 0.4, 1.0] {
                s.push(vec![a, gt]);
            }
        }
        Some(s)
    } else if kind == SystemKind::TwoDSpecial {
        let mut s = Vec::new();
        for g1 in [0.5, 1.5] {
            for al in [-0.4, -0.1, 0.1, 0.4] {
                s.push(vec![g1, 0.1, al]);
            }
        }
        Some(s)
    } else {
        None
    }
}

/// Horizontal and vertical state components of the portrait.
fn axes(kind: SystemKind) -> (usize, usize) {
    match kind {
        SystemKind::TwoDSpecial => (0, 2),
        k if is_planar(k) => (1, 0),
        _ => (0, 1),
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: Vec<f64>,
    forward_t_final: f64,
    backward_t_final: f64,
    forward_events: Vec<gasflow::Event>,
    backward_events: Vec<gasflow::Event>,
    /// Mismatch with the a → −a, t → −t mirror image; friction breaks it.
    reflection_defect: Option<f64>,
}

#[derive(Serialize)]
struct PhaseSummary {
    system: &'static str,
    t_end: f64,
    equilibria: Option<Vec<Equilibrium>>,
    seeds: Vec<SeedSummary>,
}

fn ode_phase(a: PhaseArgs) -> Result<(), CliError> {
    let mut cfg: PhaseCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.system, parse_system(a.system)?.map(Some));
    a.params.apply(&mut cfg.params);
    if let Some(s) = a.seeds {
        let seeds: Vec<Vec<f64>> = serde_json::from_str(&s).map_err(|e| CliError::Config(format!("--seeds: {e}")))?;
        cfg.seeds = Some(seeds);
    }
    set(&mut cfg.t_end, a.t_end);
    set(&mut cfg.tol, a.tol);
    set(&mut cfg.samples, a.samples);
    let kind = require_system(cfg.system)?;
    let seeds = match cfg.seeds.clone().or_else(|| default_seeds(kind)) {
        Some(s) => s,
        None => return Err(CliError::Config(format!("`seeds` is required for {}", kind.label()))),
    };
    for s in &seeds {
        check_state(kind, s)?;
    }
    positive("t_end", cfg.t_end)?;
    positive("tol", cfg.tol)?;
    if cfg.samples < 2 {
        return Err(CliError::Config("`samples` must be at least 2".into()));
    }
    cfg.params.validate()?;
    cfg.seeds = Some(seeds.clone());
    if a.common.dry_run {
        return dry_run(&cfg);
    }

    let portrait = ro::phase_portrait(kind, &cfg.params, &seeds, cfg.t_end, cfg.tol, cfg.samples)?;
    let eq = ro::equilibria(kind, &cfg.params).ok();
    let mut header = vec!["seed".to_string(), "direction".to_string(), "t".to_string()];
    header.extend(names(kind));
    let mut csv = Csv::new(&header);
    let (ix, iy) = axes(kind);
    let mut lines = Vec::new();
    let mut seed_rows = Vec::new();
    for (i, p) in portrait.iter().enumerate() {
        for (dir, tr) in [("backward", &p.backward), ("forward", &p.forward)] {
            for (t, y) in tr.times.iter().zip(&tr.states) {
                let mut row = vec![Cell::I(i as i64), Cell::T(dir.into()), Cell::N(*t)];
                row.extend(nums(y));
                csv.row(&row);
            }
            lines.push(Polyline {
                points: tr.states.iter().map(|y| (y[ix], y[iy])).collect(),
                class: if dir == "forward" { "forward" } else { "backward" },
            });
        }
        let defect = if is_planar(kind) {
            ro::reflection_defect(kind, &cfg.params, &p.seed, cfg.t_end, cfg.tol).ok()
        } else {
            None
        };
        seed_rows.push(SeedSummary {
            seed: p.seed.clone(),
            forward_t_final: p.forward.times.last().copied().unwrap_or(0.0),
            backward_t_final: p.backward.times.first().copied().unwrap_or(0.0),
            forward_events: p.forward.events.clone(),
            backward_events: p.backward.events.clone(),
            reflection_defect: defect,
        });
    }
    let markers: Vec<Marker> = eq
        .iter()
        .flatten()
        .map(|e| Marker { at: (e.state[ix], e.state[iy]), label: format!("{:?}", e.stability).to_lowercase() })
        .collect();
    let state_names = kind.state_names();
    let picture = svg(state_names[ix], state_names[iy], &lines, &markers);
    let summary = PhaseSummary { system: kind.label(), t_end: cfg.t_end, equilibria: eq, seeds: seed_rows };
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("portrait.csv", &csv.render())?;
    out.write("portrait.svg", &picture)?;
    out.json("summary.json", &summary)?;
    println!("{}", json(&summary));
    Ok(())
}

// ---------------------------------------------------------------- equilibria

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqCfg {
    pub system: Option<SystemKind>,
    pub params: ParamSet,
}

#[derive(Args, Debug)]
pub struct EqArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    system: Option<String>,
    #[command(flatten)]
    params: ParamFlags,
}

fn ode_equilibria(a: EqArgs) -> Result<(), CliError> {
    let mut cfg: EqCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.system, parse_system(a.system)?.map(Some));
    a.params.apply(&mut cfg.params);
    let kind = require_system(cfg.system)?;
    cfg.params.validate()?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let eq = ro::equilibria(kind, &cfg.params)?;
    let out = OutDir::new(a.common.out.as_deref())?;
    let report = serde_json::json!({ "system": kind.label(), "equilibria": eq });
    out.json("equilibria.json", &report)?;
    println!("{}", json(&report));
    Ok(())
}

// ---------------------------------------------------------------- asymptotics

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymCfg {
    pub system: Option<SystemKind>,
    pub params: ParamSet,
    pub state: Option<Vec<f64>>,
    pub t_end: f64,
    pub tol: f64,
}

impl Default for AsymCfg {
    fn default() -> Self {
        Self { system: None, params: ParamSet::default(), state: None, t_end: 1e4, tol: 1e-10 }
    }
}

#[derive(Args, Debug)]
pub struct AsymArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    system: Option<String>,
    #[command(flatten)]
    params: ParamFlags,
    #[arg(long)]
    state: Option<List>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

/// One fitted component next to the rate the reduced theory predicts.
#[derive(Debug, Clone, Serialize)]
pub struct FitEntry {
    pub component: String,
    pub fixed_exponent: Option<f64>,
    pub exponent: f64,
    pub prefactor: f64,
    pub fit_error: f64,
    /// "exponent" or "prefactor"
    pub compared: Option<&'static str>,
    pub predicted: Option<f64>,
    pub rel_error: Option<f64>,
    pub tolerance: Option<f64>,
    pub within_tolerance: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymReport {
    pub system: &'static str,
    pub t_final: f64,
    pub final_state: Vec<f64>,
    /// t·y(t) at the final time for every component.
    pub scaled_final: Vec<f64>,
    pub fits: Vec<FitEntry>,
    pub fit_failures: Vec<String>,
}

struct Fitter<'a> {
    sol: &'a DenseSolution,
    kind: SystemKind,
    fits: Vec<FitEntry>,
    failures: Vec<String>,
}

impl Fitter<'_> {
    fn fit(&mut self, comp: usize, fixed: Option<f64>) -> Option<FitResult> {
        match asymptotic_fit(self.sol, comp, FitModel::PowerLaw, fixed) {
            Ok(f) => Some(f),
            Err(e) => {
                self.failures.push(format!("{}: {e}", self.kind.state_names()[comp]));
                None
            }
        }
    }

    /// `what` picks whether the exponent or the prefactor is compared.
    fn compare(&mut self, comp: usize, fixed: Option<f64>, what: Option<(&'static str, f64, f64)>) {
        let Some(f) = self.fit(comp, fixed) else { return };
        let (compared, predicted, rel, tol, ok) = match what {
            Some((w, pred, tol)) => {
                let got = if w == "exponent" { f.exponent } else { f.prefactor };
                let rel = ((got - pred) / pred).abs();
                (Some(w), Some(pred), Some(rel), Some(tol), Some(rel <= tol))
            }
            None => (None, None, None, None, None),
        };
        self.fits.push(FitEntry {
            component: self.kind.state_names()[comp].to_string(),
            fixed_exponent: fixed,
            exponent: f.exponent,
            prefactor: f.prefactor,
            fit_error: f.fit_error,
            compared,
            predicted,
            rel_error: rel,
            tolerance: tol,
            within_tolerance: ok,
        });
    }
}

/// Integrates to `t_end` and fits the late-time decade.
pub fn asymptotics(
    kind: SystemKind,
    params: &ParamSet,
    state: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<AsymReport, CliError> {
    let sol = ro::solve_dense(kind, state, params, t_end, tol)?;
    if !sol.events.is_empty() {
        return Err(CliError::Event(json(&sol.events)));
    }
    let g = params.gamma;
    let mut f = Fitter { sol: &sol, kind, fits: Vec::new(), failures: Vec::new() };
    match kind {
        SystemKind::TwoDSpecial => {
            f.compare(2, None, Some(("exponent", -1.0, 0.02)));
            f.compare(2, Some(-1.0), Some(("prefactor", 1.0 / (2.0 * g), 0.02)));
            f.compare(0, None, Some(("exponent", -1.0 / g, 0.03)));
            if params.mu > 0.0 && params.k1() > 0.0 {
                let l2 = params.l * params.l + params.mu * params.mu;
                let pred = (l2 / (2.0 * params.k1() * params.mu * g)).powf(1.0 / g);
                f.compare(0, Some(-1.0 / g), Some(("prefactor", pred, 0.05)));
            }
            if params.l != 0.0 {
                f.compare(1, Some(-1.0), None);
            }
        }
        SystemKind::ThreeD => {
            f.compare(0, Some(-1.0), Some(("prefactor", 1.0 / (3.0 * g - 1.0), 0.02)));
            if params.mu > 0.0 && params.delta == 1 {
                f.compare(1, Some(-1.0), Some(("prefactor", 1.0 / (params.mu * (3.0 * g - 1.0)), 0.05)));
            }
            f.compare(2, None, None);
        }
        _ => {
            for c in 0..kind.dim() {
                f.compare(c, None, None);
            }
        }
    }
    let t = sol.t_final();
    Ok(AsymReport {
        system: kind.label(),
        t_final: t,
        final_state: sol.final_state().to_vec(),
        scaled_final: sol.final_state().iter().map(|v| t * v).collect(),
        fits: f.fits,
        fit_failures: f.failures,
    })
}

fn ode_asymptotics(a: AsymArgs) -> Result<(), CliError> {
    let mut cfg: AsymCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.system, parse_system(a.system)?.map(Some));
    a.params.apply(&mut cfg.params);
    set(&mut cfg.state, a.state.map(|l| Some(l.0)));
    set(&mut cfg.t_end, a.t_end);
    set(&mut cfg.tol, a.tol);
    let kind = require_system(cfg.system)?;
    let state = match &cfg.state {
        Some(s) => s.clone(),
        None => default_state(kind, cfg.params.gamma)?,
    };
    check_state(kind, &state)?;
    positive("t_end", cfg.t_end)?;
    positive("tol", cfg.tol)?;
    cfg.params.validate()?;
    cfg.state = Some(state.clone());
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let report = asymptotics(kind, &cfg.params, &state, cfg.t_end, cfg.tol)?;
    let out = OutDir::new(a.common.out.as_deref())?;
    out.json("asymptotics.json", &report)?;
    println!("{}", json(&report));
    Ok(())
}
