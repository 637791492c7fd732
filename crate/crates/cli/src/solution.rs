use std::sync::Arc;

use clap::{Args, Subcommand};
use gasflow::exact_solution::{CoefficientSource, Perturbed};
use gasflow::fields::{identity_r, FieldDescriptor, FieldSpec};
use gasflow::geometry::ChartMetric;
use gasflow::verify::{pde_residual, Extras, ResidualGrid, SeparatedForm, SeparatedSolution};
use gasflow::{Forcing, GasSolution, GasState, InitialData, ParamSet, ReducedCoefficients, SystemKind};
use serde::{Deserialize, Serialize};

use crate::config::{load, positive, set, Common, ParamFlags};
use crate::emit::{json, nums, Cell, Csv, OutDir};
use crate::ode::default_state;
use crate::{dry_run, CliError, List};

#[derive(Subcommand, Debug)]
pub enum SolutionCmd {
    /// Build a linear-profile solution and sample ρ, p and V on a grid.
    #[command(allow_negative_numbers = true)]
    Assemble(AssembleArgs),
    /// Finite-difference residuals of the Euler system and their order.
    #[command(allow_negative_numbers = true)]
    Residual(ResidualArgs),
}

pub fn run(cmd: SolutionCmd) -> Result<(), CliError> {
    match cmd {
        SolutionCmd::Assemble(a) => assemble(a),
        SolutionCmd::Residual(a) => residual(a),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataCfg {
    /// The algebraic planar family; G₁(0) comes from the state.
    Algebraic {
        #[serde(default = "four")]
        a: f64,
    },
    Gaussian {
        rho_c: f64,
        rho_width: f64,
        p_c: f64,
        p_width: f64,
    },
}

fn four() -> f64 {
    4.0
}

/// Velocity a(t)Λ with a = a₀/(1 + a₀t) and ρ, p carried by the flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicCfg {
    pub field: FieldDescriptor,
    pub a0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolutionCfg {
    pub system: SystemKind,
    pub params: ParamSet,
    pub state: Option<Vec<f64>>,
    pub data: DataCfg,
    /// Take the pressure constant and G₁(0) from the data so that the
    /// assembled state solves the Euler system (2D special and shifted
    /// systems).
    pub match_data: bool,
    pub t_min: f64,
    pub t_max: f64,
    pub tol: f64,
    /// Scale the isotropic part of A; a negative control.
    pub perturb: Option<f64>,
    pub kinematic: Option<KinematicCfg>,
}

impl Default for SolutionCfg {
    fn default() -> Self {
        Self {
            system: SystemKind::TwoDSpecial,
            params: ParamSet { gamma: 1.4, mu: 0.2, l: 0.5, ..Default::default() },
            state: Some(vec![1.0, 0.1, 0.3]),
            data: DataCfg::Algebraic { a: 4.0 },
            match_data: true,
            t_min: -0.5,
            t_max: 6.0,
            tol: 1e-12,
            perturb: None,
            kinematic: None,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct SolutionFlags {
    #[arg(long)]
    system: Option<String>,
    #[command(flatten)]
    params: ParamFlags,
    #[arg(long)]
    state: Option<List>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    perturb: Option<f64>,
}

impl SolutionFlags {
    pub fn apply(&self, cfg: &mut SolutionCfg) -> Result<(), CliError> {
        if let Some(s) = &self.system {
            let kind = SystemKind::parse(s)?;
            if kind != cfg.system && self.state.is_none() {
                cfg.state = None;
            }
            cfg.system = kind;
        }
        self.params.apply(&mut cfg.params);
        if self.params.k_given() {
            cfg.match_data = false;
        }
        set(&mut cfg.state, self.state.clone().map(|l| Some(l.0)));
        set(&mut cfg.t_max, self.t_max);
        set(&mut cfg.tol, self.tol);
        set(&mut cfg.perturb, self.perturb.map(Some));
        Ok(())
    }
}

pub enum Built {
    Linear(Arc<GasSolution>),
    Kinematic(Box<SeparatedSolution>),
}

pub struct Problem {
    pub built: Built,
    pub forcing: Forcing,
    pub gamma: f64,
    /// Parameters and state actually used after matching to the data.
    pub params: ParamSet,
    pub state: Vec<f64>,
}

impl Problem {
    pub fn state(&self) -> &dyn GasState {
        match &self.built {
            Built::Linear(s) => s.as_ref(),
            Built::Kinematic(s) => s.as_ref(),
        }
    }

    pub fn dim(&self) -> usize {
        self.state().dim()
    }

    pub fn linear(&self) -> Option<&Arc<GasSolution>> {
        match &self.built {
            Built::Linear(s) => Some(s),
            Built::Kinematic(_) => None,
        }
    }
}

fn spatial_dim(kind: SystemKind) -> Result<usize, CliError> {
    match kind {
        SystemKind::ThreeD => Ok(3),
        SystemKind::TwoDSpecial | SystemKind::TwoDGeneral | SystemKind::TwoDWithShift => Ok(2),
        _ => Err(CliError::Config(format!("{} has no linear velocity profile", kind.label()))),
    }
}

fn build_data(cfg: &DataCfg, n: usize, gamma: f64, g1_0: f64) -> Result<InitialData, CliError> {
    Ok(match *cfg {
        DataCfg::Algebraic { a } => {
            if n != 2 {
                return Err(CliError::Config("the algebraic data family is planar".into()));
            }
            InitialData::algebraic(a, gamma, g1_0)?
        }
        DataCfg::Gaussian { rho_c, rho_width, p_c, p_width } => {
            InitialData::gaussian(n, gamma, rho_c, rho_width, p_c, p_width)?
        }
    })
}

/// Validates the configuration and builds everything short of
/// integrating; `assemble` then integrates.
pub struct Plan {
    cfg: SolutionCfg,
    data: InitialData,
    params: ParamSet,
    state: Vec<f64>,
    field: Option<FieldSpec>,
}

pub fn plan(cfg: &SolutionCfg) -> Result<Plan, CliError> {
    let mut params = cfg.params.clone();
    params.validate()?;
    positive("tol", cfg.tol)?;
    if let Some(s) = cfg.perturb {
        positive("perturb", s)?;
    }
    let gamma = params.gamma;
    if let Some(k) = &cfg.kinematic {
        let field = k.field.build()?;
        let n = field.dim();
        let data = build_data(&cfg.data, n, gamma, 1.0)?;
        if !k.a0.is_finite() {
            return Err(CliError::Config("`kinematic.a0` must be finite".into()));
        }
        return Ok(Plan { cfg: cfg.clone(), data, params, state: vec![k.a0], field: Some(field) });
    }
    let kind = cfg.system;
    let n = spatial_dim(kind)?;
    let mut state = match &cfg.state {
        Some(s) => s.clone(),
        None => default_state(kind, gamma)?,
    };
    if state.len() != kind.dim() {
        return Err(CliError::Config(format!(
            "`state` needs {} components ({})",
            kind.dim(),
            kind.state_names().join(", ")
        )));
    }
    if !(cfg.t_min <= 0.0 && cfg.t_max > 0.0) {
        return Err(CliError::Config("need t_min <= 0 < t_max".into()));
    }
    let g1_0 = match kind {
        SystemKind::TwoDSpecial => state[0],
        SystemKind::TwoDWithShift => 1.0 / state[0],
        _ => 1.0,
    };
    let data = build_data(&cfg.data, n, gamma, g1_0)?;
    if cfg.match_data && matches!(kind, SystemKind::TwoDSpecial | SystemKind::TwoDWithShift) {
        let (g1, _) = data.g1_ep()?;
        params.k = data.special_k()?;
        state[0] = if kind == SystemKind::TwoDSpecial { g1 } else { 1.0 / g1 };
    }
    Ok(Plan { cfg: cfg.clone(), data, params, state, field: None })
}

impl Plan {
    pub fn build(self) -> Result<Problem, CliError> {
        let gamma = self.params.gamma;
        if let (Some(field), Some(_)) = (self.field, &self.cfg.kinematic) {
            let sep = SeparatedSolution::new(field, self.data, self.state[0])?;
            return Ok(Problem {
                built: Built::Kinematic(Box::new(sep)),
                forcing: Forcing::None,
                gamma,
                params: self.params,
                state: self.state,
            });
        }
        let kind = self.cfg.system;
        let inner = ReducedCoefficients::new(kind, self.params.clone(), self.state.clone())?;
        let src: Arc<dyn CoefficientSource> = match self.cfg.perturb {
            Some(scale) => Arc::new(Perturbed { inner, scale }),
            None => Arc::new(inner),
        };
        let sol = GasSolution::assemble(src, self.data, gamma, self.cfg.t_min, self.cfg.t_max, self.cfg.tol)?;
        let p = &self.params;
        let forcing = if kind == SystemKind::ThreeD {
            Forcing::Spatial { mu: p.mu, delta: p.delta as f64, omega: [0.0, 0.0, 1.0] }
        } else {
            Forcing::Planar { mu: p.mu, l: p.l }
        };
        Ok(Problem { built: Built::Linear(Arc::new(sol)), forcing, gamma, params: self.params, state: self.state })
    }
}

/// a(t) of the separated form of the current problem, if it has one.
pub struct SeparatedParts {
    pub field: FieldSpec,
    pub a: Box<dyn Fn(f64) -> f64 + Sync + Send>,
    pub euler: bool,
}

impl SeparatedParts {
    pub fn extras(&self) -> Extras<'_> {
        Extras {
            separated: Some(SeparatedForm { field: &self.field, a: &*self.a, euler: self.euler }),
            ..Default::default()
        }
    }
}

/// Separated form of the problem: the kinematic field, or Λ = r with
/// a = α when `radial` is set on an isotropic linear solution.
pub fn separated_parts(
    problem: &Problem,
    system: SystemKind,
    radial: bool,
) -> Result<Option<SeparatedParts>, CliError> {
    match &problem.built {
        Built::Kinematic(sep) => {
            let a0 = sep.a0;
            Ok(Some(SeparatedParts {
                field: sep.field.clone(),
                a: Box::new(move |t| a0 / (1.0 + a0 * t)),
                euler: false,
            }))
        }
        Built::Linear(sol) if radial => {
            let idx = match system {
                SystemKind::TwoDSpecial => 2,
                SystemKind::ThreeD => 0,
                _ => return Err(CliError::Config("`separated_radial` needs 2d-special or 3d".into())),
            };
            // beta sits at index 1 in both systems
            if problem.state[1] != 0.0 || problem.params.l != 0.0 || problem.params.mu != 0.0 {
                return Err(CliError::Config("`separated_radial` needs beta(0) = 0 and no forcing".into()));
            }
            let s = sol.clone();
            let field = identity_r(ChartMetric::euclidean(problem.dim()))?;
            Ok(Some(SeparatedParts {
                field,
                a: Box::new(move |t| s.flow(t).map(|f| f.coefficients[idx]).unwrap_or(f64::NAN)),
                euler: true,
            }))
        }
        Built::Linear(_) => Ok(None),
    }
}

// ---------------------------------------------------------------- assemble

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleCfg {
    pub times: Vec<f64>,
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for SampleCfg {
    fn default() -> Self {
        Self { times: vec![0.0, 1.0, 2.0], half_width: 2.0, nodes: 11 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssembleCfg {
    pub solution: SolutionCfg,
    pub sample: SampleCfg,
}

#[derive(Args, Debug)]
pub struct AssembleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solution: SolutionFlags,
    /// Comma-separated sample times.
    #[arg(long)]
    times: Option<List>,
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Serialize)]
struct AssembleSummary {
    system: &'static str,
    params: ParamSet,
    state: Vec<f64>,
    time_range: (f64, f64),
    events: Vec<gasflow::Event>,
    /// det M(t) at each sample time reached.
    determinants: Vec<(f64, f64)>,
    samples: usize,
}

fn assemble(a: AssembleArgs) -> Result<(), CliError> {
    let mut cfg: AssembleCfg = load(a.common.config.as_deref())?;
    a.solution.apply(&mut cfg.solution)?;
    set(&mut cfg.sample.times, a.times.map(|l| l.0));
    set(&mut cfg.sample.nodes, a.nodes);
    if cfg.solution.kinematic.is_some() {
        return Err(CliError::Config("`solution assemble` builds linear-profile solutions".into()));
    }
    positive("sample.half_width", cfg.sample.half_width)?;
    if cfg.sample.nodes < 2 {
        return Err(CliError::Config("`sample.nodes` must be at least 2".into()));
    }
    let plan = plan(&cfg.solution)?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let problem = plan.build()?;
    let sol = problem.linear().expect("linear").clone();
    let n = sol.dim();
    let (t_lo, t_hi) = sol.time_range();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["rho", "p"].map(String::from));
    header.extend((1..=n).map(|i| format!("v{i}")));
    let mut csv = Csv::new(&header);
    let mut dets = Vec::new();
    let k = cfg.sample.nodes;
    let w = cfg.sample.half_width;
    for &t in cfg.sample.times.iter().filter(|t| (t_lo..=t_hi).contains(*t)) {
        let fs = sol.flow(t)?;
        dets.push((t, fs.m.determinant()));
        for idx in 0..k.pow(n as u32) {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    let i = rem % k;
                    rem /= k;
                    -w + 2.0 * w * i as f64 / (k - 1) as f64
                })
                .collect();
            let (rho, p) = sol.rho_p_at(&fs, &x);
            let v = fs.velocity(&x);
            let mut row = vec![Cell::N(t)];
            row.extend(nums(&x));
            row.extend([Cell::N(rho), Cell::N(p)]);
            row.extend(nums(v.as_slice()));
            csv.row(&row);
        }
    }
    let events = sol.events();
    let summary = AssembleSummary {
        system: cfg.solution.system.label(),
        params: problem.params.clone(),
        state: problem.state.clone(),
        time_range: (t_lo, t_hi),
        events: events.clone(),
        samples: dets.len() * k.pow(n as u32),
        determinants: dets,
    };
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("solution.csv", &csv.render())?;
    out.json("summary.json", &summary)?;
    println!("{}", json(&summary));
    if !events.is_empty() {
        out.json("event.json", &events)?;
        return Err(CliError::Event(json(&events)));
    }
    Ok(())
}

// ---------------------------------------------------------------- residual

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualCfg {
    pub solution: SolutionCfg,
    pub grid: Option<ResidualGrid>,
}

#[derive(Args, Debug)]
pub struct ResidualArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solution: SolutionFlags,
    /// Comma-separated grid times.
    #[arg(long)]
    times: Option<List>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    h_t: Option<f64>,
    #[arg(long)]
    h_x: Option<f64>,
}

pub fn default_grid(n: usize) -> ResidualGrid {
    ResidualGrid {
        times: vec![0.5, 1.0, 1.5, 2.0],
        lo: vec![-2.0; n],
        hi: vec![2.0; n],
        nodes_per_axis: if n == 2 { 9 } else { 5 },
        h_t: 0.1,
        h_x: 0.02,
    }
}

fn residual(a: ResidualArgs) -> Result<(), CliError> {
    let mut cfg: ResidualCfg = load(a.common.config.as_deref())?;
    a.solution.apply(&mut cfg.solution)?;
    let plan = plan(&cfg.solution)?;
    let n =
        if let Some(k) = &cfg.solution.kinematic { k.field.build()?.dim() } else { spatial_dim(cfg.solution.system)? };
    let mut grid = cfg.grid.clone().unwrap_or_else(|| default_grid(n));
    set(&mut grid.times, a.times.map(|l| l.0));
    set(&mut grid.nodes_per_axis, a.nodes);
    set(&mut grid.h_t, a.h_t);
    set(&mut grid.h_x, a.h_x);
    grid.validate(n)?;
    cfg.grid = Some(grid.clone());
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let problem = plan.build()?;
    let report = pde_residual(problem.state(), problem.gamma, &problem.forcing, &grid)?;
    let mut csv = Csv::new(&[
        "h_t",
        "h_x",
        "momentum_max",
        "momentum_rms",
        "continuity_max",
        "continuity_rms",
        "pressure_max",
        "pressure_rms",
        "total_max",
        "used",
        "excluded",
    ]);
    for l in &report.levels {
        let mom_max = l.momentum_max.iter().fold(0.0f64, |m, v| m.max(*v));
        let mom_rms = l.momentum_rms.iter().fold(0.0f64, |m, v| m.max(*v));
        csv.row(&[
            Cell::N(l.h_t),
            Cell::N(l.h_x),
            Cell::N(mom_max),
            Cell::N(mom_rms),
            Cell::N(l.continuity_max),
            Cell::N(l.continuity_rms),
            Cell::N(l.pressure_max),
            Cell::N(l.pressure_rms),
            Cell::N(l.total_max),
            Cell::I(l.used as i64),
            Cell::I(l.excluded as i64),
        ]);
    }
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("levels.csv", &csv.render())?;
    out.json("residual.json", &report)?;
    println!("{}", json(&report));
    Ok(())
}
