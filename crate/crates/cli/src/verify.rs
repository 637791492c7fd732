use clap::{Args, Subcommand};
use gasflow::exact_solution::{corollary_feasible_params, CorollaryReport};
use gasflow::verify::{
    field_bounds, functional_identities, functionals, lemma51_check, singularity_criterion, singularity_from_snapshot,
    Extras, Lemma51Report, SingularityInput, SingularityReport,
};
use gasflow::{DomainBox, QuadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load, positive, positive_count, set, Common};
use crate::emit::{json, Cell, Csv, OutDir};
use crate::solution::{plan, separated_parts, Problem, SolutionCfg, SolutionFlags};
use crate::{dry_run, CliError, List};

#[derive(Subcommand, Debug)]
pub enum VerifyCmd {
    /// Integral functionals of a solution at given times.
    #[command(allow_negative_numbers = true)]
    Functionals(FunctionalsArgs),
    /// Finite-difference checks of the evolution laws of the functionals.
    #[command(allow_negative_numbers = true)]
    Identities(IdentitiesArgs),
    /// The interpolation inequality on random Gaussian mixtures.
    #[command(allow_negative_numbers = true)]
    Lemma51(Lemma51Args),
    /// Search for parameters admitting interior solutions.
    #[command(allow_negative_numbers = true)]
    Corollary(CorollaryArgs),
    /// Blow-up criterion for F(t).
    #[command(allow_negative_numbers = true)]
    Singularity(SingularityArgs),
}

pub fn run(cmd: VerifyCmd) -> Result<(), CliError> {
    match cmd {
        VerifyCmd::Functionals(a) => run_functionals(a),
        VerifyCmd::Identities(a) => run_identities(a),
        VerifyCmd::Lemma51(a) => run_lemma51(a),
        VerifyCmd::Corollary(a) => run_corollary(a),
        VerifyCmd::Singularity(a) => run_singularity(a),
    }
}

fn check_quad(q: &QuadSpec) -> Result<(), CliError> {
    positive("quad.tol", q.tol)?;
    positive("quad.tail", q.tail)?;
    if let Some(r) = q.radius {
        positive("quad.radius", r)?;
    }
    Ok(())
}

// ------------------------------------------------------------- functionals

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionalsCfg {
    pub solution: SolutionCfg,
    pub times: Vec<f64>,
    pub quad: QuadSpec,
    /// Treat an unforced isotropic solution as V = α(t)r.
    pub separated_radial: bool,
}

impl Default for FunctionalsCfg {
    fn default() -> Self {
        Self {
            solution: SolutionCfg::default(),
            times: vec![0.0, 1.0, 2.0],
            quad: QuadSpec::default(),
            separated_radial: false,
        }
    }
}

#[derive(Args, Debug)]
pub struct FunctionalsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solution: SolutionFlags,
    #[arg(long)]
    times: Option<List>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    quad_tol: Option<f64>,
}

fn quad_flags(q: &mut QuadSpec, radius: Option<f64>, tol: Option<f64>) {
    if radius.is_some() {
        q.radius = radius;
    }
    set(&mut q.tol, tol);
}

fn run_functionals(a: FunctionalsArgs) -> Result<(), CliError> {
    let mut cfg: FunctionalsCfg = load(a.common.config.as_deref())?;
    a.solution.apply(&mut cfg.solution)?;
    set(&mut cfg.times, a.times.map(|l| l.0));
    quad_flags(&mut cfg.quad, a.radius, a.quad_tol);
    check_quad(&cfg.quad)?;
    if cfg.times.is_empty() {
        return Err(CliError::Config("`times` is empty".into()));
    }
    let plan = plan(&cfg.solution)?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let problem = plan.build()?;
    let parts = separated_parts(&problem, cfg.solution.system, cfg.separated_radial)?;
    let extras = parts.as_ref().map(|p| p.extras()).unwrap_or_default();
    let snaps = cfg
        .times
        .par_iter()
        .map(|&t| functionals(problem.state(), problem.gamma, t, &cfg.quad, &extras))
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = snaps[0].values.keys().cloned().collect();
    let mut header = vec!["t".to_string(), "radius".into()];
    header.extend(names.iter().cloned());
    let mut csv = Csv::new(&header);
    for s in &snaps {
        let mut row = vec![Cell::N(s.t), Cell::N(s.radius)];
        row.extend(names.iter().map(|n| Cell::N(s.get(n))));
        csv.row(&row);
    }
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("functionals.csv", &csv.render())?;
    out.json("functionals.json", &snaps)?;
    println!("{}", json(&snaps));
    Ok(())
}

// -------------------------------------------------------------- identities

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesCfg {
    pub solution: SolutionCfg,
    pub times: Vec<f64>,
    /// Step of the central differences.
    pub h: f64,
    pub quad: QuadSpec,
    pub separated_radial: bool,
}

impl Default for IdentitiesCfg {
    fn default() -> Self {
        Self {
            solution: SolutionCfg::default(),
            times: (0..=5).map(f64::from).collect(),
            h: 0.02,
            quad: QuadSpec::default(),
            separated_radial: false,
        }
    }
}

#[derive(Args, Debug)]
pub struct IdentitiesArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solution: SolutionFlags,
    #[arg(long)]
    times: Option<List>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    quad_tol: Option<f64>,
}

/// Builds the solution and runs the identity checks; shared with the
/// acceptance suite.
pub fn identities(cfg: &IdentitiesCfg) -> Result<gasflow::verify::IdentityTable, CliError> {
    let problem: Problem = plan(&cfg.solution)?.build()?;
    let parts = separated_parts(&problem, cfg.solution.system, cfg.separated_radial)?;
    let extras: Extras<'_> = parts.as_ref().map(|p| p.extras()).unwrap_or_default();
    let (lo, hi) = match problem.linear() {
        Some(s) => s.time_range(),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let reach = 2.0 * cfg.h;
    if let Some(t) = cfg.times.iter().find(|t| **t - reach < lo || **t + reach > hi) {
        return Err(CliError::Config(format!("time {t} with stencil ±{reach} leaves the solution range [{lo}, {hi}]")));
    }
    Ok(functional_identities(problem.state(), problem.gamma, &problem.forcing, &cfg.times, cfg.h, &cfg.quad, &extras)?)
}

fn run_identities(a: IdentitiesArgs) -> Result<(), CliError> {
    let mut cfg: IdentitiesCfg = load(a.common.config.as_deref())?;
    a.solution.apply(&mut cfg.solution)?;
    set(&mut cfg.times, a.times.map(|l| l.0));
    set(&mut cfg.h, a.h);
    quad_flags(&mut cfg.quad, a.radius, a.quad_tol);
    check_quad(&cfg.quad)?;
    positive("h", cfg.h)?;
    if cfg.times.is_empty() {
        return Err(CliError::Config("`times` is empty".into()));
    }
    plan(&cfg.solution)?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let table = identities(&cfg)?;
    let mut csv = Csv::new(&["t", "name", "lhs", "rhs", "residual", "literal"]);
    for r in &table.rows {
        csv.row(&[
            Cell::N(r.t),
            Cell::T(r.name.clone()),
            Cell::N(r.lhs),
            Cell::N(r.rhs),
            Cell::N(r.residual),
            Cell::I(r.literal as i64),
        ]);
    }
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("identities.csv", &csv.render())?;
    out.json("identities.json", &table)?;
    println!(
        "{}",
        json(&serde_json::json!({
            "max_residual": table.max_residual,
            "energy_monotone": table.energy_monotone,
            "rows": table.rows.len(),
        }))
    );
    Ok(())
}

// ------------------------------------------------------------------ lemma51

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lemma51Cfg {
    pub n: usize,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    /// Half-width of the quadrature box; 8 in 2D, 7 in 3D when absent.
    pub radius: Option<f64>,
    /// Quadrature tolerance; 1e-9 in 2D, 1e-5 in 3D when absent.
    pub tol: Option<f64>,
    pub max_components: usize,
    /// Lower bound of |g| on the chart.
    pub g_star: f64,
}

impl Default for Lemma51Cfg {
    fn default() -> Self {
        Self { n: 2, gamma: 1.4, trials: 100, seed: 0, radius: None, tol: None, max_components: 3, g_star: 1.0 }
    }
}

impl Lemma51Cfg {
    fn validate(&self) -> Result<(), CliError> {
        if !(2..=3).contains(&self.n) {
            return Err(CliError::Config("`n` must be 2 or 3".into()));
        }
        if !(self.gamma > 1.0) {
            return Err(CliError::Config("`gamma` must exceed 1".into()));
        }
        positive_count("trials", self.trials)?;
        positive_count("max_components", self.max_components)?;
        positive("radius", self.radius())?;
        positive("tol", self.tol())?;
        positive("g_star", self.g_star)
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(if self.n == 2 { 8.0 } else { 7.0 })
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(if self.n == 2 { 1e-9 } else { 1e-5 })
    }
}

/// Weighted sum of isotropic Gaussians c·exp(−|x − m|²/w²).
#[derive(Debug, Clone, Serialize)]
pub struct Mixture {
    pub components: Vec<(f64, f64, Vec<f64>)>,
}

impl Mixture {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, max_components: usize) -> Self {
        let k = rng.gen_range(1..=max_components);
        let components = (0..k)
            .map(|_| {
                let c = rng.gen_range(0.01..5.0);
                let w = rng.gen_range(0.4..1.2);
                let m = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (c, w, m)
            })
            .collect();
        Self { components }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|(c, w, m)| {
                let d2: f64 = x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
                c * (-d2 / (w * w)).exp()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma51Summary {
    pub n: usize,
    pub gamma: f64,
    pub trials: usize,
    pub min_margin: f64,
    /// Smallest rhs/lhs over the trials.
    pub min_ratio: f64,
    pub min_margin_literal: f64,
    pub violations: usize,
    pub reports: Vec<Lemma51Report>,
}

/// Runs the randomized trials; trial draws are sequential so the result
/// does not depend on the thread count.
pub fn lemma51_trials(cfg: &Lemma51Cfg) -> Result<Lemma51Summary, CliError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mixtures: Vec<Mixture> =
        (0..cfg.trials).map(|_| Mixture::random(&mut rng, cfg.n, cfg.max_components)).collect();
    let reports = mixtures
        .par_iter()
        .map(|m| lemma51_check(&|x: &[f64]| m.eval(x), cfg.gamma, cfg.n, cfg.radius(), cfg.tol(), cfg.g_star))
        .collect::<Result<Vec<_>, _>>()?;
    let min_margin = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let min_ratio = reports.iter().map(|r| r.rhs / r.lhs).fold(f64::INFINITY, f64::min);
    let min_margin_literal = reports.iter().map(|r| r.margin_literal).fold(f64::INFINITY, f64::min);
    let violations = reports.iter().filter(|r| r.margin < -1e-10).count();
    Ok(Lemma51Summary {
        n: cfg.n,
        gamma: cfg.gamma,
        trials: cfg.trials,
        min_margin,
        min_ratio,
        min_margin_literal,
        violations,
        reports,
    })
}

#[derive(Args, Debug)]
pub struct Lemma51Args {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

fn run_lemma51(a: Lemma51Args) -> Result<(), CliError> {
    let mut cfg: Lemma51Cfg = load(a.common.config.as_deref())?;
    set(&mut cfg.n, a.n);
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.trials, a.trials);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.radius, a.radius.map(Some));
    set(&mut cfg.tol, a.tol.map(Some));
    cfg.validate()?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let s = lemma51_trials(&cfg)?;
    let mut csv = Csv::new(&["trial", "integral", "integral_pow", "second_moment", "rhs", "margin", "margin_literal"]);
    for (i, r) in s.reports.iter().enumerate() {
        csv.row(&[
            Cell::I(i as i64),
            Cell::N(r.integral),
            Cell::N(r.integral_pow),
            Cell::N(r.second_moment),
            Cell::N(r.rhs),
            Cell::N(r.margin),
            Cell::N(r.margin_literal),
        ]);
    }
    let brief = serde_json::json!({
        "n": s.n,
        "gamma": s.gamma,
        "trials": s.trials,
        "seed": cfg.seed,
        "constant": s.reports[0].constant,
        "min_margin": s.min_margin,
        "min_ratio": s.min_ratio,
        "min_margin_literal": s.min_margin_literal,
        "violations": s.violations,
    });
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("trials.csv", &csv.render())?;
    out.json("lemma51.json", &brief)?;
    println!("{}", json(&brief));
    Ok(())
}

// ---------------------------------------------------------------- corollary

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorollaryCfg {
    pub mu: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n: usize,
}

impl Default for CorollaryCfg {
    fn default() -> Self {
        Self { mu: 0.0, delta: 1.0, gamma: 1.4, n: 2 }
    }
}

#[derive(Args, Debug)]
pub struct CorollaryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Serialize)]
struct CorollaryOut<'a> {
    config: &'a CorollaryCfg,
    feasible: bool,
    report: CorollaryReport,
}

fn run_corollary(a: CorollaryArgs) -> Result<(), CliError> {
    let mut cfg: CorollaryCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.mu, a.mu);
    set(&mut cfg.delta, a.delta);
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.n, a.n);
    if !(cfg.mu >= 0.0) {
        return Err(CliError::Config("`mu` must be nonnegative".into()));
    }
    positive("delta", cfg.delta)?;
    if !(cfg.gamma > 1.0) || !(2..=3).contains(&cfg.n) {
        return Err(CliError::Config("need gamma > 1 and n in {2, 3}".into()));
    }
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let report = corollary_feasible_params(cfg.mu, cfg.delta, cfg.gamma, cfg.n)?;
    let res = CorollaryOut { config: &cfg, feasible: report.witness.is_some(), report };
    let out = OutDir::new(a.common.out.as_deref())?;
    out.json("corollary.json", &res)?;
    println!("{}", json(&res));
    Ok(())
}

// -------------------------------------------------------------- singularity

/// Either the criterion inputs directly, or a kinematic solution from which
/// they are computed at t = 0.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingularityCfg {
    pub input: Option<SingularityInput>,
    pub solution: Option<SolutionCfg>,
    /// Box on which sup|Λ| and inf D are sampled.
    pub bounds_lo: Option<Vec<f64>>,
    pub bounds_hi: Option<Vec<f64>>,
    pub bounds_nodes: Option<usize>,
    pub quad: QuadSpec,
}

#[derive(Args, Debug)]
pub struct SingularityArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    f0: Option<f64>,
    #[arg(long)]
    lambda_plus: Option<f64>,
    #[arg(long)]
    d_minus: Option<f64>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    energy: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Serialize)]
struct SingularityOut {
    input: SingularityInput,
    report: SingularityReport,
}

fn run_singularity(a: SingularityArgs) -> Result<(), CliError> {
    let mut cfg: SingularityCfg = load(a.common.config.as_deref())?;
    let flags = [a.f0, a.lambda_plus, a.d_minus, a.mass, a.energy, a.gamma];
    if flags.iter().any(Option::is_some) {
        let mut inp = cfg.input.unwrap_or(SingularityInput {
            f0: f64::NAN,
            lambda_plus: f64::NAN,
            d_minus: 0.0,
            mass: f64::NAN,
            energy: f64::NAN,
            gamma: 1.4,
        });
        set(&mut inp.f0, a.f0);
        set(&mut inp.lambda_plus, a.lambda_plus);
        set(&mut inp.d_minus, a.d_minus);
        set(&mut inp.mass, a.mass);
        set(&mut inp.energy, a.energy);
        set(&mut inp.gamma, a.gamma);
        cfg.input = Some(inp);
    }
    check_quad(&cfg.quad)?;
    let (input, report) = match (&cfg.input, &cfg.solution) {
        (Some(inp), None) => {
            let report = singularity_criterion(inp)?;
            if a.common.dry_run {
                return dry_run(&cfg);
            }
            (*inp, report)
        }
        (None, Some(sol)) => {
            if sol.kinematic.is_none() {
                return Err(CliError::Config("`solution` needs a `kinematic` field".into()));
            }
            let plan = plan(sol)?;
            if a.common.dry_run {
                return dry_run(&cfg);
            }
            let problem = plan.build()?;
            let parts = separated_parts(&problem, sol.system, false)?.expect("kinematic");
            let n = parts.field.dim();
            let radius = problem.state().tail_radius(cfg.quad.tail).unwrap_or(2.0);
            let lo = cfg.bounds_lo.clone().unwrap_or_else(|| vec![-radius; n]);
            let hi = cfg.bounds_hi.clone().unwrap_or_else(|| vec![radius; n]);
            let domain = DomainBox::new(lo, hi)?;
            let (lambda_plus, d_minus) = field_bounds(&parts.field, &domain, cfg.bounds_nodes.unwrap_or(41))?;
            let snap = functionals(problem.state(), problem.gamma, 0.0, &cfg.quad, &parts.extras())?;
            let report = singularity_from_snapshot(&snap, lambda_plus, d_minus, problem.gamma)?;
            let input = SingularityInput {
                f0: snap.get("FL"),
                lambda_plus,
                d_minus,
                mass: snap.get("M"),
                energy: snap.get("E"),
                gamma: problem.gamma,
            };
            (input, report)
        }
        _ => return Err(CliError::Config("give exactly one of `input` (or the flags) and `solution`".into())),
    };
    let res = SingularityOut { input, report };
    let out = OutDir::new(a.common.out.as_deref())?;
    out.json("singularity.json", &res)?;
    println!("{}", json(&res));
    Ok(())
}
