use std::f64::consts::PI;

use clap::{Args, Subcommand};
use gasflow::fields::{
    a2_residual, characteristic_field, characteristics_solve, divergence_roots, jm, sphere_field,
    sphere_physical_components, Branch, FieldDescriptor, FieldFamily, FieldSpec, Profile,
};
use gasflow::geometry::{divergence, ChartMetric, DomainBox};
use gasflow::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{load, positive, positive_count, set, Common};
use crate::emit::{json, nums, Cell, Csv, OutDir};
use crate::{dry_run, CliError};

#[derive(Subcommand, Debug)]
pub enum FieldCmd {
    /// Sample a field family and check the admissibility condition and
    /// the J_m identities.
    #[command(allow_negative_numbers = true)]
    Check(CheckArgs),
    /// The sphere-strip family in physical components.
    #[command(allow_negative_numbers = true)]
    Sphere(SphereArgs),
    /// Solve the characteristic relations on a grid.
    #[command(allow_negative_numbers = true)]
    Characteristics(CharArgs),
    /// Admissible constant divergences in dimension n.
    Roots(RootsArgs),
}

pub fn run(cmd: FieldCmd) -> Result<(), CliError> {
    match cmd {
        FieldCmd::Check(a) => field_check(a),
        FieldCmd::Sphere(a) => field_sphere(a),
        FieldCmd::Characteristics(a) => field_characteristics(a),
        FieldCmd::Roots(a) => field_roots(a),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(flag: &str, s: &str) -> Result<T, CliError> {
    serde_json::from_str(s).map_err(|e| CliError::Config(format!("--{flag}: {e}")))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckSummary {
    pub family: String,
    pub points: usize,
    pub used: usize,
    /// Points where the field is undefined (outside the strip, shocks).
    pub skipped: usize,
    pub a2_max: f64,
    pub identity_max: f64,
    pub divergence_min: f64,
    pub divergence_max: f64,
}

pub type Sampler<'a> = dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + 'a;
pub type ExtraColumns<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// Checks `field` at `points` random points drawn by `draw`.
pub fn check_field(
    field: &FieldSpec,
    points: usize,
    seed: u64,
    draw: &Sampler<'_>,
    extra: Option<&ExtraColumns<'_>>,
    extra_names: &[&str],
) -> Result<(CheckSummary, Csv), CliError> {
    let n = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = &field.chart;
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(["divergence", "a2_max", "identity_max"].map(String::from));
    header.extend((0..=n).map(|k| format!("J{k}")));
    header.extend(extra_names.iter().map(|s| s.to_string()));
    let mut csv = Csv::new(&header);
    let mut s = CheckSummary {
        family: family_name(&field.family).into(),
        points,
        divergence_min: f64::INFINITY,
        divergence_max: f64::NEG_INFINITY,
        ..Default::default()
    };
    for _ in 0..points {
        let x = draw(&mut rng);
        let eval = (|| -> gasflow::Result<_> {
            let r = a2_residual(chart, field, &x)?;
            let d = divergence(chart, field, &x)?;
            let j = jm(chart, field, &x, n)?;
            Ok((r, d, j))
        })();
        let (r, d, j) = match eval {
            Ok(v) => v,
            Err(e) if e.is_validation() || matches!(e, Error::ShockRegion { .. }) => {
                s.skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let a2 = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let id = j.identity_residuals.values().fold(0.0f64, |m, v| m.max(v.abs()));
        s.used += 1;
        s.a2_max = s.a2_max.max(a2);
        s.identity_max = s.identity_max.max(id);
        s.divergence_min = s.divergence_min.min(d);
        s.divergence_max = s.divergence_max.max(d);
        let mut row = nums(&x);
        row.extend([Cell::N(d), Cell::N(a2), Cell::N(id)]);
        row.extend(nums(&j.all));
        if let Some(f) = extra {
            row.extend(nums(&f(&x)));
        }
        csv.row(&row);
    }
    if s.used == 0 {
        s.divergence_min = f64::NAN;
        s.divergence_max = f64::NAN;
    }
    Ok((s, csv))
}

fn family_name(f: &FieldFamily) -> &'static str {
    match f {
        FieldFamily::IdentityR => "identity-r",
        FieldFamily::PlaneShear { .. } => "plane-shear",
        FieldFamily::SphereStrip { .. } => "sphere-strip",
        FieldFamily::ImplicitCharacteristic { .. } => "implicit-characteristic",
        FieldFamily::Custom => "custom",
    }
}

/// θ-range of the strip C sin²θ > 1, kept a little away from its edges.
fn strip_sampler(c: f64) -> impl Fn(&mut ChaCha8Rng) -> Vec<f64> {
    let lo = (1.0 / c.sqrt() + 0.02).min(0.999).asin();
    move |rng: &mut ChaCha8Rng| vec![rng.gen_range(0.0..2.0 * PI), rng.gen_range(lo..PI - lo)]
}

fn box_sampler(b: DomainBox) -> impl Fn(&mut ChaCha8Rng) -> Vec<f64> {
    move |rng: &mut ChaCha8Rng| b.lo.iter().zip(&b.hi).map(|(l, h)| rng.gen_range(*l..*h)).collect()
}

// ---------------------------------------------------------------- check

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckCfg {
    pub field: Option<FieldDescriptor>,
    pub points: usize,
    pub seed: u64,
    /// Sampling box for planar families; the field's own domain or
    /// [−2, 2]^n when absent.
    pub sample_box: Option<DomainBox>,
}

impl Default for CheckCfg {
    fn default() -> Self {
        Self { field: None, points: 200, seed: 0, sample_box: None }
    }
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Field descriptor as JSON: {"family": ..., "parameters": ..., "domain": ...}.
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn field_check(a: CheckArgs) -> Result<(), CliError> {
    let mut cfg: CheckCfg = load(a.common.config.as_deref())?;
    if let Some(f) = a.field {
        cfg.field = Some(parse_json("field", &f)?);
    }
    set(&mut cfg.points, a.points);
    set(&mut cfg.seed, a.seed);
    positive_count("points", cfg.points)?;
    let desc = cfg.field.clone().ok_or_else(|| CliError::Config("`field` is required".into()))?;
    let field = desc.build()?;
    let n = field.dim();
    let sample_box = match (&cfg.sample_box, &desc.domain) {
        (Some(b), _) => b.clone(),
        (None, Some(d)) if d.lo.iter().chain(&d.hi).all(|v| v.is_finite()) => d.clone(),
        _ => DomainBox::new(vec![-2.0; n], vec![2.0; n])?,
    };
    if sample_box.dim() != n {
        return Err(CliError::Config("`sample_box` must match the field dimension".into()));
    }
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let draw: Box<Sampler<'_>> = match &field.family {
        FieldFamily::SphereStrip { c, .. } => Box::new(strip_sampler(*c)),
        _ => Box::new(box_sampler(sample_box)),
    };
    let (summary, csv) = check_field(&field, cfg.points, cfg.seed, &draw, None, &[])?;
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("check.csv", &csv.render())?;
    out.json("summary.json", &summary)?;
    println!("{}", json(&summary));
    Ok(())
}

// ---------------------------------------------------------------- sphere

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereCfg {
    pub c: f64,
    pub psi1: Profile,
    pub branch: Branch,
    pub radius: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for SphereCfg {
    fn default() -> Self {
        Self { c: 2.0, psi1: Profile::zero(), branch: Branch::Plus, radius: 1.0, points: 200, seed: 0 }
    }
}

#[derive(Args, Debug)]
pub struct SphereArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    c: Option<f64>,
    /// Profile Ψ₁ as JSON, e.g. {"kind":"sin","amplitude":0.4,"frequency":1,"phase":0}.
    #[arg(long)]
    psi1: Option<String>,
    /// plus or minus
    #[arg(long)]
    branch: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn field_sphere(a: SphereArgs) -> Result<(), CliError> {
    let mut cfg: SphereCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.c, a.c);
    if let Some(p) = a.psi1 {
        cfg.psi1 = parse_json("psi1", &p)?;
    }
    if let Some(b) = a.branch {
        cfg.branch = parse_json("branch", &format!("\"{b}\""))?;
    }
    set(&mut cfg.radius, a.radius);
    set(&mut cfg.points, a.points);
    set(&mut cfg.seed, a.seed);
    positive("radius", cfg.radius)?;
    positive_count("points", cfg.points)?;
    let field = sphere_field(cfg.c, cfg.psi1.clone(), cfg.branch, cfg.radius)?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let phys = |x: &[f64]| match sphere_physical_components(cfg.c, &cfg.psi1, cfg.branch, cfg.radius, x[0], x[1]) {
        Ok(sp) => vec![sp.u, sp.v],
        Err(_) => vec![f64::NAN, f64::NAN],
    };
    let (summary, csv) = check_field(&field, cfg.points, cfg.seed, &strip_sampler(cfg.c), Some(&phys), &["u", "v"])?;
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("sphere.csv", &csv.render())?;
    out.json("summary.json", &summary)?;
    println!("{}", json(&summary));
    Ok(())
}

// ---------------------------------------------------------------- characteristics

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharCfg {
    pub f: Option<Profile>,
    pub datum: Profile,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nodes: usize,
}

impl Default for CharCfg {
    fn default() -> Self {
        Self { f: None, datum: Profile::zero(), lo: [-1.0, -1.0], hi: [1.0, 1.0], nodes: 21 }
    }
}

#[derive(Args, Debug)]
pub struct CharArgs {
    #[command(flatten)]
    common: Common,
    /// Cauchy profile F as JSON.
    #[arg(long)]
    f: Option<String>,
    /// Datum Λ₁(0, s) as JSON.
    #[arg(long)]
    datum: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Serialize)]
struct CharSummary {
    nodes: usize,
    solved: usize,
    shocks: usize,
    /// Largest admissibility residual over the solved nodes.
    a2_max: f64,
    /// Smallest critical abscissa reported by a shock.
    x1_critical_min: Option<f64>,
}

fn field_characteristics(a: CharArgs) -> Result<(), CliError> {
    let mut cfg: CharCfg = load(a.common.config.as_deref())?;
    if let Some(f) = a.f {
        cfg.f = Some(parse_json("f", &f)?);
    }
    if let Some(d) = a.datum {
        cfg.datum = parse_json("datum", &d)?;
    }
    set(&mut cfg.nodes, a.nodes);
    if cfg.nodes < 2 {
        return Err(CliError::Config("`nodes` must be at least 2".into()));
    }
    if !(cfg.lo[0] < cfg.hi[0] && cfg.lo[1] < cfg.hi[1]) {
        return Err(CliError::Config("`lo` must lie below `hi`".into()));
    }
    let f = cfg.f.clone().ok_or_else(|| CliError::Config("`f` is required".into()))?;
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let chart = ChartMetric::euclidean(2);
    let field = characteristic_field(chart.clone(), f.clone(), cfg.datum.clone(), None)?;
    let mut csv = Csv::new(&["x1", "x2", "status", "z", "xi", "lambda1", "lambda2", "a2_max", "x1_critical"]);
    let mut s = CharSummary { nodes: cfg.nodes * cfg.nodes, solved: 0, shocks: 0, a2_max: 0.0, x1_critical_min: None };
    let m = (cfg.nodes - 1) as f64;
    for i in 0..cfg.nodes {
        for j in 0..cfg.nodes {
            let x = [
                cfg.lo[0] + (cfg.hi[0] - cfg.lo[0]) * i as f64 / m,
                cfg.lo[1] + (cfg.hi[1] - cfg.lo[1]) * j as f64 / m,
            ];
            match characteristics_solve(&f, &cfg.datum, &x, None) {
                Ok(cp) => {
                    let r = a2_residual(&chart, &field, &x)?;
                    let a2 = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    s.solved += 1;
                    s.a2_max = s.a2_max.max(a2);
                    let mut row = nums(&x);
                    row.push(Cell::T("ok".into()));
                    row.extend(nums(&[cp.z, cp.xi, cp.lambda1, cp.lambda2, a2]));
                    row.push(Cell::Empty);
                    csv.row(&row);
                }
                Err(Error::ShockRegion { x1_critical }) => {
                    s.shocks += 1;
                    s.x1_critical_min = Some(s.x1_critical_min.map_or(x1_critical, |v: f64| v.min(x1_critical)));
                    let mut row = nums(&x);
                    row.push(Cell::T("shock".into()));
                    row.extend((0..5).map(|_| Cell::Empty));
                    row.push(Cell::N(x1_critical));
                    csv.row(&row);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let out = OutDir::new(a.common.out.as_deref())?;
    out.write("characteristics.csv", &csv.render())?;
    out.json("summary.json", &s)?;
    println!("{}", json(&s));
    Ok(())
}

// ---------------------------------------------------------------- roots

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RootsCfg {
    pub n: usize,
}

impl Default for RootsCfg {
    fn default() -> Self {
        Self { n: 2 }
    }
}

#[derive(Args, Debug)]
pub struct RootsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
}

fn field_roots(a: RootsArgs) -> Result<(), CliError> {
    let mut cfg: RootsCfg = load(a.common.config.as_deref())?;
    set(&mut cfg.n, a.n);
    if !(2..=4).contains(&cfg.n) {
        return Err(CliError::Config("`n` must be 2, 3 or 4".into()));
    }
    if a.common.dry_run {
        return dry_run(&cfg);
    }
    let roots = divergence_roots(cfg.n)?;
    let report = serde_json::json!({ "roots": roots });
    OutDir::new(a.common.out.as_deref())?.json("roots.json", &report)?;
    println!("{}", json(&report));
    Ok(())
}
