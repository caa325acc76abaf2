//! Command-line surface: configuration, record persistence, scaling fits
//! and plot scripts.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::{identity_suite, Check};
use crate::lattice::SiteTag;
use crate::scenarios::{compute_gap, least_squares, random_spec, run_sweep, DisorderTarget, Scenario, ScenarioError};
use crate::spectra::GapMethod;
use crate::wigner::{argument_principle_count, ball_count, ball_radius, Radius, Reference, RoucheBall, ScalarFg, WignerContext, ALPHA};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0} verification checks failed")]
    Verify(usize),
    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verify(_) => 3,
        }
    }

    fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e.to_string())
    }
}

/// One `(scenario, N, seed)` result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scenario: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub method: GapMethod,
    /// `NaN` when the row failed; the reason is in `flags`.
    pub gap: f64,
    pub re: f64,
    pub im: f64,
    pub wall_ms: f64,
    pub flags: String,
}

impl SweepRecord {
    pub fn ok(&self) -> bool {
        self.gap.is_finite()
    }
}

pub const CSV_HEADER: [&str; 10] = ["scenario", "d", "n", "seed", "method", "gap", "re", "im", "wall_ms", "flags"];

/// Fifteen significant digits; empty for `NaN`.
pub fn format_sig15(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.14e}")
    }
}

fn parse_float(s: &str) -> Result<f64, CliError> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| CliError::Csv(format!("bad number `{s}`")))
}

pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.d.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            format_sig15(r.gap),
            format_sig15(r.re),
            format_sig15(r.im),
            format!("{:.3}", r.wall_ms),
            r.flags.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[SweepRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CliError::Csv(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let int = |k: usize| -> Result<u64, CliError> {
            row[k].parse().map_err(|_| CliError::Csv(format!("bad integer `{}`", &row[k])))
        };
        out.push(SweepRecord {
            scenario: row[0].to_string(),
            d: int(1)? as usize,
            n: int(2)? as usize,
            seed: int(3)?,
            method: row[4].parse().map_err(CliError::Csv)?,
            gap: parse_float(&row[5])?,
            re: parse_float(&row[6])?,
            im: parse_float(&row[7])?,
            wall_ms: parse_float(&row[8])?,
            flags: row[9].to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `log gap` against `log N`.
    PowerLaw,
    /// `log gap` against `N`.
    Exponential,
}

impl std::fmt::Display for FitModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitModel::PowerLaw => "power_law",
            FitModel::Exponential => "exponential",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub points: usize,
}

/// Exponential fits skip rows below this size unless told otherwise.
pub const EXP_FIT_MIN_N: usize = 16;

/// Least-squares scaling fit. Rows with nonpositive or missing gaps are
/// dropped with a warning; `min_n` defaults to 16 for exponential fits.
pub fn fit_scaling(records: &[SweepRecord], model: FitModel, min_n: Option<usize>) -> Result<ScalingFit, CliError> {
    let min_n = min_n.unwrap_or(match model {
        FitModel::PowerLaw => 0,
        FitModel::Exponential => EXP_FIT_MIN_N,
    });
    let mut points = Vec::new();
    for r in records.iter().filter(|r| r.n >= min_n) {
        if r.gap > 0.0 && r.gap.is_finite() {
            points.push((r.n, r.gap));
        } else {
            warn!("dropping row N = {}, seed = {} with gap {}", r.n, r.seed, r.gap);
        }
    }
    fit_points(&points, model)
}

pub fn fit_points(points: &[(usize, f64)], model: FitModel) -> Result<ScalingFit, CliError> {
    if points.len() < 4 {
        return Err(CliError::Numerical(format!("a fit needs at least 4 rows, got {}", points.len())));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|&(n, _)| match model {
            FitModel::PowerLaw => (n as f64).ln(),
            FitModel::Exponential => n as f64,
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|&(_, g)| g.ln()).collect();
    let line = least_squares(&xs, &ys);
    Ok(ScalingFit {
        model,
        slope: line.slope,
        intercept: line.intercept,
        r2: line.r2,
        n_min: points.iter().map(|p| p.0).min().unwrap_or(0),
        n_max: points.iter().map(|p| p.0).max().unwrap_or(0),
        points: points.len(),
    })
}

/// Plot script for an external plotter. Paths are relative to the
/// directory holding the CSV.
pub fn gnuplot_script(csv_name: &str, model: FitModel, title: &str) -> String {
    let png = Path::new(csv_name).with_extension("png");
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 800,600\n");
    s.push_str(&format!("set output '{}'\n", png.display()));
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str("set xlabel 'N'\nset ylabel 'spectral gap'\n");
    s.push_str("set logscale y\n");
    if model == FitModel::PowerLaw {
        s.push_str("set logscale x\n");
    }
    s.push_str(&format!("plot '{csv_name}' using 3:6 skip 1 with linespoints pointtype 7 title 'gap'\n"));
    s
}

/// Resolved run configuration. The file form is TOML with the same keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_method")]
    pub method: GapMethod,
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub model: Option<FitModel>,
    pub min_n: Option<usize>,
}

fn default_dim() -> usize {
    1
}

fn default_method() -> GapMethod {
    GapMethod::Direct
}

impl Default for Config {
    fn default() -> Self {
        Self {
            dim: 1,
            n: None,
            sizes: Vec::new(),
            seeds: Vec::new(),
            method: GapMethod::Direct,
            scenario: None,
            fit: FitConfig::default(),
            output: None,
        }
    }
}

pub fn parse_config(text: &str) -> Result<Config, CliError> {
    toml::from_str(text).map_err(|e| {
        let field = e
            .message()
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<file>".to_string());
        CliError::config(&field, e.to_string().trim())
    })
}

#[derive(Debug, Parser)]
#[command(name = "chaingap", version, about = "Spectral gaps of damped oscillator networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral gap of a single network.
    Gap(RunArgs),
    /// Gaps over a list of sizes (and seeds), with a scaling fit.
    Sweep(RunArgs),
    /// Identity and cross-method checks on fixed fixtures.
    Verify,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub method: Option<GapMethod>,
    /// homogeneous, impurity or disorder.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub friction: Option<SiteTag>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta_bulk: Option<f64>,
    #[arg(long)]
    pub eta_center: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub strength: Option<f64>,
    #[arg(long, value_enum)]
    pub fit: Option<FitModel>,
    #[arg(long)]
    pub fit_min_n: Option<usize>,
    /// Directory for CSV, plot script and JSON records.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Pinning,
    Mass,
    Interaction,
}

impl From<TargetArg> for DisorderTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Pinning => DisorderTarget::Pinning,
            TargetArg::Mass => DisorderTarget::Mass,
            TargetArg::Interaction => DisorderTarget::Interaction,
        }
    }
}

fn set(slot: &mut f64, value: Option<f64>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => Config::default(),
        };
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        if self.n.is_some() {
            cfg.n = self.n;
        }
        if let Some(s) = &self.sizes {
            cfg.sizes = s.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(m) = self.fit {
            cfg.fit.model = Some(m);
        }
        if self.fit_min_n.is_some() {
            cfg.fit.min_n = self.fit_min_n;
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if let Some(kind) = &self.scenario {
            let same = cfg.scenario.as_ref().map(|s| s.kind()) == Some(kind.as_str());
            if !same {
                cfg.scenario = Some(match kind.as_str() {
                    "homogeneous" => Scenario::homogeneous(None),
                    "impurity" => Scenario::impurity(),
                    "disorder" => Scenario::disorder(
                        self.target
                            .map(Into::into)
                            .ok_or_else(|| CliError::config("scenario.target", "disorder needs --target"))?,
                    ),
                    other => return Err(CliError::config("scenario.kind", format!("unknown scenario `{other}`"))),
                });
            }
        }
        let scenario = cfg
            .scenario
            .as_mut()
            .ok_or_else(|| CliError::config("scenario", "missing scenario (use --scenario or a [scenario] table)"))?;
        self.apply_params(scenario)?;
        if cfg.dim == 0 {
            return Err(CliError::config("dim", "must be at least 1"));
        }
        if let Scenario::Homogeneous { friction: None, .. } = scenario {
            if cfg.dim >= 2 {
                return Err(CliError::config("scenario.friction", "required for dim >= 2"));
            }
        }
        Ok(cfg)
    }

    fn apply_params(&self, scenario: &mut Scenario) -> Result<(), CliError> {
        let reject = |flag: &str, kind: &str| CliError::config(flag, format!("does not apply to scenario `{kind}`"));
        let kind = scenario.kind();
        match scenario {
            Scenario::Homogeneous {
                eta,
                xi,
                mass,
                gamma,
                friction,
            } => {
                set(eta, self.eta);
                set(xi, self.xi);
                set(mass, self.mass);
                set(gamma, self.gamma);
                if self.friction.is_some() {
                    *friction = self.friction;
                }
                for (flag, given) in [
                    ("eta_bulk", self.eta_bulk.is_some()),
                    ("eta_center", self.eta_center.is_some()),
                    ("epsilon", self.epsilon.is_some()),
                    ("target", self.target.is_some()),
                    ("base", self.base.is_some()),
                    ("strength", self.strength.is_some()),
                ] {
                    if given {
                        return Err(reject(flag, kind));
                    }
                }
            }
            Scenario::Impurity {
                eta_bulk,
                eta_center,
                epsilon,
                xi,
                gamma,
            } => {
                set(eta_bulk, self.eta_bulk);
                set(eta_center, self.eta_center);
                set(epsilon, self.epsilon);
                set(xi, self.xi);
                set(gamma, self.gamma);
                for (flag, given) in [
                    ("eta", self.eta.is_some()),
                    ("mass", self.mass.is_some()),
                    ("friction", self.friction.is_some()),
                    ("target", self.target.is_some()),
                    ("base", self.base.is_some()),
                    ("strength", self.strength.is_some()),
                ] {
                    if given {
                        return Err(reject(flag, kind));
                    }
                }
            }
            Scenario::Disorder {
                target,
                base,
                strength,
                gamma,
            } => {
                if let Some(t) = self.target {
                    *target = t.into();
                }
                set(base, self.base);
                set(strength, self.strength);
                set(gamma, self.gamma);
                for (flag, given) in [
                    ("eta", self.eta.is_some()),
                    ("xi", self.xi.is_some()),
                    ("mass", self.mass.is_some()),
                    ("friction", self.friction.is_some()),
                    ("eta_bulk", self.eta_bulk.is_some()),
                    ("eta_center", self.eta_center.is_some()),
                    ("epsilon", self.epsilon.is_some()),
                ] {
                    if given {
                        return Err(reject(flag, kind));
                    }
                }
            }
        }
        Ok(())
    }
}

/// JSON-lines record written by `gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub v: u32,
    pub scenario: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub method: GapMethod,
    pub gap: f64,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    pub wall_ms: f64,
    pub flags: String,
}

pub const GAP_LOG: &str = "gaps.jsonl";

fn output_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn cmd_gap<W: Write>(cfg: &Config, out: &mut W) -> Result<GapRecord, CliError> {
    let n = cfg.n.ok_or_else(|| CliError::config("n", "missing lattice side (use --n)"))?;
    let scenario = cfg.scenario.as_ref().ok_or_else(|| CliError::config("scenario", "missing"))?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let start = Instant::now();
    let (spec, mut flags) = scenario.build(cfg.dim, n, seed).map_err(|e| match e {
        ScenarioError::MissingFriction => CliError::config("scenario.friction", e.to_string()),
        other => CliError::config("scenario", other.to_string()),
    })?;
    let (result, more) = compute_gap(&spec, cfg.method).map_err(|e| CliError::Numerical(e.to_string()))?;
    flags.extend(more);
    let record = GapRecord {
        v: 1,
        scenario: scenario.tag(),
        d: cfg.dim,
        n,
        seed,
        method: cfg.method,
        gap: result.gap,
        re: result.attaining.re,
        im: result.attaining.im,
        residual: result.residual,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        flags: flags.join(";"),
    };
    writeln!(
        out,
        "gap {} attaining {} {:+.6e}i method {}",
        format_sig15(record.gap),
        format_sig15(record.re),
        record.im,
        record.method
    )?;
    let path = output_dir(cfg)?.join(GAP_LOG);
    let mut log = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(log, "{}", serde_json::to_string(&record).expect("serialisable"))?;
    Ok(record)
}

/// Files written by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub csv: PathBuf,
    pub script: PathBuf,
    pub records: Vec<SweepRecord>,
    pub fits: Vec<(Option<u64>, ScalingFit)>,
}

pub fn cmd_sweep<W: Write>(cfg: &Config, out: &mut W) -> Result<SweepOutput, CliError> {
    let scenario = cfg.scenario.as_ref().ok_or_else(|| CliError::config("scenario", "missing"))?;
    if cfg.sizes.is_empty() {
        return Err(CliError::config("sizes", "missing list of sizes (use --sizes)"));
    }
    if cfg.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::config("sizes", "must be strictly increasing"));
    }
    let records = run_sweep(scenario, cfg.dim, &cfg.sizes, &cfg.seeds, cfg.method);
    let dir = output_dir(cfg)?;
    let stem = format!("{}_d{}_{}", scenario.tag(), cfg.dim, cfg.method);
    let csv_name = format!("{stem}.csv");
    let csv = dir.join(&csv_name);
    write_csv(fs::File::create(&csv)?, &records)?;
    let model = cfg.fit.model.unwrap_or(match scenario {
        Scenario::Homogeneous { .. } => FitModel::PowerLaw,
        _ => FitModel::Exponential,
    });
    let script = dir.join(format!("{stem}.gp"));
    fs::write(&script, gnuplot_script(&csv_name, model, &stem))?;

    for r in records.iter().filter(|r| !r.ok()) {
        writeln!(out, "row N={} seed={} failed: {}", r.n, r.seed, r.flags)?;
    }
    if records.iter().all(|r| !r.ok()) {
        return Err(CliError::Numerical("every row of the sweep failed".to_string()));
    }
    let mut groups: BTreeMap<Option<u64>, Vec<SweepRecord>> = BTreeMap::new();
    for r in &records {
        let key = scenario.is_random().then_some(r.seed);
        groups.entry(key).or_default().push(r.clone());
    }
    let mut fits = Vec::new();
    for (seed, rows) in groups {
        match fit_scaling(&rows, model, cfg.fit.min_n) {
            Ok(fit) => {
                let label = seed.map(|s| format!(" seed={s}")).unwrap_or_default();
                writeln!(
                    out,
                    "fit {}{} slope {:.6} intercept {:.6} r2 {:.6} N {}..{} ({} rows)",
                    fit.model, label, fit.slope, fit.intercept, fit.r2, fit.n_min, fit.n_max, fit.points
                )?;
                fits.push((seed, fit));
            }
            Err(e) => writeln!(out, "fit skipped: {e}")?,
        }
    }
    writeln!(out, "wrote {} and {}", csv.display(), script.display())?;
    Ok(SweepOutput {
        csv,
        script,
        records,
        fits,
    })
}

/// Outcome of one `verify` line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyLine {
    pub fixture: String,
    pub check: Check,
}

fn equivalence(spec: &crate::operators::NetworkSpec) -> Result<Check, ScenarioError> {
    let direct = compute_gap(spec, GapMethod::Direct)?.0.gap;
    let wigner = compute_gap(spec, GapMethod::Wigner)?.0.gap;
    let observed = if direct <= 1e-12 && wigner <= 1e-12 {
        0.0
    } else {
        (wigner - direct).abs() / direct.max(wigner)
    };
    Ok(Check {
        name: "wigner equivalence",
        observed,
        tolerance: 1e-7,
        passed: Some(observed <= 1e-7),
    })
}

fn homotopy(n: usize) -> Result<Check, CliError> {
    let spec = Scenario::homogeneous(None)
        .build(1, n, 0)
        .map_err(|e| CliError::Numerical(e.to_string()))?
        .0;
    let numerical = |e: crate::wigner::WignerError| CliError::Numerical(e.to_string());
    let ctx = WignerContext::from_spec(&spec, Reference::Top).map_err(numerical)?;
    let fg = ScalarFg::new(&ctx).map_err(numerical)?;
    let radius = ball_radius(&ctx, Radius::EdgeAmplitude, ALPHA).map_err(numerical)?;
    let ball = RoucheBall::new(radius);
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let c = argument_principle_count(|l| Ok(DMatrix::from_element(1, 1, fg.f(l) + fg.g(l)? * t)), &ball)
            .map_err(numerical)?;
        worst = worst.max((c - 1).abs() as f64);
    }
    let full = ball_count(&ctx, radius).map_err(numerical)?;
    worst = worst.max((full - 1).abs() as f64);
    Ok(Check {
        name: "rouche homotopy",
        observed: worst,
        tolerance: 0.0,
        passed: Some(worst == 0.0),
    })
}

/// Fixtures for `verify`: a damped chain, a disordered chain, a square
/// with opposite damped edges, and a handful of randomized networks.
pub fn verify_fixtures() -> Vec<(String, crate::operators::NetworkSpec)> {
    let mut out = Vec::new();
    let chain = Scenario::homogeneous(None).build(1, 8, 0).expect("fixture").0;
    out.push(("chain8".to_string(), chain));
    let dis = Scenario::disorder(DisorderTarget::Pinning).build(1, 6, 7).expect("fixture").0;
    out.push(("disorder6_seed7".to_string(), dis));
    let sq = Scenario::homogeneous(Some(SiteTag::OppositeEdges)).build(2, 4, 0).expect("fixture").0;
    out.push(("square4_edges".to_string(), sq));
    for seed in 1..=5 {
        out.push((format!("random{seed}"), random_spec(seed)));
    }
    out
}

pub fn cmd_verify<W: Write>(out: &mut W) -> Result<Vec<VerifyLine>, CliError> {
    let mut lines = Vec::new();
    for (name, spec) in verify_fixtures() {
        let mut checks = identity_suite(&spec).map_err(|e| CliError::Numerical(format!("{name}: {e}")))?;
        checks.push(equivalence(&spec).map_err(|e| CliError::Numerical(format!("{name}: {e}")))?);
        for check in checks {
            lines.push(VerifyLine {
                fixture: name.clone(),
                check,
            });
        }
    }
    for n in [9, 17] {
        lines.push(VerifyLine {
            fixture: format!("chain{n}_ball"),
            check: homotopy(n)?,
        });
    }
    let mut failures = 0;
    for l in &lines {
        let status = match l.check.passed {
            Some(true) => "PASS",
            Some(false) => {
                failures += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        writeln!(
            out,
            "{status} {:<22} {:<16} observed {:.3e} expected <= {:.1e}",
            l.check.name, l.fixture, l.check.observed, l.check.tolerance
        )?;
    }
    if failures > 0 {
        return Err(CliError::Verify(failures));
    }
    Ok(lines)
}

/// Entry point shared by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Gap(args) => args.resolve().and_then(|cfg| cmd_gap(&cfg, &mut out).map(|_| ())),
        Command::Sweep(args) => args.resolve().and_then(|cfg| cmd_sweep(&cfg, &mut out).map(|_| ())),
        Command::Verify => cmd_verify(&mut out).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
