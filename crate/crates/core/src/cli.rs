//! Command-line front end.
//!
//! Every command accepts `--config <file>`: a TOML file of flat `key = value`
//! pairs named after the long flags (`K`, `L`, `prior`, `iters`, ...). Flags
//! given on the command line override file values. Lists (`scenario`, `n`,
//! `prior` for `replicate`) are comma-separated strings.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, default_quadrature_points, BasisSpec};
use crate::data::FunctionalDataset;
use crate::error::{AopError, Result};
use crate::metrics::DEFAULT_EPSILON;
use crate::prior::second_level_density_grid;
use crate::sampler::{run_gibbs, GibbsConfig, Hyper, PosteriorSummary, PriorFamily};
use crate::simulation::{generate_dataset, run_study, Scenario, ScenarioSpec, StudyPlan};

#[derive(Debug, Parser)]
#[command(
    name = "aop-fpca",
    version,
    about = "Bayesian FPCA with adaptive orthogonal priors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as long-format CSV.
    Simulate(SimulateArgs),
    /// Fit the FPCA model to a long-format CSV with one Gibbs chain.
    Fit(FitArgs),
    /// Run a Monte Carlo study over scenarios, sample sizes and priors.
    Replicate(ReplicateArgs),
    /// Divide each curve by its root mean square.
    Scale(ScaleArgs),
    /// Emit conditional prior density surfaces for a two-dimensional example.
    PriorPlot(PriorPlotArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid size.
    #[arg(long = "T")]
    pub t_points: Option<usize>,
    /// Output CSV; a JSON sidecar with the generating settings is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub b0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Long-format CSV with columns id,t,y.
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Comma-separated scenarios.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PriorPlotArgs {
    /// Lattice points per axis.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Half-width of the square lattice.
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Values read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub n: Option<Count>,
    pub seed: Option<u64>,
    #[serde(rename = "T")]
    pub t_points: Option<usize>,
    pub prior: Option<String>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub a0: Option<f64>,
    pub b0: Option<f64>,
    pub reps: Option<usize>,
    pub parallel: Option<usize>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// `n` may be a number or a comma-separated list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    One(usize),
    List(String),
}

impl Count {
    fn as_string(&self) -> String {
        match self {
            Count::One(n) => n.to_string(),
            Count::List(s) => s.clone(),
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| AopError::io(path, e))?;
    toml::from_str(&text).map_err(|e| AopError::Config(format!("{}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| AopError::Config(format!("invalid {what} '{p}'")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    let mut v: Vec<T> = parse_list(s, what)?;
    if v.len() != 1 {
        return Err(AopError::Config(format!(
            "expected a single {what}, got '{s}'"
        )));
    }
    Ok(v.remove(0))
}

fn family(s: &str) -> Result<PriorFamily> {
    s.parse()
}

/// Model settings after merging flags, file and defaults.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedModel {
    pub prior: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub gamma: f64,
    pub a0: f64,
    pub b0: f64,
}

impl ResolvedModel {
    fn resolve(args: &ModelArgs, file: &ConfigFile, default_prior: &str) -> Result<Self> {
        let k = args.k.or(file.k).unwrap_or(10);
        let r = ResolvedModel {
            prior: args
                .prior
                .clone()
                .or_else(|| file.prior.clone())
                .unwrap_or_else(|| default_prior.to_string()),
            k,
            l: args.l.or(file.l).unwrap_or(12),
            iters: args.iters.or(file.iters).unwrap_or(3000),
            burnin: args.burnin.or(file.burnin).unwrap_or(2000),
            thin: args.thin.or(file.thin).unwrap_or(1),
            seed: args.seed.or(file.seed).unwrap_or(1),
            epsilon: args.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
            gamma: args.gamma.or(file.gamma).unwrap_or(1.0),
            a0: args.a0.or(file.a0).unwrap_or(3.0),
            b0: args.b0.or(file.b0).unwrap_or(2.0 / (k * k).max(1) as f64),
        };
        if r.k == 0 || r.k > r.l {
            return Err(AopError::Config(format!(
                "need 1 <= K <= L, got K={} L={}",
                r.k, r.l
            )));
        }
        if r.iters == 0 || r.thin == 0 {
            return Err(AopError::Config("iters and thin must be positive".into()));
        }
        for (name, v) in [
            ("epsilon", r.epsilon),
            ("gamma", r.gamma),
            ("a0", r.a0),
            ("b0", r.b0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AopError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(r)
    }

    fn gibbs(&self, prior: PriorFamily) -> GibbsConfig {
        GibbsConfig {
            n_iter: self.iters,
            n_burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            prior,
            hyper: Hyper {
                a0: self.a0,
                b0: Some(self.b0),
                gamma: self.gamma,
                ..Hyper::default()
            },
        }
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| AopError::Config(format!("missing required --{flag}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| AopError::io(path, e))
}

fn json_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Replicate(a) => cmd_replicate(a, out),
        Command::Scale(a) => cmd_scale(a, out),
        Command::PriorPlot(a) => cmd_prior_plot(a, out),
    }
}

fn say(out: &mut dyn Write, msg: String) -> Result<()> {
    writeln!(out, "{msg}").map_err(|e| AopError::io("<stdout>", e))
}

pub fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(a.config.as_deref())?;
    let scenario: Scenario = parse_one(
        &required(a.scenario.or(file.scenario), "scenario")?,
        "scenario",
    )?;
    let n: usize = parse_one(&required(a.n.or(file.n.map(|c| c.as_string())), "n")?, "n")?;
    let seed = a.seed.or(file.seed).unwrap_or(1);
    let path = required(a.out.or(file.out), "out")?;
    let spec = ScenarioSpec {
        t_points: a.t_points.or(file.t_points).unwrap_or(30),
        ..ScenarioSpec::new(scenario, n)
    };
    spec.validate()?;
    let data = generate_dataset(&spec, seed)?;
    data.write_csv_path(&path)?;
    let sidecar = path.with_extension("json");
    let meta = serde_json::json!({ "spec": spec, "seed": seed, "rows": data.total_points() });
    write_file(&sidecar, json_pretty(&meta).as_bytes())?;
    say(
        out,
        format!("wrote {} rows to {}", data.total_points(), path.display()),
    )?;
    Ok(0)
}

pub fn cmd_fit(a: FitArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(a.config.as_deref())?;
    let input = required(a.input.or(file.input.clone()), "input")?;
    let dir = required(a.out.or(file.out.clone()), "out")?;
    let model = ResolvedModel::resolve(&a.model, &file, "aop-g")?;
    let prior = family(&model.prior)?;
    if matches!(prior, PriorFamily::AopFixed) {
        return Err(AopError::Config(
            "AOP-fixed is not available from the command line".into(),
        ));
    }
    let data = FunctionalDataset::read_csv_path(&input)?;
    let (lo, hi) = data
        .time_range()
        .ok_or_else(|| AopError::Data(format!("{}: no observations", input.display())))?;
    if !(lo < hi) {
        return Err(AopError::Data("all observation times coincide".into()));
    }
    let basis = build_basis(
        BasisSpec::cubic_bspline(model.l, lo, hi),
        default_quadrature_points(model.l),
    )?;
    let cfg = model.gibbs(prior);
    let draws = run_gibbs(&data, &basis, model.k, &cfg)?;
    let summary = PosteriorSummary::new(&draws, &basis, model.epsilon)?;
    let echo = serde_json::json!({ "input": input, "domain": [lo, hi], "model": model });
    summary.write_dir(&dir, &basis, echo.clone())?;
    write_file(&dir.join("config.json"), json_pretty(&echo).as_bytes())?;
    say(
        out,
        format!(
            "NC = {}\nOG = {:.6}\nsigma^2 (posterior mean) = {:.6}",
            summary.metrics.nc, summary.metrics.og, summary.sigma_sq_mean
        ),
    )?;
    Ok(0)
}

pub fn cmd_replicate(a: ReplicateArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(a.config.as_deref())?;
    let dir = required(a.out.or(file.out.clone()), "out")?;
    let model = ResolvedModel::resolve(&a.model, &file, "no,no-s,aop-g,aop-l")?;
    let plan = StudyPlan {
        scenarios: parse_list(
            &a.scenario
                .or(file.scenario.clone())
                .unwrap_or_else(|| "legendre".into()),
            "scenario",
        )?,
        ns: parse_list(
            &a.n.or(file.n.as_ref().map(Count::as_string))
                .unwrap_or_else(|| "100".into()),
            "n",
        )?,
        methods: parse_list(&model.prior, "prior")?,
        reps: a.reps.or(file.reps).unwrap_or(20),
        k: model.k,
        l: model.l,
        epsilon: model.epsilon,
        mcmc: model.gibbs(PriorFamily::AopG),
        parallelism: a.parallel.or(file.parallel).unwrap_or(1).max(1),
    };
    plan.validate()?;
    std::fs::create_dir_all(&dir).map_err(|e| AopError::io(&dir, e))?;
    write_file(&dir.join("config.json"), json_pretty(&plan).as_bytes())?;
    let report = run_study(&plan, &|p| match &p.result {
        Ok(r) => log::info!(
            "{} n={} {} rep {}: NC={} OG={:.4}",
            p.scenario,
            p.n,
            p.method,
            p.rep,
            r.nc,
            r.og
        ),
        Err(e) => log::warn!(
            "{} n={} {} rep {} failed: {e}",
            p.scenario,
            p.n,
            p.method,
            p.rep
        ),
    })?;
    let table = report.to_table();
    write_file(&dir.join("study.csv"), report.to_csv().as_bytes())?;
    write_file(&dir.join("study.txt"), table.as_bytes())?;
    write_file(&dir.join("study.json"), json_pretty(&report).as_bytes())?;
    say(out, table)?;
    Ok(if report.any_aborted() { 3 } else { 0 })
}

pub fn cmd_scale(a: ScaleArgs, out: &mut dyn Write) -> Result<i32> {
    let data = FunctionalDataset::read_csv_path(&a.input)?;
    let scaled = data.scaled()?;
    scaled.write_csv_path(&a.out)?;
    say(
        out,
        format!("scaled {} curves into {}", scaled.n(), a.out.display()),
    )?;
    Ok(0)
}

/// `(tau_2^2, B_02)` pairs drawn by `prior-plot`.
pub const PRIOR_PLOT_CONFIGS: [(f64, f64); 3] = [(0.01, 1.0), (1.0, 1.0), (0.01, 2.0)];
/// `beta_1` used by `prior-plot`.
pub const PRIOR_PLOT_BETA1: [f64; 2] = [0.5, 1.0];

pub fn prior_plot_label(tau_sq: f64, b02: f64) -> String {
    format!("tau2={tau_sq}/B02={b02}")
}

pub fn cmd_prior_plot(a: PriorPlotArgs, out: &mut dyn Write) -> Result<i32> {
    if a.grid < 2 || !(a.range > 0.0) {
        return Err(AopError::Config(
            "grid needs >= 2 points and a positive range".into(),
        ));
    }
    let axis: Vec<f64> = (0..a.grid)
        .map(|i| -a.range + 2.0 * a.range * i as f64 / (a.grid - 1) as f64)
        .collect();
    let f = std::fs::File::create(&a.out).map_err(|e| AopError::io(&a.out, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    let fail = |e: csv::Error| AopError::Data(format!("{}: {e}", a.out.display()));
    w.write_record(["x", "y", "density", "config_label"])
        .map_err(fail)?;
    for (tau_sq, b02) in PRIOR_PLOT_CONFIGS {
        let label = prior_plot_label(tau_sq, b02);
        for p in second_level_density_grid(&PRIOR_PLOT_BETA1, tau_sq, b02, &axis, &axis)? {
            w.write_record([
                format!("{}", p.x),
                format!("{}", p.y),
                format!("{:e}", p.density),
                label.clone(),
            ])
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| AopError::io(&a.out, e))?;
    say(
        out,
        format!(
            "wrote {} density surfaces to {}",
            PRIOR_PLOT_CONFIGS.len(),
            a.out.display()
        ),
    )?;
    Ok(0)
}
