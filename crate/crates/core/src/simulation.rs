//! Synthetic FPCA scenarios and the Monte Carlo study runner.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, default_quadrature_points, BasisSpec, BasisSystem};
use crate::data::{Curve, FunctionalDataset};
use crate::error::{AopError, Result};
use crate::metrics::metric_report;
use crate::random::{derive_seed, rng_from_seed, standard_normal};
use crate::sampler::{run_gibbs, GibbsConfig, PosteriorSummary, PriorFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Legendre,
    Haar,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Legendre => "legendre",
            Scenario::Haar => "haar",
        }
    }

    fn id(self) -> u64 {
        match self {
            Scenario::Legendre => 1,
            Scenario::Haar => 2,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = AopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "legendre" | "1" => Ok(Scenario::Legendre),
            "haar" | "2" => Ok(Scenario::Haar),
            other => Err(AopError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// The three true principal functions at `t in [0, 1]`.
pub fn true_functions(scenario: Scenario, t: f64) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AopError::Domain {
            t,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let ind = |c: bool| if c { 1.0 } else { 0.0 };
    Ok(match scenario {
        Scenario::Legendre => [
            3f64.sqrt() * (2.0 * t - 1.0),
            5f64.sqrt() * (6.0 * t * t - 6.0 * t + 1.0),
            7f64.sqrt() * (20.0 * t.powi(3) - 30.0 * t * t + 12.0 * t - 1.0),
        ],
        Scenario::Haar => {
            let s2 = 2f64.sqrt();
            [
                ind(t < 0.5) - ind(t >= 0.5),
                s2 * (ind(t < 0.25) - ind((0.25..0.5).contains(&t))),
                s2 * (ind((0.5..0.75).contains(&t)) - ind(t >= 0.75)),
            ]
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    /// Grid size.
    pub t_points: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub score_sds: [f64; 3],
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize) -> Self {
        ScenarioSpec {
            scenario,
            n,
            t_points: 30,
            sigma: 1.0,
            score_sds: [1.0, 0.7, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t_points < 2 {
            return Err(AopError::Config(format!(
                "need n > 0 and T > 1, got n={} T={}",
                self.n, self.t_points
            )));
        }
        if !(self.sigma >= 0.0) || self.score_sds.iter().any(|s| !(*s >= 0.0)) {
            return Err(AopError::Config(
                "standard deviations must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// `t_j = (j - 1) / (T - 1)`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.t_points)
            .map(|j| j as f64 / (self.t_points - 1) as f64)
            .collect()
    }
}

/// Curves `Y_i(t_j) = sum_k xi_ik f_k(t_j) + eps_ij` with the given scores.
pub fn curves_from_scores<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    scores: &[[f64; 3]],
    rng: &mut R,
) -> Result<FunctionalDataset> {
    let grid = spec.grid();
    let fs = grid
        .iter()
        .map(|&t| true_functions(spec.scenario, t))
        .collect::<Result<Vec<_>>>()?;
    let curves = scores
        .iter()
        .enumerate()
        .map(|(i, xi)| Curve {
            id: (i + 1).to_string(),
            times: grid.clone(),
            values: fs
                .iter()
                .map(|f| {
                    xi[0] * f[0] + xi[1] * f[1] + xi[2] * f[2] + spec.sigma * standard_normal(rng)
                })
                .collect(),
        })
        .collect();
    Ok(FunctionalDataset::new(curves))
}

pub fn generate_dataset(spec: &ScenarioSpec, seed: u64) -> Result<FunctionalDataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let sd = spec.score_sds;
    let scores: Vec<[f64; 3]> = (0..spec.n)
        .map(|_| {
            [
                sd[0] * standard_normal(&mut rng),
                sd[1] * standard_normal(&mut rng),
                sd[2] * standard_normal(&mut rng),
            ]
        })
        .collect();
    curves_from_scores(spec, &scores, &mut rng)
}

/// Grid of cells and the shared fit settings of a Monte Carlo study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyPlan {
    pub scenarios: Vec<Scenario>,
    pub ns: Vec<usize>,
    pub methods: Vec<PriorFamily>,
    pub reps: usize,
    pub k: usize,
    pub l: usize,
    pub epsilon: f64,
    /// Chain settings; `mcmc.seed` is the master seed.
    pub mcmc: GibbsConfig,
    /// Worker threads; 1 runs sequentially.
    pub parallelism: usize,
}

impl StudyPlan {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(AopError::Config("need at least one replication".into()));
        }
        if self.scenarios.is_empty() || self.ns.is_empty() || self.methods.is_empty() {
            return Err(AopError::Config("study grid is empty".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| {
            !matches!(
                m,
                PriorFamily::No | PriorFamily::NoS | PriorFamily::AopG | PriorFamily::AopL
            )
        }) {
            return Err(AopError::Config(format!(
                "method {m} is not available in studies"
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(AopError::Config("epsilon must be positive".into()));
        }
        self.mcmc.validate(self.k, self.l)
    }

    fn cells(&self) -> Vec<(Scenario, usize, PriorFamily)> {
        let mut out = Vec::new();
        for &s in &self.scenarios {
            for &n in &self.ns {
                for &m in &self.methods {
                    out.push((s, n, m));
                }
            }
        }
        out
    }

    /// Seed of the simulated dataset of replication `r`; shared by every method.
    pub fn data_seed(&self, scenario: Scenario, n: usize, r: usize) -> u64 {
        derive_seed(&[self.mcmc.seed, scenario.id(), n as u64, 0, r as u64])
    }

    /// Seed of the chain of replication `r` for `method`.
    pub fn chain_seed(&self, scenario: Scenario, n: usize, method: PriorFamily, r: usize) -> u64 {
        derive_seed(&[
            self.mcmc.seed,
            scenario.id(),
            n as u64,
            method_id(method),
            r as u64,
        ])
    }
}

fn method_id(m: PriorFamily) -> u64 {
    match m {
        PriorFamily::No => 1,
        PriorFamily::NoS => 2,
        PriorFamily::AopG => 3,
        PriorFamily::AopL => 4,
        PriorFamily::AopFixed => 5,
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub nc: usize,
    pub og: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub scenario: Scenario,
    pub n: usize,
    pub method: PriorFamily,
    pub nc_mean: f64,
    pub nc_sd: f64,
    pub og_mean: f64,
    pub og_sd: f64,
    pub failures: usize,
    pub aborted: bool,
    pub nc_values: Vec<usize>,
    pub og_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub reps: usize,
    pub cells: Vec<CellReport>,
}

/// Progress notification emitted after each replication.
#[derive(Debug, Clone)]
pub struct Progress {
    pub scenario: Scenario,
    pub n: usize,
    pub method: PriorFamily,
    pub rep: usize,
    pub result: std::result::Result<ReplicationResult, String>,
}

/// Generates, fits and scores one replication.
pub fn run_replication(
    plan: &StudyPlan,
    basis: &BasisSystem,
    scenario: Scenario,
    n: usize,
    method: PriorFamily,
    r: usize,
) -> Result<ReplicationResult> {
    let spec = ScenarioSpec::new(scenario, n);
    let data = generate_dataset(&spec, plan.data_seed(scenario, n, r))?;
    let mut cfg = plan.mcmc.clone();
    cfg.prior = method;
    cfg.seed = plan.chain_seed(scenario, n, method, r);
    let draws = run_gibbs(&data, basis, plan.k, &cfg)?;
    let summary = PosteriorSummary::new(&draws, basis, plan.epsilon)?;
    let report = metric_report(&summary.beta_mean, basis.gram(), plan.epsilon);
    Ok(ReplicationResult {
        nc: report.nc,
        og: report.og,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// Runs every `(scenario, n, method)` cell `plan.reps` times. Results are
/// independent of `plan.parallelism`: each replication owns its seeds and
/// the report is assembled in task order.
pub fn run_study(plan: &StudyPlan, progress: &(dyn Fn(&Progress) + Sync)) -> Result<StudyReport> {
    plan.validate()?;
    let basis = build_basis(
        BasisSpec::cubic_bspline(plan.l, 0.0, 1.0),
        default_quadrature_points(plan.l),
    )?;
    let cells = plan.cells();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.reps).map(move |r| (c, r)))
        .collect();
    let run = |&(c, r): &(usize, usize)| {
        let (s, n, m) = cells[c];
        let result = run_replication(plan, &basis, s, n, m, r).map_err(|e| e.to_string());
        progress(&Progress {
            scenario: s,
            n,
            method: m,
            rep: r,
            result: result.clone(),
        });
        result
    };
    let results = execute(&tasks, plan.parallelism, run)?;

    let mut reports = Vec::with_capacity(cells.len());
    for (c, &(scenario, n, method)) in cells.iter().enumerate() {
        let outcomes = &results[c * plan.reps..(c + 1) * plan.reps];
        let ok: Vec<&ReplicationResult> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let failures = outcomes.len() - ok.len();
        for e in outcomes.iter().filter_map(|o| o.as_ref().err()) {
            log::warn!("{scenario} n={n} {method}: replication failed: {e}");
        }
        let nc: Vec<f64> = ok.iter().map(|o| o.nc as f64).collect();
        let og: Vec<f64> = ok.iter().map(|o| o.og).collect();
        let (nc_mean, nc_sd) = mean_sd(&nc);
        let (og_mean, og_sd) = mean_sd(&og);
        reports.push(CellReport {
            scenario,
            n,
            method,
            nc_mean,
            nc_sd,
            og_mean,
            og_sd,
            failures,
            aborted: failures * 10 > plan.reps,
            nc_values: ok.iter().map(|o| o.nc).collect(),
            og_values: og,
        });
    }
    Ok(StudyReport {
        reps: plan.reps,
        cells: reports,
    })
}

#[cfg(feature = "parallel")]
fn execute<T, F>(tasks: &[(usize, usize)], parallelism: usize, run: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&(usize, usize)) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallelism <= 1 {
        return Ok(tasks.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| AopError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}

#[cfg(not(feature = "parallel"))]
fn execute<T, F>(tasks: &[(usize, usize)], _parallelism: usize, run: F) -> Result<Vec<T>>
where
    F: Fn(&(usize, usize)) -> T,
{
    Ok(tasks.iter().map(run).collect())
}

impl StudyReport {
    pub fn any_aborted(&self) -> bool {
        self.cells.iter().any(|c| c.aborted)
    }

    pub fn cell(&self, scenario: Scenario, n: usize, method: PriorFamily) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.n == n && c.method == method)
    }

    /// `scenario,n,method,nc_mean,nc_sd,og_mean,og_sd,failures`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,n,method,nc_mean,nc_sd,og_mean,og_sd,failures\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.scenario, c.n, c.method, c.nc_mean, c.nc_sd, c.og_mean, c.og_sd, c.failures
            ));
        }
        s
    }

    /// Human-readable table, one row per cell.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>5} {:<7} {:>15} {:>15} {:>8}\n",
            "scenario", "n", "method", "NC mean (sd)", "OG mean (sd)", "failed"
        );
        for c in &self.cells {
            s.push_str(&format!(
                "{:<10} {:>5} {:<7} {:>15} {:>15} {:>8}{}\n",
                c.scenario.name(),
                c.n,
                c.method.label(),
                format!("{:.2} ({:.2})", c.nc_mean, c.nc_sd),
                format!("{:.2} ({:.2})", c.og_mean, c.og_sd),
                c.failures,
                if c.aborted { "  ABORTED" } else { "" }
            ));
        }
        s
    }
}
