//! Gibbs sampler for the Bayesian FPCA model
//!
//! ```text
//! X_i(t) = sum_k Z_ik f_k(t) + eps_i(t),   f_k = beta_k^T Phi,
//! Z_ik ~ N(0, lambda_k),  eps ~ N(0, sigma^2),
//! ```
//!
//! under one of four coefficient priors: independent normal (NO), horseshoe
//! (NO-S) or the adaptive orthogonal prior with a global or local constraint
//! scale (AOP-G / AOP-L). Every full conditional is a standard distribution.

mod output;
mod updates;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use output::{read_draws_bin, DrawsFile, FunctionBand, PosteriorSummary, DRAWS_MAGIC};
pub use updates::{
    forward_horseshoe_coefficient, log_joint_density, update_beta, update_horseshoe_global,
    update_horseshoe_local, update_lambda, update_scores, update_sigma, update_tau,
};

use crate::basis::{BasisSystem, GramMatrix};
use crate::data::FunctionalDataset;
use crate::error::{AopError, Result};
use crate::prior::default_b0;
use crate::random::{rng_from_seed, standard_normal_vector, ChainRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorFamily {
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "NO-S")]
    NoS,
    #[serde(rename = "AOP-G")]
    AopG,
    #[serde(rename = "AOP-L")]
    AopL,
    #[serde(rename = "AOP-fixed")]
    AopFixed,
}

impl PriorFamily {
    pub fn is_aop(self) -> bool {
        matches!(
            self,
            PriorFamily::AopG | PriorFamily::AopL | PriorFamily::AopFixed
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            PriorFamily::No => "NO",
            PriorFamily::NoS => "NO-S",
            PriorFamily::AopG => "AOP-G",
            PriorFamily::AopL => "AOP-L",
            PriorFamily::AopFixed => "AOP-fixed",
        }
    }
}

impl fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PriorFamily {
    type Err = AopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "no" => Ok(PriorFamily::No),
            "no-s" | "nos" => Ok(PriorFamily::NoS),
            "aop-g" => Ok(PriorFamily::AopG),
            "aop-l" => Ok(PriorFamily::AopL),
            "aop-fixed" => Ok(PriorFamily::AopFixed),
            other => Err(AopError::Config(format!("unknown prior family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a0: f64,
    /// `None` means `2 / K^2`.
    pub b0: Option<f64>,
    pub gamma: f64,
    /// `tau_2^2 .. tau_K^2` for [`PriorFamily::AopFixed`].
    pub fixed_tau: Option<Vec<f64>>,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            a_lambda: 1.0,
            b_lambda: 1.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
            a0: 3.0,
            b0: None,
            gamma: 1.0,
            fixed_tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Post-burn-in sweeps.
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub prior: PriorFamily,
    pub hyper: Hyper,
}

impl GibbsConfig {
    pub fn new(prior: PriorFamily, seed: u64) -> Self {
        GibbsConfig {
            n_iter: 3000,
            n_burnin: 2000,
            thin: 1,
            seed,
            prior,
            hyper: Hyper::default(),
        }
    }

    pub fn with_lengths(mut self, n_iter: usize, n_burnin: usize) -> Self {
        self.n_iter = n_iter;
        self.n_burnin = n_burnin;
        self
    }

    pub fn validate(&self, k: usize, l: usize) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 {
            return Err(AopError::Config(
                "iterations and thinning must be positive".into(),
            ));
        }
        if k == 0 || k > l {
            return Err(AopError::Config(format!(
                "need 1 <= K <= L, got K={k} L={l}"
            )));
        }
        let h = &self.hyper;
        let positive = [h.a_lambda, h.b_lambda, h.a_sigma, h.b_sigma, h.a0, h.gamma];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || h.b0.is_some_and(|b| !(b > 0.0))
        {
            return Err(AopError::Config("hyperparameters must be positive".into()));
        }
        if self.prior == PriorFamily::AopFixed {
            match &h.fixed_tau {
                Some(v) if v.len() == k - 1 && v.iter().all(|t| *t > 0.0) => {}
                _ => {
                    return Err(AopError::Config(format!(
                        "AOP-fixed needs {} positive tau^2 values",
                        k - 1
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn stored_draws(&self) -> usize {
        self.n_iter / self.thin
    }
}

/// Fixed quantities of one fit: the dataset projected on the basis.
#[derive(Debug, Clone)]
pub struct Model {
    pub k: usize,
    pub l: usize,
    pub family: PriorFamily,
    pub hyper: Hyper,
    /// Resolved `b0`.
    pub b0: f64,
    pub gram: GramMatrix,
    pub curves: Vec<PreparedCurve>,
    pub total_points: usize,
}

/// Per-curve design matrix `Phi_i` (`m_i x L`) and its cached products.
#[derive(Debug, Clone)]
pub struct PreparedCurve {
    pub design: DMatrix<f64>,
    /// `Phi_i^T Phi_i`
    pub cross: DMatrix<f64>,
    /// `Phi_i^T X_i`
    pub proj: DVector<f64>,
    pub values: DVector<f64>,
}

impl Model {
    pub fn new(
        data: &FunctionalDataset,
        basis: &BasisSystem,
        k: usize,
        config: &GibbsConfig,
    ) -> Result<Self> {
        let l = basis.size();
        config.validate(k, l)?;
        let (lo, hi) = basis.domain();
        data.validate(lo, hi)?;
        let curves = data
            .curves
            .iter()
            .map(|c| {
                let design = basis.design_matrix(&c.times)?;
                let values = DVector::from_column_slice(&c.values);
                Ok(PreparedCurve {
                    cross: design.transpose() * &design,
                    proj: design.transpose() * &values,
                    design,
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            k,
            l,
            family: config.prior,
            b0: config.hyper.b0.unwrap_or_else(|| default_b0(k)),
            hyper: config.hyper.clone(),
            gram: basis.gram().clone(),
            total_points: data.total_points(),
            curves,
        })
    }

    pub fn n(&self) -> usize {
        self.curves.len()
    }

    /// Number of stored `tau^2` values for this family.
    pub fn tau_len(&self) -> usize {
        match self.family {
            PriorFamily::AopG => 1,
            PriorFamily::AopL | PriorFamily::AopFixed => self.k - 1,
            PriorFamily::No | PriorFamily::NoS => 0,
        }
    }
}

/// Horseshoe scales of the NO-S prior: `beta_kl ~ N(0, global * local_kl)`
/// with half-Cauchy scales written through inverse-gamma auxiliaries.
#[derive(Debug, Clone, PartialEq)]
pub struct HorseshoeState {
    pub locals: Vec<DVector<f64>>,
    pub local_aux: Vec<DVector<f64>>,
    pub global: f64,
    pub global_aux: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub betas: Vec<DVector<f64>>,
    /// `n x K`
    pub scores: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    /// One value (AOP-G), `K - 1` values (AOP-L, AOP-fixed) or none.
    pub tau_sqs: Vec<f64>,
    pub sigma_sq: f64,
    pub horseshoe: Option<HorseshoeState>,
}

impl GibbsState {
    /// `beta_k ~ N(0, 0.1 I)`, `Z = 0`, `lambda = 1`, `sigma^2 = 1`, `tau^2 = 1 / K^2`.
    pub fn initial(model: &Model, rng: &mut ChainRng) -> Self {
        let (k, l) = (model.k, model.l);
        let betas = (0..k)
            .map(|_| standard_normal_vector(rng, l) * 0.1f64.sqrt())
            .collect();
        let tau_sqs = match (model.family, &model.hyper.fixed_tau) {
            (PriorFamily::AopFixed, Some(v)) => v.clone(),
            _ => vec![1.0 / (k * k) as f64; model.tau_len()],
        };
        let horseshoe = (model.family == PriorFamily::NoS).then(|| HorseshoeState {
            locals: vec![DVector::from_element(l, 1.0); k],
            local_aux: vec![DVector::from_element(l, 1.0); k],
            global: 1.0,
            global_aux: 1.0,
        });
        GibbsState {
            betas,
            scores: DMatrix::zeros(model.n(), k),
            lambdas: vec![1.0; k],
            tau_sqs,
            sigma_sq: 1.0,
            horseshoe,
        }
    }

    /// Constraint variance applied to the pairs `(j, k)` with `j < k` (0-based `k >= 1`).
    pub fn tau_for(&self, k: usize) -> f64 {
        match self.tau_sqs.len() {
            1 => self.tau_sqs[0],
            _ => self.tau_sqs[k - 1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.betas.iter().all(|b| b.iter().all(|x| x.is_finite()))
            && self.scores.iter().all(|x| x.is_finite())
            && self.lambdas.iter().all(|x| x.is_finite() && *x > 0.0)
            && self.tau_sqs.iter().all(|x| x.is_finite() && *x > 0.0)
            && self.sigma_sq.is_finite()
            && self.sigma_sq > 0.0
            && self.horseshoe.as_ref().is_none_or(|h| {
                h.global > 0.0
                    && h.global.is_finite()
                    && h.locals
                        .iter()
                        .all(|v| v.iter().all(|x| *x > 0.0 && x.is_finite()))
            })
    }

    fn dump(&self) -> String {
        format!(
            "lambda={:?} tau^2={:?} sigma^2={} max|beta|={:e} max|Z|={:e}",
            self.lambdas,
            self.tau_sqs,
            self.sigma_sq,
            self.betas.iter().map(|b| b.amax()).fold(0.0, f64::max),
            self.scores.amax()
        )
    }
}

/// One stored draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub betas: Vec<DVector<f64>>,
    pub lambdas: Vec<f64>,
    pub tau_sqs: Vec<f64>,
    pub sigma_sq: f64,
    pub log_joint: f64,
}

/// Thinned post-burn-in draws of one chain, in sampling order and labels.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub family: PriorFamily,
    pub draws: Vec<Draw>,
    /// Running mean of `Z` over stored draws (`n x K`).
    pub score_mean: DMatrix<f64>,
}

/// Runs all full-conditional updates once, in the order
/// `beta_1..beta_K, Z, lambda, tau^2, horseshoe scales, sigma^2`.
pub fn gibbs_sweep(state: &mut GibbsState, model: &Model, rng: &mut ChainRng) -> Result<()> {
    for k in 0..model.k {
        let beta = update_beta(state, model, k, rng)?;
        state.betas[k] = beta;
    }
    state.scores = update_scores(state, model, rng);
    state.lambdas = update_lambda(state, model, rng);
    if matches!(model.family, PriorFamily::AopG | PriorFamily::AopL) {
        state.tau_sqs = update_tau(state, model, rng);
    }
    if model.family == PriorFamily::NoS {
        for k in 0..model.k {
            update_horseshoe_local(state, k, rng);
        }
        update_horseshoe_global(state, rng);
    }
    state.sigma_sq = update_sigma(state, model, rng);
    Ok(())
}

pub fn run_gibbs(
    data: &FunctionalDataset,
    basis: &BasisSystem,
    k: usize,
    config: &GibbsConfig,
) -> Result<PosteriorDraws> {
    if data.n() == 0 {
        return Err(AopError::Data("dataset has no curves".into()));
    }
    let model = Model::new(data, basis, k, config)?;
    run_model(&model, config)
}

/// Runs a chain on a prepared model from [`GibbsState::initial`].
pub fn run_model(model: &Model, config: &GibbsConfig) -> Result<PosteriorDraws> {
    let mut rng = rng_from_seed(config.seed);
    let state = GibbsState::initial(model, &mut rng);
    run_chain(model, config, state, rng)
}

/// Runs a chain from an explicit starting state and random stream.
pub fn run_chain(
    model: &Model,
    config: &GibbsConfig,
    mut state: GibbsState,
    mut rng: ChainRng,
) -> Result<PosteriorDraws> {
    if state.betas.len() != model.k || state.scores.shape() != (model.n(), model.k) {
        return Err(AopError::Dimension {
            expected: model.k,
            found: state.betas.len(),
        });
    }
    let total = config.n_burnin + config.n_iter;
    let mut draws = Vec::with_capacity(config.stored_draws());
    let mut score_sum = DMatrix::zeros(model.n(), model.k);
    for sweep in 0..total {
        gibbs_sweep(&mut state, model, &mut rng)
            .map_err(|e| AopError::Numerical(format!("sweep {sweep}: {e}")))?;
        if !state.is_finite() {
            return Err(AopError::Numerical(format!(
                "non-finite state after sweep {sweep}: {}",
                state.dump()
            )));
        }
        if sweep >= config.n_burnin && (sweep - config.n_burnin + 1).is_multiple_of(config.thin) {
            score_sum += &state.scores;
            draws.push(Draw {
                betas: state.betas.clone(),
                lambdas: state.lambdas.clone(),
                tau_sqs: state.tau_sqs.clone(),
                sigma_sq: state.sigma_sq,
                log_joint: log_joint_density(&state, model),
            });
        }
    }
    let count = draws.len().max(1) as f64;
    Ok(PosteriorDraws {
        k: model.k,
        l: model.l,
        n: model.n(),
        family: model.family,
        draws,
        score_mean: score_sum / count,
    })
}
