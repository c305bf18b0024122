//! Adaptive orthogonal prior over a sequence of coefficient vectors.
//!
//! `beta_1 ~ N(0, gamma I)`. Given `beta_1..beta_j`, the next vector is defined
//! through the stacked map
//!
//! ```text
//! A_{j+1} = [ beta_1^T Omega ; ... ; beta_j^T Omega ; H_{j+1} ]
//! A_{j+1} beta_{j+1} ~ N(0, blockdiag(tau_{j+1}^2 I_j, gamma I_{L-j}))
//! ```
//!
//! so every inner product `beta_k^T Omega beta_{j+1}` has prior variance
//! `tau_{j+1}^2`, while the rows of `H_{j+1}` carry a diffuse `N(0, gamma)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::GramMatrix;
use crate::error::{AopError, Result};
use crate::random::{mvn_from_covariance, rng_from_seed, standard_normal_vector};

/// Largest admissible condition number of `A_{j+1}`.
pub const MAX_CONDITION: f64 = 1e12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauMode {
    /// Known values `tau_2^2 .. tau_K^2`.
    Fixed(Vec<f64>),
    /// One shared `tau^2 ~ IG(a0, b0)`.
    Global,
    /// Independent `tau_k^2 ~ IG(a0, b0)` for `k = 2..K`.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AopConfig {
    pub k: usize,
    pub l: usize,
    pub gamma: f64,
    pub tau_mode: TauMode,
    pub a0: f64,
    pub b0: f64,
}

impl AopConfig {
    /// Global mode with `gamma = 1`, `a0 = 3`, `b0 = 2 / K^2`.
    pub fn new(k: usize, l: usize) -> Self {
        AopConfig {
            k,
            l,
            gamma: 1.0,
            tau_mode: TauMode::Global,
            a0: 3.0,
            b0: default_b0(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > self.l {
            return Err(AopError::Config(format!(
                "need 1 <= K <= L, got K={} L={}",
                self.k, self.l
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(AopError::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(AopError::Config(format!(
                "a0 and b0 must be positive, got a0={} b0={}",
                self.a0, self.b0
            )));
        }
        if let TauMode::Fixed(v) = &self.tau_mode {
            check_taus(v, self.k)?;
        }
        Ok(())
    }
}

/// Hyperprior scale giving `E[tau^2] = 1 / K^2` when `a0 = 3`.
pub fn default_b0(k: usize) -> f64 {
    2.0 / (k * k) as f64
}

fn check_taus(taus: &[f64], k: usize) -> Result<()> {
    if taus.len() != k.saturating_sub(1) {
        return Err(AopError::Config(format!(
            "expected {} tau^2 values, got {}",
            k.saturating_sub(1),
            taus.len()
        )));
    }
    if let Some(bad) = taus.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(AopError::Config(format!(
            "tau^2 must be positive, got {bad}"
        )));
    }
    Ok(())
}

/// `(L - j) x L` matrix with orthonormal rows used for level `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix(DMatrix<f64>);

impl ConstraintMatrix {
    /// Wraps an arbitrary matrix; rows must be orthonormal to within 1e-10.
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let hht = &h * h.transpose();
        let eye = DMatrix::<f64>::identity(h.nrows(), h.nrows());
        if (hht - eye).amax() > 1e-10 {
            return Err(AopError::Precondition(
                "constraint matrix rows are not orthonormal".into(),
            ));
        }
        Ok(ConstraintMatrix(h))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }
}

/// The last `L - j` rows of `I_L`.
pub fn build_h_matrix(l: usize, j: usize) -> Result<ConstraintMatrix> {
    if j < 1 || j >= l {
        return Err(AopError::Config(format!(
            "constraint level needs 1 <= j < L, got j={j} L={l}"
        )));
    }
    let rows = l - j;
    Ok(ConstraintMatrix(DMatrix::from_fn(rows, l, |r, c| {
        if c == j + r {
            1.0
        } else {
            0.0
        }
    })))
}

/// Coefficient vectors `beta_1 .. beta_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    betas: Vec<DVector<f64>>,
}

impl CoefficientSet {
    pub fn new(betas: Vec<DVector<f64>>) -> Result<Self> {
        if let Some(first) = betas.first() {
            let l = first.len();
            for b in &betas {
                if b.len() != l {
                    return Err(AopError::Dimension {
                        expected: l,
                        found: b.len(),
                    });
                }
                if b.iter().any(|x| !x.is_finite()) {
                    return Err(AopError::Numerical("non-finite coefficient".into()));
                }
            }
        }
        Ok(CoefficientSet { betas })
    }

    /// Builds from the rows of a `K x L` matrix.
    pub fn from_rows(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.row_iter().map(|r| r.transpose()).collect())
    }

    pub fn k(&self) -> usize {
        self.betas.len()
    }

    pub fn l(&self) -> usize {
        self.betas.first().map_or(0, |b| b.len())
    }

    pub fn betas(&self) -> &[DVector<f64>] {
        &self.betas
    }

    pub fn get(&self, k: usize) -> &DVector<f64> {
        &self.betas[k]
    }

    pub fn into_inner(self) -> Vec<DVector<f64>> {
        self.betas
    }

    /// `K x L` matrix with `beta_k^T` as row `k`.
    pub fn to_rows(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.k(), self.l(), |r, c| self.betas[r][c])
    }
}

/// Mean and covariance of `beta_{j+1} | beta_{1:j}`.
#[derive(Debug, Clone)]
pub struct ConditionalPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `A_{j+1}`, kept for density evaluation.
    pub stacked: DMatrix<f64>,
}

/// Stacks `beta_k^T Omega` rows over `H`.
pub fn stacked_constraint(
    prefix: &[DVector<f64>],
    gram: &GramMatrix,
    h: &ConstraintMatrix,
) -> Result<DMatrix<f64>> {
    let l = gram.dim();
    let j = prefix.len();
    if h.matrix().ncols() != l {
        return Err(AopError::Dimension {
            expected: l,
            found: h.matrix().ncols(),
        });
    }
    if h.rows() + j != l {
        return Err(AopError::Dimension {
            expected: l - j,
            found: h.rows(),
        });
    }
    let mut a = DMatrix::zeros(l, l);
    for (r, beta) in prefix.iter().enumerate() {
        if beta.len() != l {
            return Err(AopError::Dimension {
                expected: l,
                found: beta.len(),
            });
        }
        let row = gram.matrix() * beta;
        a.row_mut(r).copy_from(&row.transpose());
    }
    a.rows_mut(j, l - j).copy_from(h.matrix());
    Ok(a)
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn checked_inverse(a: &DMatrix<f64>, level: usize) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if !(condition < MAX_CONDITION) {
        return Err(AopError::DegenerateConstraint { level, condition });
    }
    a.clone()
        .try_inverse()
        .ok_or(AopError::DegenerateConstraint { level, condition })
}

/// Mean and covariance of the conditional prior of `beta_{j+1}` given the
/// `j` vectors in `prefix`, with zero prior mean for the `H` block.
pub fn conditional_prior_params(
    prefix: &[DVector<f64>],
    gram: &GramMatrix,
    tau_sq: f64,
    h: &ConstraintMatrix,
    gamma: f64,
) -> Result<ConditionalPrior> {
    if !(tau_sq > 0.0) || !(gamma > 0.0) {
        return Err(AopError::Config(format!(
            "tau^2 and gamma must be positive, got {tau_sq} and {gamma}"
        )));
    }
    let j = prefix.len();
    let l = gram.dim();
    let a = stacked_constraint(prefix, gram, h)?;
    let a_inv = checked_inverse(&a, j + 1)?;
    let scales = DVector::from_fn(l, |r, _| if r < j { tau_sq } else { gamma });
    let scaled = &a_inv * DMatrix::from_diagonal(&scales);
    let cov = &scaled * a_inv.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(ConditionalPrior {
        mean: DVector::zeros(l),
        cov,
        stacked: a,
    })
}

/// Forward draw of `beta_1..beta_K` with `tau_values[j - 1]` used at level `j + 1`.
pub fn sample_sequential_prior_with<R: Rng + ?Sized>(
    config: &AopConfig,
    gram: &GramMatrix,
    tau_values: &[f64],
    rng: &mut R,
) -> Result<CoefficientSet> {
    config.validate()?;
    check_taus(tau_values, config.k)?;
    if gram.dim() != config.l {
        return Err(AopError::Dimension {
            expected: config.l,
            found: gram.dim(),
        });
    }
    let mut betas: Vec<DVector<f64>> = Vec::with_capacity(config.k);
    betas.push(standard_normal_vector(rng, config.l) * config.gamma.sqrt());
    for j in 1..config.k {
        let h = build_h_matrix(config.l, j)?;
        let cond = conditional_prior_params(&betas, gram, tau_values[j - 1], &h, config.gamma)?;
        betas.push(mvn_from_covariance(rng, &cond.mean, &cond.cov)?);
    }
    CoefficientSet::new(betas)
}

pub fn sample_sequential_prior(
    config: &AopConfig,
    gram: &GramMatrix,
    tau_values: &[f64],
    seed: u64,
) -> Result<CoefficientSet> {
    let mut rng = rng_from_seed(seed);
    sample_sequential_prior_with(config, gram, tau_values, &mut rng)
}

/// Normalized log density of the sequential prior, including the
/// `log |det A_{j+1}|` change-of-variables terms.
pub fn log_joint_prior_density(
    betas: &CoefficientSet,
    tau_values: &[f64],
    gram: &GramMatrix,
    config: &AopConfig,
) -> Result<f64> {
    config.validate()?;
    check_taus(tau_values, config.k)?;
    if betas.k() != config.k || betas.l() != config.l {
        return Err(AopError::Dimension {
            expected: config.k * config.l,
            found: betas.k() * betas.l(),
        });
    }
    let gamma = config.gamma;
    let first = betas.get(0);
    let mut total =
        -0.5 * first.norm_squared() / gamma - 0.5 * config.l as f64 * (LN_2PI + gamma.ln());
    for j in 1..config.k {
        let h = build_h_matrix(config.l, j)?;
        let a = stacked_constraint(&betas.betas()[..j], gram, &h)?;
        let tau_sq = tau_values[j - 1];
        let z = &a * betas.get(j);
        let mut level = 0.0;
        for (r, zr) in z.iter().enumerate() {
            let var = if r < j { tau_sq } else { gamma };
            level += -0.5 * zr * zr / var - 0.5 * (LN_2PI + var.ln());
        }
        let det = a.clone().determinant();
        if det == 0.0 {
            return Err(AopError::DegenerateConstraint {
                level: j + 1,
                condition: f64::INFINITY,
            });
        }
        total += level + det.abs().ln();
    }
    Ok(total)
}

/// Closed-form `tr Var(beta_{j+1} | beta_{1:j})` for an orthonormal basis:
///
/// ```text
/// tau^2 tr(S^{-1}) + gamma (L - j) + gamma tr(S^{-1} B^T (I - P) B),
/// S = B^T P B,  P = I - H^T H,  B = [beta_1 .. beta_j].
/// ```
pub fn conditional_trace_variance(
    prefix: &[DVector<f64>],
    tau_sq: f64,
    gamma: f64,
    h: &ConstraintMatrix,
    gram: &GramMatrix,
) -> Result<f64> {
    if !gram.is_identity() {
        return Err(AopError::Precondition(
            "trace identity requires an identity Gram matrix".into(),
        ));
    }
    let l = gram.dim();
    let j = prefix.len();
    if j == 0 || h.rows() + j != l || h.matrix().ncols() != l {
        return Err(AopError::Dimension {
            expected: l.saturating_sub(j),
            found: h.rows(),
        });
    }
    let b = DMatrix::from_columns(prefix);
    let hth = h.matrix().transpose() * h.matrix();
    let p = DMatrix::<f64>::identity(l, l) - &hth;
    let s = b.transpose() * &p * &b;
    let s_inv = s
        .clone()
        .try_inverse()
        .filter(|_| condition_number(&s) < MAX_CONDITION)
        .ok_or(AopError::DegenerateConstraint {
            level: j + 1,
            condition: condition_number(&s),
        })?;
    let cross = &s_inv * b.transpose() * &hth * &b;
    Ok(tau_sq * s_inv.trace() + gamma * (l - j) as f64 + gamma * cross.trace())
}

/// One lattice point of a two-dimensional conditional density surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityPoint {
    pub x: f64,
    pub y: f64,
    pub density: f64,
}

/// Density of `beta_2 | beta_1` for `L = K = 2`, `Omega = I`, `H_2 = (0, 1)`
/// and `B_02 = b02`, evaluated on the lattice `xs x ys`.
pub fn second_level_density_grid(
    beta1: &[f64],
    tau_sq: f64,
    b02: f64,
    xs: &[f64],
    ys: &[f64],
) -> Result<Vec<DensityPoint>> {
    if beta1.len() != 2 {
        return Err(AopError::Config(format!(
            "conditional density surface needs a 2-vector, got length {}",
            beta1.len()
        )));
    }
    let gram = GramMatrix::identity(2);
    let h = build_h_matrix(2, 1)?;
    let prefix = [DVector::from_column_slice(beta1)];
    let cond = conditional_prior_params(&prefix, &gram, tau_sq, &h, b02)?;
    let prec = cond
        .cov
        .clone()
        .try_inverse()
        .ok_or_else(|| AopError::Numerical("singular conditional covariance".into()))?;
    let det = cond.cov.determinant();
    let norm = 1.0 / (2.0 * PI * det.sqrt());
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &x in xs {
        for &y in ys {
            let dx = x - cond.mean[0];
            let dy = y - cond.mean[1];
            let q = prec[(0, 0)] * dx * dx + 2.0 * prec[(0, 1)] * dx * dy + prec[(1, 1)] * dy * dy;
            out.push(DensityPoint {
                x,
                y,
                density: norm * (-0.5 * q).exp(),
            });
        }
    }
    Ok(out)
}
