//! Random variate helpers shared by the prior and the sampler.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{AopError, Result};

/// Random stream used by every chain and generator in the crate.
pub type ChainRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; used to derive independent stream seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a sequence of words into one seed. Stable across platforms and releases.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x0005_EED0_FA0F_u64, |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| standard_normal(rng))
}

/// Draw from IG(shape, scale), i.e. the reciprocal of a Gamma(shape, rate = scale).
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / scale).expect("inverse-gamma parameters must be positive");
    loop {
        let g: f64 = gamma.sample(rng);
        if g > 0.0 {
            let v = 1.0 / g;
            if v.is_finite() {
                return v;
            }
        }
    }
}

/// Cholesky factor of a symmetric matrix; on failure adds `1e-10 * trace / n`
/// to the diagonal and retries once.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let n = m.nrows();
    let jitter = 1e-10 * m.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let mut j = m.clone();
    for i in 0..n {
        j[(i, i)] += jitter;
    }
    Cholesky::new(j)
}

/// Draw from `N(V^{-1} u, V^{-1})` given precision `V` and linear term `u`.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(precision)
        .ok_or_else(|| AopError::Numerical("precision matrix is not positive definite".into()))?;
    let mean = chol.solve(linear);
    let z = standard_normal_vector(rng, linear.len());
    // V = L L^T, so L^{-T} z has covariance V^{-1}.
    let lt = chol.l().transpose();
    let offset = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| AopError::Numerical("singular Cholesky factor".into()))?;
    Ok(mean + offset)
}

/// Draw from `N(mean, cov)`.
pub fn mvn_from_covariance<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(cov)
        .ok_or_else(|| AopError::Numerical("covariance matrix is not positive definite".into()))?;
    let z = standard_normal_vector(rng, mean.len());
    Ok(mean + chol.l() * z)
}
