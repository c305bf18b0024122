//! Basis function systems and their Gram matrices.
//!
//! A function is represented as `f(t) = beta^T Phi(t)` where `Phi` stacks the
//! `L` basis functions. Inner products between such functions reduce to the
//! bilinear form `beta_j^T Omega beta_k` with `Omega = int Phi Phi^T dt`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AopError, Result};
use crate::quadrature::composite_gauss_legendre;

const CUBIC: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// Constant intercept followed by `L - 1` cubic B-splines.
    CubicBsplineIntercept,
    /// Normalized Legendre polynomials; the Gram matrix is exactly the identity.
    OrthonormalTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub size: usize,
    pub lo: f64,
    pub hi: f64,
}

impl BasisSpec {
    pub fn cubic_bspline(size: usize, lo: f64, hi: f64) -> Self {
        BasisSpec {
            kind: BasisKind::CubicBsplineIntercept,
            size,
            lo,
            hi,
        }
    }

    pub fn orthonormal(size: usize, lo: f64, hi: f64) -> Self {
        BasisSpec {
            kind: BasisKind::OrthonormalTest,
            size,
            lo,
            hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(AopError::Config(format!(
                "degenerate basis domain [{}, {}]",
                self.lo, self.hi
            )));
        }
        let min = match self.kind {
            BasisKind::CubicBsplineIntercept => CUBIC + 2,
            BasisKind::OrthonormalTest => 1,
        };
        if self.size < min {
            return Err(AopError::Config(format!(
                "{:?} basis needs at least {min} functions, got {}",
                self.kind, self.size
            )));
        }
        Ok(())
    }
}

/// Symmetric positive semi-definite Gram matrix of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wraps a matrix after symmetrizing it as `(M + M^T) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(AopError::Dimension {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(GramMatrix(sym))
    }

    pub fn identity(size: usize) -> Self {
        GramMatrix(DMatrix::identity(size, size))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0 == DMatrix::identity(self.dim(), self.dim())
    }
}

/// An evaluator for `L` basis functions on `[lo, hi]` together with its Gram matrix.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    spec: BasisSpec,
    knots: Vec<f64>,
    gram: GramMatrix,
}

/// Default number of quadrature points used for the Gram matrix, `10 L`.
pub fn default_quadrature_points(size: usize) -> usize {
    10 * size
}

pub fn build_basis(spec: BasisSpec, quadrature_points: usize) -> Result<BasisSystem> {
    spec.validate()?;
    if quadrature_points < 2 * spec.size {
        return Err(AopError::Config(format!(
            "need at least {} quadrature points, got {quadrature_points}",
            2 * spec.size
        )));
    }
    let knots = match spec.kind {
        BasisKind::CubicBsplineIntercept => clamped_uniform_knots(spec.size - 1, spec.lo, spec.hi),
        BasisKind::OrthonormalTest => Vec::new(),
    };
    let mut system = BasisSystem {
        spec,
        knots,
        gram: GramMatrix::identity(spec.size),
    };
    if spec.kind == BasisKind::CubicBsplineIntercept {
        system.gram = system.quadrature_gram(quadrature_points)?;
    }
    Ok(system)
}

/// Clamped knot vector for `count` cubic B-splines with equally spaced internal knots.
fn clamped_uniform_knots(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let internal = count - (CUBIC + 1);
    let intervals = internal + 1;
    let mut knots = vec![lo; CUBIC + 1];
    for i in 1..=internal {
        knots.push(lo + (hi - lo) * i as f64 / intervals as f64);
    }
    knots.extend(std::iter::repeat_n(hi, CUBIC + 1));
    knots
}

impl BasisSystem {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.spec.lo, self.spec.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Values `phi_1(t) .. phi_L(t)`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(AopError::Domain { t, lo, hi });
        }
        let mut out = DVector::zeros(self.size());
        match self.spec.kind {
            BasisKind::CubicBsplineIntercept => {
                out[0] = 1.0;
                let (span, vals) = self.nonzero_splines(t);
                for (r, v) in vals.iter().enumerate() {
                    out[1 + span - CUBIC + r] = *v;
                }
            }
            BasisKind::OrthonormalTest => {
                let width = hi - lo;
                let x = 2.0 * (t - lo) / width - 1.0;
                let (mut p0, mut p1) = (1.0, x);
                for l in 0..self.size() {
                    let p = match l {
                        0 => p0,
                        1 => p1,
                        _ => {
                            let kf = l as f64;
                            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                            p0 = p1;
                            p1 = p2;
                            p2
                        }
                    };
                    out[l] = p * ((2 * l + 1) as f64 / width).sqrt();
                }
            }
        }
        Ok(out)
    }

    /// `m x L` matrix whose rows are `Phi(t_j)^T`.
    pub fn design_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(times.len(), self.size());
        for (r, &t) in times.iter().enumerate() {
            let row = self.evaluate(t)?;
            m.row_mut(r).copy_from(&row.transpose());
        }
        Ok(m)
    }

    /// Knot span index `s` with `knots[s] <= t < knots[s+1]` and the four
    /// nonzero cubic B-spline values `N_{s-3..=s}(t)` (de Boor triangle).
    fn nonzero_splines(&self, t: f64) -> (usize, [f64; CUBIC + 1]) {
        let k = &self.knots;
        let n_splines = self.size() - 1;
        // Right endpoint belongs to the last nonempty interval.
        let span = if t >= k[n_splines] {
            n_splines - 1
        } else {
            let mut s = CUBIC;
            while t >= k[s + 1] {
                s += 1;
            }
            s
        };
        let mut n = [0.0; CUBIC + 1];
        let mut left = [0.0; CUBIC + 1];
        let mut right = [0.0; CUBIC + 1];
        n[0] = 1.0;
        for j in 1..=CUBIC {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        (span, n)
    }

    fn quadrature_gram(&self, quadrature_points: usize) -> Result<GramMatrix> {
        let panels = (self.knots.len() - 2 * (CUBIC + 1) + 1).max(1);
        let order = quadrature_points.div_ceil(panels);
        let (pts, wts) = composite_gauss_legendre(self.spec.lo, self.spec.hi, panels, order);
        let l = self.size();
        let mut acc = DMatrix::zeros(l, l);
        for (t, w) in pts.iter().zip(&wts) {
            let phi = self.evaluate(*t)?;
            acc.ger(*w, &phi, &phi, 1.0);
        }
        GramMatrix::new(acc)
    }
}

fn check_len(v: &DVector<f64>, gram: &GramMatrix) -> Result<()> {
    if v.len() != gram.dim() {
        return Err(AopError::Dimension {
            expected: gram.dim(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `beta_j^T Omega beta_k`, the function-space inner product of two expansions.
pub fn inner_product(
    beta_j: &DVector<f64>,
    beta_k: &DVector<f64>,
    gram: &GramMatrix,
) -> Result<f64> {
    check_len(beta_j, gram)?;
    check_len(beta_k, gram)?;
    Ok(bilinear(beta_j, gram.matrix(), beta_k))
}

/// Squared `L2` norm of `beta^T Phi`; tiny negative rounding is clamped to zero.
pub fn function_norm_sq(beta: &DVector<f64>, gram: &GramMatrix) -> Result<f64> {
    let v = inner_product(beta, beta, gram)?;
    if v < 0.0 && v > -1e-10 {
        return Ok(0.0);
    }
    Ok(v)
}

pub(crate) fn bilinear(a: &DVector<f64>, m: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let l = a.len();
    let mut s = 0.0;
    for c in 0..l {
        let mut col = 0.0;
        for r in 0..l {
            col += a[r] * m[(r, c)];
        }
        s += col * b[c];
    }
    s
}
