//! Effective component count (NC) and orthogonality measure (OG) of a set
//! of estimated principal functions.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::basis::{bilinear, GramMatrix};
use crate::prior::CoefficientSet;

/// Default variation threshold for counting a component.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub nc: usize,
    pub og: f64,
    pub epsilon: f64,
    #[serde(serialize_with = "serialize_matrix")]
    pub ip_matrix: DMatrix<f64>,
    pub norms: Vec<f64>,
}

fn serialize_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Entry `(j, k)` is `beta_j^T Omega beta_k`.
pub fn inner_product_matrix(coefs: &CoefficientSet, gram: &GramMatrix) -> DMatrix<f64> {
    let k = coefs.k();
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = bilinear(coefs.get(a), gram.matrix(), coefs.get(b));
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Number of components with squared norm strictly above `epsilon`.
pub fn effective_components(coefs: &CoefficientSet, gram: &GramMatrix, epsilon: f64) -> usize {
    coefs
        .betas()
        .iter()
        .filter(|b| bilinear(b, gram.matrix(), b) > epsilon)
        .count()
}

/// Sum of `|<f_j, f_k>|` over unordered pairs `j < k`.
pub fn orthogonality_measure(coefs: &CoefficientSet, gram: &GramMatrix) -> f64 {
    og_from_matrix(&inner_product_matrix(coefs, gram))
}

fn og_from_matrix(ip: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for k in 1..ip.nrows() {
        for j in 0..k {
            s += ip[(j, k)].abs();
        }
    }
    s
}

pub fn metric_report(coefs: &CoefficientSet, gram: &GramMatrix, epsilon: f64) -> MetricReport {
    let ip = inner_product_matrix(coefs, gram);
    let norms: Vec<f64> = ip.diagonal().iter().map(|v| v.max(0.0)).collect();
    MetricReport {
        nc: norms.iter().filter(|&&v| v > epsilon).count(),
        og: og_from_matrix(&ip),
        epsilon,
        ip_matrix: ip,
        norms,
    }
}

impl MetricReport {
    /// Inner-product matrix as CSV with `k1..kK` header.
    pub fn ip_matrix_csv(&self) -> String {
        let k = self.ip_matrix.nrows();
        let mut out = (1..=k)
            .map(|i| format!("k{i}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for r in 0..k {
            let row: Vec<String> = self
                .ip_matrix
                .row(r)
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
