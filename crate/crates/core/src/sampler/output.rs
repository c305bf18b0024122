//! Post-processing of a chain: relabeling, posterior summaries and the
//! on-disk output formats (`summary.json`, `functions.csv`, `draws.bin`).
//!
//! `draws.bin` is little-endian:
//!
//! ```text
//! magic       8 bytes   "AOPDRAW1"
//! version     u32       1
//! tau_len     u32       stored tau^2 values per draw
//! K, L, n     u64 x 3
//! draws       u64
//! per draw    K*L f64 (beta rows), K f64 lambda, tau_len f64 tau^2,
//!             f64 sigma^2, f64 log joint
//! scores      n*K f64, posterior mean of Z, row-major
//! ```
//!
//! Components are written after relabeling and sign normalization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Draw, PosteriorDraws, PriorFamily};
use crate::basis::{bilinear, BasisSystem};
use crate::error::{AopError, Result};
use crate::metrics::{metric_report, MetricReport};
use crate::prior::CoefficientSet;

pub const DRAWS_MAGIC: &[u8; 8] = b"AOPDRAW1";
const DRAWS_VERSION: u32 = 1;

/// Posterior mean of one principal function with a pointwise 95% band.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionBand {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub family: PriorFamily,
    /// `order[new] = original component index`.
    pub order: Vec<usize>,
    pub signs: Vec<f64>,
    pub beta_mean: CoefficientSet,
    pub lambda_mean: Vec<f64>,
    pub tau_sq_mean: Vec<f64>,
    pub sigma_sq_mean: f64,
    pub score_mean: DMatrix<f64>,
    pub metrics: MetricReport,
    /// Draws in the relabeled, sign-normalized frame.
    pub draws: Vec<Draw>,
    pub n: usize,
}

fn mean_of<'a>(it: impl Iterator<Item = &'a f64>, count: usize) -> f64 {
    it.sum::<f64>() / count as f64
}

impl PosteriorSummary {
    /// Orders components by decreasing posterior-mean norm and flips each so
    /// that `f_k(midpoint) >= 0` (on a tie, the first nonzero coefficient is positive).
    pub fn new(post: &PosteriorDraws, basis: &BasisSystem, epsilon: f64) -> Result<Self> {
        let count = post.draws.len();
        if count == 0 {
            return Err(AopError::Config("chain stored no draws".into()));
        }
        let (k, l) = (post.k, post.l);
        let raw_mean: Vec<DVector<f64>> = (0..k)
            .map(|c| {
                post.draws
                    .iter()
                    .fold(DVector::zeros(l), |acc, d| acc + &d.betas[c])
                    / count as f64
            })
            .collect();
        let gram = basis.gram();
        let norms: Vec<f64> = raw_mean
            .iter()
            .map(|b| bilinear(b, gram.matrix(), b))
            .collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        let (lo, hi) = basis.domain();
        let phi_mid = basis.evaluate(0.5 * (lo + hi))?;
        let signs: Vec<f64> = order
            .iter()
            .map(|&c| {
                let mid = raw_mean[c].dot(&phi_mid);
                if mid > 0.0 {
                    1.0
                } else if mid < 0.0 {
                    -1.0
                } else {
                    match raw_mean[c].iter().find(|v| **v != 0.0) {
                        Some(v) if *v < 0.0 => -1.0,
                        _ => 1.0,
                    }
                }
            })
            .collect();
        let draws: Vec<Draw> = post
            .draws
            .iter()
            .map(|d| Draw {
                betas: order
                    .iter()
                    .zip(&signs)
                    .map(|(&c, s)| &d.betas[c] * *s)
                    .collect(),
                lambdas: order.iter().map(|&c| d.lambdas[c]).collect(),
                tau_sqs: d.tau_sqs.clone(),
                sigma_sq: d.sigma_sq,
                log_joint: d.log_joint,
            })
            .collect();
        let beta_mean = CoefficientSet::new(
            order
                .iter()
                .zip(&signs)
                .map(|(&c, s)| &raw_mean[c] * *s)
                .collect(),
        )?;
        let score_mean =
            DMatrix::from_fn(post.n, k, |i, c| post.score_mean[(i, order[c])] * signs[c]);
        let tau_len = draws[0].tau_sqs.len();
        let metrics = metric_report(&beta_mean, gram, epsilon);
        Ok(PosteriorSummary {
            family: post.family,
            lambda_mean: (0..k)
                .map(|c| mean_of(draws.iter().map(|d| &d.lambdas[c]), count))
                .collect(),
            tau_sq_mean: (0..tau_len)
                .map(|c| mean_of(draws.iter().map(|d| &d.tau_sqs[c]), count))
                .collect(),
            sigma_sq_mean: mean_of(draws.iter().map(|d| &d.sigma_sq), count),
            order,
            signs,
            beta_mean,
            score_mean,
            metrics,
            draws,
            n: post.n,
        })
    }

    pub fn k(&self) -> usize {
        self.beta_mean.k()
    }

    pub fn l(&self) -> usize {
        self.beta_mean.l()
    }

    /// Posterior-mean functions and 2.5% / 97.5% pointwise quantiles on an
    /// equally spaced grid of `points` values.
    pub fn function_bands(&self, basis: &BasisSystem, points: usize) -> Result<Vec<FunctionBand>> {
        let (lo, hi) = basis.domain();
        let points = points.max(2);
        let grid: Vec<f64> = (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect();
        let phis = grid
            .iter()
            .map(|&t| basis.evaluate(t))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.k());
        let mut vals = vec![0.0; self.draws.len()];
        for c in 0..self.k() {
            let mut band = FunctionBand {
                t: grid.clone(),
                mean: Vec::with_capacity(points),
                lower: Vec::with_capacity(points),
                upper: Vec::with_capacity(points),
            };
            for phi in &phis {
                band.mean.push(self.beta_mean.get(c).dot(phi));
                for (v, d) in vals.iter_mut().zip(&self.draws) {
                    *v = d.betas[c].dot(phi);
                }
                vals.sort_by(f64::total_cmp);
                band.lower.push(quantile_sorted(&vals, 0.025));
                band.upper.push(quantile_sorted(&vals, 0.975));
            }
            out.push(band);
        }
        Ok(out)
    }

    /// Long-format CSV: `t,k,mean,lower,upper`.
    pub fn functions_csv(&self, basis: &BasisSystem, points: usize) -> Result<String> {
        let bands = self.function_bands(basis, points)?;
        let mut s = String::from("t,k,mean,lower,upper\n");
        for (c, b) in bands.iter().enumerate() {
            for i in 0..b.t.len() {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    b.t[i],
                    c + 1,
                    b.mean[i],
                    b.lower[i],
                    b.upper[i]
                ));
            }
        }
        Ok(s)
    }

    pub fn summary_json(&self, config: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "prior": self.family.label(),
            "K": self.k(),
            "L": self.l(),
            "n": self.n,
            "draws": self.draws.len(),
            "epsilon": self.metrics.epsilon,
            "nc": self.metrics.nc,
            "og": self.metrics.og,
            "norms": self.metrics.norms,
            "ip_matrix": (0..self.k()).map(|r| self.metrics.ip_matrix.row(r).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "beta_mean": self.beta_mean.betas().iter().map(|b| b.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "lambda_mean": self.lambda_mean,
            "tau_sq_mean": self.tau_sq_mean,
            "sigma_sq_mean": self.sigma_sq_mean,
            "component_order": self.order.iter().map(|c| c + 1).collect::<Vec<_>>(),
            "component_signs": self.signs,
            "config": config,
        })
    }

    pub fn write_draws_bin<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let tau_len = self.draws.first().map_or(0, |d| d.tau_sqs.len());
        w.write_all(DRAWS_MAGIC)?;
        w.write_all(&DRAWS_VERSION.to_le_bytes())?;
        w.write_all(&(tau_len as u32).to_le_bytes())?;
        for v in [self.k(), self.l(), self.n, self.draws.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let mut put = |x: f64| w.write_all(&x.to_le_bytes());
        for d in &self.draws {
            for b in &d.betas {
                for x in b.iter() {
                    put(*x)?;
                }
            }
            for x in d.lambdas.iter().chain(&d.tau_sqs) {
                put(*x)?;
            }
            put(d.sigma_sq)?;
            put(d.log_joint)?;
        }
        for i in 0..self.n {
            for c in 0..self.k() {
                put(self.score_mean[(i, c)])?;
            }
        }
        Ok(())
    }

    /// Writes `summary.json`, `functions.csv`, `ip_matrix.csv` and `draws.bin`.
    pub fn write_dir(
        &self,
        dir: &Path,
        basis: &BasisSystem,
        config: serde_json::Value,
    ) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| AopError::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| AopError::io(p, e))
        };
        let json =
            serde_json::to_string_pretty(&self.summary_json(config)).expect("summary serializes");
        write("summary.json", json.as_bytes())?;
        write("functions.csv", self.functions_csv(basis, 101)?.as_bytes())?;
        write("ip_matrix.csv", self.metrics.ip_matrix_csv().as_bytes())?;
        let p = dir.join("draws.bin");
        let f = std::fs::File::create(&p).map_err(|e| AopError::io(&p, e))?;
        let mut bw = std::io::BufWriter::new(f);
        self.write_draws_bin(&mut bw)
            .map_err(|e| AopError::io(&p, e))?;
        bw.flush().map_err(|e| AopError::io(&p, e))?;
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Contents of a `draws.bin` file.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsFile {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub draws: Vec<Draw>,
    pub score_mean: DMatrix<f64>,
}

pub fn read_draws_bin<R: Read>(mut r: R) -> Result<DrawsFile> {
    let bad = |m: &str| AopError::Data(format!("draws.bin: {m}"));
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| bad(&e.to_string()))?;
    if buf.len() < 48 || &buf[..8] != DRAWS_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap()) as usize;
    if u32_at(8) != DRAWS_VERSION {
        return Err(bad("unsupported version"));
    }
    let tau_len = u32_at(12) as usize;
    let (k, l, n, count) = (u64_at(16), u64_at(24), u64_at(32), u64_at(40));
    let per_draw = k * l + k + tau_len + 2;
    let expected = 48 + 8 * (count * per_draw + n * k);
    if buf.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes, found {}",
            buf.len()
        )));
    }
    let mut vals = buf[48..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |m: usize| (&mut vals).take(m).collect::<Vec<f64>>();
    let mut draws = Vec::with_capacity(count);
    for _ in 0..count {
        let betas = (0..k).map(|_| DVector::from_vec(take(l))).collect();
        let lambdas = take(k);
        let tau_sqs = take(tau_len);
        let tail = take(2);
        draws.push(Draw {
            betas,
            lambdas,
            tau_sqs,
            sigma_sq: tail[0],
            log_joint: tail[1],
        });
    }
    let score_mean = DMatrix::from_row_slice(n, k, &take(n * k));
    Ok(DrawsFile {
        k,
        l,
        n,
        draws,
        score_mean,
    })
}
