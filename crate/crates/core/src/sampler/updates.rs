//! Full-conditional draws for each block of the FPCA model.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{GibbsState, Model, PriorFamily};
use crate::basis::bilinear;
use crate::error::Result;
use crate::random::{inverse_gamma, mvn_from_precision, standard_normal, ChainRng};

fn add_scaled(dst: &mut DMatrix<f64>, w: f64, src: &DMatrix<f64>) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += w * s;
    }
}

/// Prior precision of `beta_k` under the model's coefficient prior, holding
/// every other coefficient vector fixed.
pub(crate) fn prior_precision(state: &GibbsState, model: &Model, k: usize) -> DMatrix<f64> {
    let l = model.l;
    let gamma = model.hyper.gamma;
    let mut prec = DMatrix::zeros(l, l);
    match model.family {
        PriorFamily::No => prec.fill_diagonal(1.0 / gamma),
        PriorFamily::NoS => {
            let hs = state
                .horseshoe
                .as_ref()
                .expect("NO-S state carries horseshoe scales");
            for c in 0..l {
                prec[(c, c)] = 1.0 / (hs.global * hs.locals[k][c]);
            }
        }
        PriorFamily::AopG | PriorFamily::AopL | PriorFamily::AopFixed => {
            // H_k^T H_k / gamma with H_k the last L - k rows of I_L (H_1 = I_L).
            for c in k..l {
                prec[(c, c)] = 1.0 / gamma;
            }
            for (j, beta_j) in state.betas.iter().enumerate() {
                if j == k {
                    continue;
                }
                let tau = if j < k {
                    state.tau_for(k)
                } else {
                    state.tau_for(j)
                };
                let w = model.gram.matrix() * beta_j;
                prec.ger(1.0 / tau, &w, &w, 1.0);
            }
        }
    }
    prec
}

/// Draw `beta_k ~ N(V_k^{-1} U_k, V_k^{-1})`.
pub fn update_beta(
    state: &GibbsState,
    model: &Model,
    k: usize,
    rng: &mut ChainRng,
) -> Result<DVector<f64>> {
    let l = model.l;
    let mut prec = prior_precision(state, model, k);
    // Zero prior mean in every family.
    let mut linear = DVector::zeros(l);
    let inv_s2 = 1.0 / state.sigma_sq;
    let mut others = DVector::zeros(l);
    for (i, curve) in model.curves.iter().enumerate() {
        let z = state.scores[(i, k)];
        if z == 0.0 {
            continue;
        }
        add_scaled(&mut prec, z * z * inv_s2, &curve.cross);
        others.fill(0.0);
        for (m, beta_m) in state.betas.iter().enumerate() {
            if m != k {
                others.axpy(state.scores[(i, m)], beta_m, 1.0);
            }
        }
        // Phi_i^T (X_i - sum_{m != k} Z_im F_im)
        linear.axpy(z * inv_s2, &curve.proj, 1.0);
        linear.gemv(-z * inv_s2, &curve.cross, &others, 1.0);
    }
    mvn_from_precision(rng, &prec, &linear)
}

/// Draw every `Z_ik ~ N(mu*, v*)`, sweeping `k = 1..K` within each curve.
pub fn update_scores(state: &GibbsState, model: &Model, rng: &mut ChainRng) -> DMatrix<f64> {
    let (k, l) = (model.k, model.l);
    let bmat = DMatrix::from_columns(&state.betas);
    let mut scores = state.scores.clone();
    let mut tmp = DMatrix::zeros(l, k);
    let mut ff = DMatrix::zeros(k, k);
    let mut fx = DVector::zeros(k);
    let inv_s2 = 1.0 / state.sigma_sq;
    for (i, curve) in model.curves.iter().enumerate() {
        // ff = F_i^T F_i and fx = F_i^T X_i with F_i = Phi_i B.
        tmp.gemm(1.0, &curve.cross, &bmat, 0.0);
        ff.gemm_tr(1.0, &bmat, &tmp, 0.0);
        fx.gemv_tr(1.0, &bmat, &curve.proj, 0.0);
        for c in 0..k {
            let mut r = fx[c];
            for m in 0..k {
                if m != c {
                    r -= ff[(c, m)] * scores[(i, m)];
                }
            }
            let v = 1.0 / (ff[(c, c)] * inv_s2 + 1.0 / state.lambdas[c]);
            let mu = v * r * inv_s2;
            scores[(i, c)] = mu + v.sqrt() * standard_normal(rng);
        }
    }
    scores
}

/// Draw `lambda_k ~ IG(a_lambda + n/2, b_lambda + sum_i Z_ik^2 / 2)`.
pub fn update_lambda<R: Rng + ?Sized>(state: &GibbsState, model: &Model, rng: &mut R) -> Vec<f64> {
    let n = state.scores.nrows() as f64;
    (0..model.k)
        .map(|c| {
            let ss = state.scores.column(c).norm_squared();
            inverse_gamma(
                rng,
                model.hyper.a_lambda + 0.5 * n,
                model.hyper.b_lambda + 0.5 * ss,
            )
        })
        .collect()
}

/// Sum over `j < k` of `(beta_j^T Omega beta_k)^2`.
fn constraint_ss(state: &GibbsState, model: &Model, k: usize) -> f64 {
    let g = model.gram.matrix();
    (0..k)
        .map(|j| bilinear(&state.betas[j], g, &state.betas[k]).powi(2))
        .sum()
}

/// Local: `tau_k^2 ~ IG(a0 + (k-1)/2, b0 + sum_{j<k} (beta_j^T Omega beta_k)^2 / 2)`
/// for `k = 2..K`. Global: one draw pooling all `K (K - 1) / 2` constrained pairs.
/// Fixed and non-AOP families return the current values.
pub fn update_tau<R: Rng + ?Sized>(state: &GibbsState, model: &Model, rng: &mut R) -> Vec<f64> {
    let (a0, b0) = (model.hyper.a0, model.b0);
    match model.family {
        PriorFamily::AopL => (1..model.k)
            .map(|k| {
                inverse_gamma(
                    rng,
                    a0 + 0.5 * k as f64,
                    b0 + 0.5 * constraint_ss(state, model, k),
                )
            })
            .collect(),
        PriorFamily::AopG => {
            let kk = model.k as f64;
            let ss: f64 = (1..model.k).map(|k| constraint_ss(state, model, k)).sum();
            vec![inverse_gamma(
                rng,
                a0 + kk * (kk - 1.0) / 4.0,
                b0 + 0.5 * ss,
            )]
        }
        _ => state.tau_sqs.clone(),
    }
}

pub(crate) fn residual_sum_squares(state: &GibbsState, model: &Model) -> f64 {
    let bmat = DMatrix::from_columns(&state.betas);
    let mut coef = DVector::zeros(model.l);
    let mut fitted = DVector::zeros(0);
    let mut rss = 0.0;
    for (i, curve) in model.curves.iter().enumerate() {
        coef.gemv(1.0, &bmat, &state.scores.row(i).transpose(), 0.0);
        fitted.resize_vertically_mut(curve.values.len(), 0.0);
        fitted.gemv(1.0, &curve.design, &coef, 0.0);
        rss += curve
            .values
            .iter()
            .zip(fitted.iter())
            .map(|(x, f)| (x - f).powi(2))
            .sum::<f64>();
    }
    rss
}

/// Draw `sigma^2 ~ IG(a_sigma + sum m_i / 2, b_sigma + RSS / 2)`.
pub fn update_sigma<R: Rng + ?Sized>(state: &GibbsState, model: &Model, rng: &mut R) -> f64 {
    let rss = residual_sum_squares(state, model);
    inverse_gamma(
        rng,
        model.hyper.a_sigma + 0.5 * model.total_points as f64,
        model.hyper.b_sigma + 0.5 * rss,
    )
}

/// Local horseshoe scales of component `k`:
/// `s_kl ~ IG(1, 1/nu_kl + beta_kl^2 / (2 g))`, then `nu_kl ~ IG(1, 1 + 1/s_kl)`.
pub fn update_horseshoe_local<R: Rng + ?Sized>(state: &mut GibbsState, k: usize, rng: &mut R) {
    let beta = &state.betas[k];
    let hs = state
        .horseshoe
        .as_mut()
        .expect("NO-S state carries horseshoe scales");
    for c in 0..beta.len() {
        let s = inverse_gamma(
            rng,
            1.0,
            1.0 / hs.local_aux[k][c] + 0.5 * beta[c] * beta[c] / hs.global,
        );
        hs.locals[k][c] = s;
        hs.local_aux[k][c] = inverse_gamma(rng, 1.0, 1.0 + 1.0 / s);
    }
}

/// Global horseshoe scale shared by all coefficients:
/// `g ~ IG((KL + 1)/2, 1/xi + sum beta^2 / (2 s))`, then `xi ~ IG(1, 1 + 1/g)`.
pub fn update_horseshoe_global<R: Rng + ?Sized>(state: &mut GibbsState, rng: &mut R) {
    let hs = state
        .horseshoe
        .as_mut()
        .expect("NO-S state carries horseshoe scales");
    let mut ss = 0.0;
    let mut count = 0usize;
    for (beta, locals) in state.betas.iter().zip(&hs.locals) {
        for (b, s) in beta.iter().zip(locals.iter()) {
            ss += b * b / s;
            count += 1;
        }
    }
    let g = inverse_gamma(
        rng,
        0.5 * (count as f64 + 1.0),
        1.0 / hs.global_aux + 0.5 * ss,
    );
    hs.global = g;
    hs.global_aux = inverse_gamma(rng, 1.0, 1.0 + 1.0 / g);
}

/// One coefficient drawn from the horseshoe prior through the same auxiliary
/// representation the sampler conditions on.
pub fn forward_horseshoe_coefficient<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let xi = inverse_gamma(rng, 0.5, 1.0);
    let global = inverse_gamma(rng, 0.5, 1.0 / xi);
    let nu = inverse_gamma(rng, 0.5, 1.0);
    let local = inverse_gamma(rng, 0.5, 1.0 / nu);
    (global * local).sqrt() * standard_normal(rng)
}

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * x * x / var
}

/// Log inverse-gamma kernel, without the `a ln b - ln Gamma(a)` constant.
fn ln_ig_kernel(x: f64, a: f64, b: f64) -> f64 {
    -(a + 1.0) * x.ln() - b / x
}

/// Log of likelihood times priors targeted by the sampler, up to an additive
/// constant. For AOP families the coefficient prior is the product-form
/// kernel whose full conditionals the sampler draws from.
pub fn log_joint_density(state: &GibbsState, model: &Model) -> f64 {
    let h = &model.hyper;
    let rss = residual_sum_squares(state, model);
    let n_obs = model.total_points as f64;
    let mut lp = -0.5 * n_obs * (2.0 * PI * state.sigma_sq).ln() - 0.5 * rss / state.sigma_sq;
    for c in 0..model.k {
        let lam = state.lambdas[c];
        lp += state
            .scores
            .column(c)
            .iter()
            .map(|z| ln_normal(*z, lam))
            .sum::<f64>();
        lp += ln_ig_kernel(lam, h.a_lambda, h.b_lambda);
    }
    lp += ln_ig_kernel(state.sigma_sq, h.a_sigma, h.b_sigma);
    match model.family {
        PriorFamily::No => {
            for beta in &state.betas {
                lp += beta.iter().map(|b| ln_normal(*b, h.gamma)).sum::<f64>();
            }
        }
        PriorFamily::NoS => {
            let hs = state
                .horseshoe
                .as_ref()
                .expect("NO-S state carries horseshoe scales");
            for (k, beta) in state.betas.iter().enumerate() {
                for c in 0..model.l {
                    let s = hs.locals[k][c];
                    let nu = hs.local_aux[k][c];
                    lp += ln_normal(beta[c], hs.global * s);
                    lp +=
                        ln_ig_kernel(s, 0.5, 1.0 / nu) - 0.5 * nu.ln() + ln_ig_kernel(nu, 0.5, 1.0);
                }
            }
            let xi = hs.global_aux;
            lp +=
                ln_ig_kernel(hs.global, 0.5, 1.0 / xi) - 0.5 * xi.ln() + ln_ig_kernel(xi, 0.5, 1.0);
        }
        PriorFamily::AopG | PriorFamily::AopL | PriorFamily::AopFixed => {
            let g = model.gram.matrix();
            for (k, beta) in state.betas.iter().enumerate() {
                for c in k..model.l {
                    lp += ln_normal(beta[c], h.gamma);
                }
                if k > 0 {
                    let tau = state.tau_for(k);
                    for j in 0..k {
                        lp += ln_normal(bilinear(&state.betas[j], g, beta), tau);
                    }
                }
            }
            if model.family != PriorFamily::AopFixed {
                for tau in &state.tau_sqs {
                    lp += ln_ig_kernel(*tau, h.a0, model.b0);
                }
            }
        }
    }
    lp
}
