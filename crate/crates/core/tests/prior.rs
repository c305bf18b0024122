use aop_fpca::basis::{build_basis, default_quadrature_points, BasisSpec, GramMatrix};
use aop_fpca::prior::{
    build_h_matrix, conditional_prior_params, conditional_trace_variance, log_joint_prior_density,
    sample_sequential_prior, second_level_density_grid, AopConfig, CoefficientSet,
    ConstraintMatrix,
};
use aop_fpca::random::{rng_from_seed, standard_normal_vector};
use aop_fpca::AopError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Direct two-dimensional normal log density.
fn mvn2_logpdf(x: [f64; 2], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (a, b, d) = (cov[1][1] / det, -cov[0][1] / det, cov[0][0] / det);
    let q = a * x[0] * x[0] + 2.0 * b * x[0] * x[1] + d * x[1] * x[1];
    -0.5 * q - (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln()
}

/// `Cov(beta_2 | beta_1)` for `L = 2`, `Omega = I`, `H = (0, 1)`, by hand.
fn hand_cov(beta1: [f64; 2], tau_sq: f64, gamma: f64) -> [[f64; 2]; 2] {
    // A = [[b0, b1], [0, 1]], A^{-1} = [[1/b0, -b1/b0], [0, 1]].
    let (p, q) = (beta1[0], beta1[1]);
    let inv = [[1.0 / p, -q / p], [0.0, 1.0]];
    let d = [tau_sq, gamma];
    let mut c = [[0.0; 2]; 2];
    for r in 0..2 {
        for s in 0..2 {
            c[r][s] = (0..2).map(|m| inv[r][m] * d[m] * inv[s][m]).sum();
        }
    }
    c
}

#[test]
fn second_level_covariance() {
    let h = build_h_matrix(2, 1).unwrap();
    let cond = conditional_prior_params(&[v(&[0.5, 1.0])], &GramMatrix::identity(2), 0.01, &h, 1.0)
        .unwrap();
    let want = DMatrix::from_row_slice(2, 2, &[4.04, -2.0, -2.0, 1.0]);
    assert!((&cond.cov - want).amax() < 1e-12, "{}", cond.cov);
    assert_eq!(cond.mean, DVector::zeros(2));
}

#[test]
fn zero_prefix_is_degenerate() {
    let h = build_h_matrix(2, 1).unwrap();
    let err = conditional_prior_params(&[v(&[0.0, 0.0])], &GramMatrix::identity(2), 0.01, &h, 1.0)
        .unwrap_err();
    assert!(
        matches!(err, AopError::DegenerateConstraint { level: 2, .. }),
        "{err}"
    );
    // beta_1 parallel to the H row leaves A rank deficient as well.
    let err = conditional_prior_params(&[v(&[0.0, 1.0])], &GramMatrix::identity(2), 0.01, &h, 1.0)
        .unwrap_err();
    assert!(matches!(err, AopError::DegenerateConstraint { .. }));
}

#[test]
fn constraint_matrix_checks_rows() {
    assert!(ConstraintMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).is_err());
    let s = 0.5f64.sqrt();
    assert!(ConstraintMatrix::new(DMatrix::from_row_slice(1, 2, &[s, s])).is_ok());
    assert!(build_h_matrix(3, 0).is_err());
    assert!(build_h_matrix(3, 3).is_err());
    assert_eq!(
        build_h_matrix(3, 1).unwrap().matrix(),
        &DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    );
}

#[test]
fn density_grid_integrates_on_a_wide_lattice() {
    let axis: Vec<f64> = (0..=600).map(|i| -15.0 + 30.0 * i as f64 / 600.0).collect();
    let cell = (axis[1] - axis[0]).powi(2);
    for (tau_sq, b02) in [(0.01, 1.0), (1.0, 1.0), (0.01, 2.0)] {
        let pts = second_level_density_grid(&[0.5, 1.0], tau_sq, b02, &axis, &axis).unwrap();
        let mass: f64 = pts.iter().map(|p| p.density).sum::<f64>() * cell;
        assert!((mass - 1.0).abs() < 0.02, "({tau_sq}, {b02}): {mass}");
    }
}

#[test]
fn density_grid_box_mass_matches_sampling() {
    // Mass inside [-3, 3]^2 of N(0, [[4.04, -2], [-2, 1]]) estimated by sampling
    // through a hand-computed Cholesky factor.
    let (l11, l21) = (4.04f64.sqrt(), -2.0 / 4.04f64.sqrt());
    let l22 = (1.0 - l21 * l21).sqrt();
    let mut rng = rng_from_seed(9);
    let n = 400_000;
    let inside = (0..n)
        .filter(|_| {
            let z = standard_normal_vector(&mut rng, 2);
            let (x, y) = (l11 * z[0], l21 * z[0] + l22 * z[1]);
            x.abs() <= 3.0 && y.abs() <= 3.0
        })
        .count() as f64
        / n as f64;
    let axis: Vec<f64> = (0..201).map(|i| -3.0 + 0.03 * i as f64).collect();
    let pts = second_level_density_grid(&[0.5, 1.0], 0.01, 1.0, &axis, &axis).unwrap();
    let mass: f64 = pts.iter().map(|p| p.density).sum::<f64>() * 0.03 * 0.03;
    assert!(
        (mass - inside).abs() < 0.02,
        "grid {mass} vs sampled {inside}"
    );
}

#[test]
fn density_grid_values_match_direct_formula() {
    let xs = [-1.0, 0.0, 0.7];
    let ys = [-0.5, 0.2];
    let pts = second_level_density_grid(&[0.5, 1.0], 0.3, 2.0, &xs, &ys).unwrap();
    let cov = hand_cov([0.5, 1.0], 0.3, 2.0);
    for p in pts {
        let want = mvn2_logpdf([p.x, p.y], cov).exp();
        assert!((p.density - want).abs() < 1e-12 * want.max(1.0));
    }
    assert!(second_level_density_grid(&[0.5], 0.3, 2.0, &xs, &ys).is_err());
}

#[test]
fn joint_density_matches_direct_normals() {
    let gram = GramMatrix::identity(2);
    let mut cfg = AopConfig::new(2, 2);
    cfg.gamma = 1.5;
    let mut rng = rng_from_seed(4);
    for _ in 0..50 {
        let b1 = standard_normal_vector(&mut rng, 2);
        let b2 = standard_normal_vector(&mut rng, 2);
        let tau_sq = 0.05 + b1[0].abs();
        let set = CoefficientSet::new(vec![b1.clone(), b2.clone()]).unwrap();
        let got = log_joint_prior_density(&set, &[tau_sq], &gram, &cfg).unwrap();
        let first = mvn2_logpdf([b1[0], b1[1]], [[1.5, 0.0], [0.0, 1.5]]);
        let second = mvn2_logpdf([b2[0], b2[1]], hand_cov([b1[0], b1[1]], tau_sq, 1.5));
        assert!(
            (got - first - second).abs() < 1e-9,
            "{got} vs {}",
            first + second
        );
    }
}

#[test]
fn joint_density_single_level() {
    let cfg = AopConfig::new(1, 3);
    let b = v(&[0.3, -1.0, 2.0]);
    let set = CoefficientSet::new(vec![b.clone()]).unwrap();
    let got = log_joint_prior_density(&set, &[], &GramMatrix::identity(3), &cfg).unwrap();
    let want = -0.5 * b.norm_squared() - 1.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn conditional_density_integrates_to_one() {
    // For fixed beta_1, exp(log joint - log p(beta_1)) integrates to one over beta_2.
    let gram = GramMatrix::identity(2);
    let cfg = AopConfig::new(2, 2);
    let axis: Vec<f64> = (0..=300).map(|i| -12.0 + 24.0 * i as f64 / 300.0).collect();
    let cell = (axis[1] - axis[0]).powi(2);
    for (b1, tau_sq) in [([1.0, 0.5], 0.2), ([-0.7, 1.2], 0.5), ([2.0, -1.0], 0.1)] {
        let first = mvn2_logpdf(b1, [[1.0, 0.0], [0.0, 1.0]]);
        let mut mass = 0.0;
        for &x in &axis {
            for &y in &axis {
                let set = CoefficientSet::new(vec![v(&b1), v(&[x, y])]).unwrap();
                mass +=
                    (log_joint_prior_density(&set, &[tau_sq], &gram, &cfg).unwrap() - first).exp();
            }
        }
        assert!((mass * cell - 1.0).abs() < 0.01, "{b1:?}: {}", mass * cell);
    }
}

#[test]
fn first_level_is_isotropic_normal() {
    let mut cfg = AopConfig::new(1, 3);
    cfg.gamma = 2.0;
    let gram = GramMatrix::identity(3);
    let n = 20_000;
    let mut s = DVector::zeros(3);
    let mut ss = DMatrix::zeros(3, 3);
    for seed in 0..n {
        let b = sample_sequential_prior(&cfg, &gram, &[], seed)
            .unwrap()
            .get(0)
            .clone();
        s += &b;
        ss += &b * b.transpose();
    }
    let m = s / n as f64;
    let c = ss / n as f64 - &m * m.transpose();
    assert!(m.amax() < 0.05);
    assert!((c - DMatrix::identity(3, 3) * 2.0).amax() < 0.1);
}

#[test]
fn sequential_prior_is_seeded() {
    let basis = build_basis(
        BasisSpec::cubic_bspline(8, 0.0, 1.0),
        default_quadrature_points(8),
    )
    .unwrap();
    let cfg = AopConfig::new(4, 8);
    let taus = [0.01; 3];
    let a = sample_sequential_prior(&cfg, basis.gram(), &taus, 5).unwrap();
    assert_eq!(
        a,
        sample_sequential_prior(&cfg, basis.gram(), &taus, 5).unwrap()
    );
    assert_ne!(
        a,
        sample_sequential_prior(&cfg, basis.gram(), &taus, 6).unwrap()
    );
    assert!(sample_sequential_prior(&cfg, basis.gram(), &[0.01; 2], 5).is_err());
}

/// Mean |beta_j^T Omega beta_k| over pairs j < k and prior draws.
fn mean_abs_inner(tau_sq: f64, draws: u64) -> f64 {
    let basis = build_basis(
        BasisSpec::cubic_bspline(10, 0.0, 1.0),
        default_quadrature_points(10),
    )
    .unwrap();
    let cfg = AopConfig::new(4, 10);
    let mut values = Vec::new();
    for seed in 0..draws {
        let set = sample_sequential_prior(&cfg, basis.gram(), &[tau_sq; 3], seed).unwrap();
        for j in 0..4 {
            for k in j + 1..4 {
                values.push((set.get(j).transpose() * basis.gram().matrix() * set.get(k))[0].abs());
            }
        }
    }
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

#[test]
fn small_tau_gives_near_orthogonal_draws() {
    // Each constrained inner product is N(0, tau^2): median |x| = 0.6745 tau.
    for tau_sq in [1e-6, 1e-4, 1e-2] {
        let median = mean_abs_inner(tau_sq, 2000);
        let want = 0.6745 * tau_sq.sqrt();
        assert!(
            (median / want - 1.0).abs() < 0.1,
            "tau^2={tau_sq}: median {median} vs {want}"
        );
    }
}

#[test]
fn inner_products_shrink_with_tau() {
    let medians: Vec<f64> = [1.0, 0.1, 0.01, 0.001]
        .iter()
        .map(|&t| mean_abs_inner(t, 500))
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

fn random_orthonormal_rows(seed: u64, rows: usize, l: usize) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let m = DMatrix::from_fn(l, l, |_, _| aop_fpca::random::standard_normal(&mut rng));
    m.qr().q().columns(0, rows).transpose()
}

#[test]
fn trace_formula_matches_covariance() {
    let gram = GramMatrix::identity(5);
    for seed in 0..30u64 {
        let mut rng = rng_from_seed(100 + seed);
        let j = 1 + (seed as usize % 4);
        let prefix: Vec<DVector<f64>> = (0..j)
            .map(|_| standard_normal_vector(&mut rng, 5))
            .collect();
        for h in [
            build_h_matrix(5, j).unwrap(),
            ConstraintMatrix::new(random_orthonormal_rows(seed, 5 - j, 5)).unwrap(),
        ] {
            let cond = conditional_prior_params(&prefix, &gram, 0.3, &h, 2.0).unwrap();
            let closed = conditional_trace_variance(&prefix, 0.3, 2.0, &h, &gram).unwrap();
            assert!((closed - cond.cov.trace()).abs() < 1e-8 * cond.cov.trace().max(1.0));
        }
    }
}

#[test]
fn trace_formula_needs_identity_gram() {
    let basis = build_basis(BasisSpec::cubic_bspline(6, 0.0, 1.0), 60).unwrap();
    let h = build_h_matrix(6, 1).unwrap();
    let err =
        conditional_trace_variance(&[DVector::from_element(6, 1.0)], 0.1, 1.0, &h, basis.gram())
            .unwrap_err();
    assert!(matches!(err, AopError::Precondition(_)));
}

#[test]
fn trace_with_coordinate_prefix() {
    // Prefix e_1..e_j is already orthogonal to the rows of H_{j+1}, so the
    // covariance is diag(tau^2 I_j, gamma I_{L-j}).
    let l = 6;
    let gram = GramMatrix::identity(l);
    for j in 1..l {
        let prefix: Vec<DVector<f64>> = (0..j)
            .map(|r| DVector::from_fn(l, |i, _| if i == r { 1.0 } else { 0.0 }))
            .collect();
        let h = build_h_matrix(l, j).unwrap();
        let tr = conditional_trace_variance(&prefix, 0.04, 1.5, &h, &gram).unwrap();
        let want = 0.04 * j as f64 + 1.5 * (l - j) as f64;
        assert!((tr - want).abs() < 1e-12, "j={j}: {tr} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_symmetric_psd(
        b in prop::collection::vec(-2.0f64..2.0, 8),
        tau_sq in 0.001f64..2.0,
        gamma in 0.1f64..5.0,
    ) {
        let gram = GramMatrix::identity(4);
        let prefix = [v(&b[..4]), v(&b[4..])];
        let h = build_h_matrix(4, 2).unwrap();
        if let Ok(cond) = conditional_prior_params(&prefix, &gram, tau_sq, &h, gamma) {
            prop_assert_eq!(&cond.cov, &cond.cov.transpose());
            let eig = cond.cov.clone().symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e >= -1e-9 * cond.cov.norm()));
            // A cov A^T = blockdiag(tau^2 I, gamma I).
            let d = &cond.stacked * &cond.cov * cond.stacked.transpose();
            let want = DMatrix::from_diagonal(&v(&[tau_sq, tau_sq, gamma, gamma]));
            prop_assert!((d - want).amax() < 1e-6 * (1.0 + tau_sq + gamma));
        }
    }
}
