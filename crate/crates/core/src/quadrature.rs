//! Gauss-Legendre quadrature rules.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
///
/// Roots are found by Newton iteration on the three-term recurrence, starting
/// from the Chebyshev-like guess `cos(pi (i - 1/4) / (n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: `panels` equal sub-intervals of [lo, hi], each with an
/// `order`-point Gauss-Legendre rule. Returns (points, weights).
pub fn composite_gauss_legendre(
    lo: f64,
    hi: f64,
    panels: usize,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(order);
    let width = (hi - lo) / panels as f64;
    let mut pts = Vec::with_capacity(panels * order);
    let mut wts = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let mid = a + 0.5 * width;
        for (x, w) in nodes.iter().zip(&weights) {
            pts.push(mid + 0.5 * width * x);
            wts.push(0.5 * width * w);
        }
    }
    (pts, wts)
}
