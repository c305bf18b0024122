#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aop-fpca"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn cli_ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// `(x, y, density)` triples of a prior-plot CSV keyed by configuration label.
pub fn read_surfaces(path: &Path) -> BTreeMap<String, Vec<(f64, f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x", "y", "density", "config_label"]
    );
    let mut out: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let y: f64 = rec[1].parse().unwrap();
        let d: f64 = rec[2].parse().unwrap();
        out.entry(rec[3].to_string()).or_default().push((x, y, d));
    }
    out
}

/// Angle in degrees between the major axis of the density-weighted lattice
/// covariance and `direction`.
pub fn major_axis_angle_deg(points: &[(f64, f64, f64)], direction: (f64, f64)) -> f64 {
    let w: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
    let my = points.iter().map(|p| p.1 * p.2).sum::<f64>() / w;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2) * p.2).sum::<f64>() / w;
    let syy = points.iter().map(|p| (p.1 - my).powi(2) * p.2).sum::<f64>() / w;
    let sxy = points
        .iter()
        .map(|p| (p.0 - mx) * (p.1 - my) * p.2)
        .sum::<f64>()
        / w;
    // Orientation of the leading eigenvector of a symmetric 2x2 matrix.
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let phi = direction.1.atan2(direction.0);
    let mut diff = (theta - phi).to_degrees().rem_euclid(180.0);
    if diff > 90.0 {
        diff = 180.0 - diff;
    }
    diff
}

/// Shannon entropy of the lattice masses normalized to sum to one.
pub fn grid_entropy(points: &[(f64, f64, f64)]) -> f64 {
    let total: f64 = points.iter().map(|p| p.2).sum();
    points
        .iter()
        .map(|p| p.2 / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * q.ln())
        .sum()
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    assert!(panels.is_multiple_of(2));
    let h = (hi - lo) / panels as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}
