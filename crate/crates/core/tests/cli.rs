mod common;

use std::fs;
use std::path::Path;

use aop_fpca::data::{Curve, FunctionalDataset};
use common::{cli, cli_ok, path_str};

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_toy(path: &Path) {
    // One principal direction sqrt(3) (2t - 1) with small deterministic noise.
    let times: Vec<f64> = (0..20).map(|j| j as f64 / 19.0).collect();
    let curves = (0..40)
        .map(|i| {
            let score = ((i as f64) * 0.37).sin() * 2.0;
            Curve {
                id: format!("c{i}"),
                times: times.clone(),
                values: times
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        score * 3f64.sqrt() * (2.0 * t - 1.0)
                            + 0.02 * ((i * 31 + j * 17) as f64).cos()
                    })
                    .collect(),
            }
        })
        .collect();
    FunctionalDataset::new(curves).write_csv_path(path).unwrap();
}

#[test]
fn simulate_writes_grid_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("haar.csv");
    cli_ok(&[
        "simulate",
        "--scenario",
        "haar",
        "--n",
        "50",
        "--seed",
        "4",
        "--out",
        path_str(&out),
    ]);
    let data = FunctionalDataset::read_csv_path(&out).unwrap();
    assert_eq!(data.n(), 50);
    assert_eq!(data.total_points(), 50 * 30);
    assert_eq!(data.curves[0].times[29], 1.0);
    assert_eq!(data.curves[0].times[1], 1.0 / 29.0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "id,t,y");
    assert_eq!(text.lines().count(), 1 + 1500);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("haar.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 4);
    assert_eq!(meta["rows"], 1500);

    let again = dir.path().join("again.csv");
    cli_ok(&[
        "simulate",
        "--scenario",
        "haar",
        "--n",
        "50",
        "--seed",
        "4",
        "--out",
        path_str(&again),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    let other = dir.path().join("other.csv");
    cli_ok(&[
        "simulate",
        "--scenario",
        "haar",
        "--n",
        "50",
        "--seed",
        "5",
        "--out",
        path_str(&other),
    ]);
    assert_ne!(fs::read(&out).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn custom_grid_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    cli_ok(&[
        "simulate",
        "--scenario",
        "legendre",
        "--n",
        "3",
        "--T",
        "11",
        "--seed",
        "1",
        "--out",
        path_str(&out),
    ]);
    let data = FunctionalDataset::read_csv_path(&out).unwrap();
    assert_eq!(data.total_points(), 33);
    assert_eq!(data.curves[2].times[5], 0.5);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("fit");
    let o = cli(&["fit", path_str(&missing), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));

    let data = dir.path().join("d.csv");
    write_toy(&data);
    let o = cli(&[
        "fit",
        path_str(&data),
        "--K",
        "8",
        "--L",
        "6",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("K=8"), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,t,y\na,0.0,1.0\na,zero,2.0\n").unwrap();
    let o = cli(&["fit", path_str(&bad), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let header = dir.path().join("header.csv");
    fs::write(&header, "curve,time,value\na,0,1\n").unwrap();
    assert_eq!(
        cli(&["scale", path_str(&header), "--out", path_str(&out)])
            .status
            .code(),
        Some(2)
    );

    assert_eq!(
        cli(&[
            "simulate",
            "--scenario",
            "sine",
            "--n",
            "3",
            "--out",
            path_str(&out)
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    let o = cli(&[
        "fit",
        path_str(&data),
        "--prior",
        "aop-fixed",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scale_divides_by_root_mean_square() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(
        &input,
        "id,t,y\nflat,0,5\nflat,0.5,5\nflat,1,5\npair,0,3\npair,1,-4\n",
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    cli_ok(&["scale", path_str(&input), "--out", path_str(&out)]);
    let data = FunctionalDataset::read_csv_path(&out).unwrap();
    assert_eq!(data.curves[0].values, vec![1.0, 1.0, 1.0]);
    let r = 12.5f64.sqrt();
    assert!((data.curves[1].values[0] - 3.0 / r).abs() < 1e-15);
    assert!((data.curves[1].values[1] + 4.0 / r).abs() < 1e-15);

    fs::write(&input, "id,t,y\nz,0,0\nz,1,0\n").unwrap();
    let o = cli(&["scale", path_str(&input), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("all-zero"));
}

#[test]
fn prior_plot_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    cli_ok(&["prior-plot", "--grid", "41", "--out", path_str(&out)]);
    let s = common::read_surfaces(&out);
    assert_eq!(
        s.keys().map(String::as_str).collect::<Vec<_>>(),
        ["tau2=0.01/B02=1", "tau2=0.01/B02=2", "tau2=1/B02=1"]
    );
    for pts in s.values() {
        assert_eq!(pts.len(), 41 * 41);
        assert_eq!(pts[0].0, -3.0);
        assert!(pts.iter().all(|p| p.2 >= 0.0 && p.2.is_finite()));
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let data = FunctionalDataset::new(vec![Curve {
        id: "x".into(),
        times: vec![0.0, 0.1, 1.0 / 3.0],
        values: vec![-1e-300, std::f64::consts::PI, 1e17],
    }]);
    data.write_csv_path(&path).unwrap();
    assert_eq!(FunctionalDataset::read_csv_path(&path).unwrap(), data);
}

#[test]
fn fit_recovers_leading_direction() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    write_toy(&data);
    let out = dir.path().join("fit");
    let o = cli_ok(&[
        "fit",
        path_str(&data),
        "--prior",
        "aop-g",
        "--K",
        "3",
        "--L",
        "6",
        "--iters",
        "1500",
        "--burnin",
        "500",
        "--seed",
        "3",
        "--out",
        path_str(&out),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("NC = "), "{stdout}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["K"], 3);
    assert_eq!(summary["draws"], 1500);
    assert!(summary["sigma_sq_mean"].as_f64().unwrap() < 0.01);
    for f in ["config.json", "draws.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // The leading posterior-mean function is proportional to 2t - 1.
    let mut rdr = csv::Reader::from_path(out.join("functions.csv")).unwrap();
    let (mut fg, mut ff, mut gg) = (0.0, 0.0, 0.0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[1] != "1" {
            continue;
        }
        let t: f64 = rec[0].parse().unwrap();
        let f: f64 = rec[2].parse().unwrap();
        let g = 2.0 * t - 1.0;
        fg += f * g;
        ff += f * f;
        gg += g * g;
    }
    let corr = fg / (ff * gg).sqrt();
    assert!(corr.abs() > 0.99, "correlation {corr}");
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("d.csv");
    fs::write(
        &cfg,
        format!(
            "scenario = \"legendre\"\nn = 4\nT = 5\nseed = 9\nout = \"{}\"\n",
            path_str(&out)
        ),
    )
    .unwrap();
    cli_ok(&["simulate", "--config", path_str(&cfg)]);
    assert_eq!(
        FunctionalDataset::read_csv_path(&out)
            .unwrap()
            .total_points(),
        20
    );
    // Flags take precedence over the file.
    cli_ok(&["simulate", "--config", path_str(&cfg), "--n", "2"]);
    assert_eq!(FunctionalDataset::read_csv_path(&out).unwrap().n(), 2);

    fs::write(&cfg, "scenario = \"haar\"\ncolour = 3\n").unwrap();
    let o = cli(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn replicate_writes_study_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    cli_ok(&[
        "replicate",
        "--scenario",
        "legendre,haar",
        "--n",
        "10",
        "--reps",
        "2",
        "--K",
        "2",
        "--L",
        "5",
        "--iters",
        "30",
        "--burnin",
        "10",
        "--prior",
        "aop-g",
        "--seed",
        "1",
        "--out",
        path_str(&out),
    ]);
    let csv = fs::read_to_string(out.join("study.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,n,method,nc_mean,nc_sd,og_mean,og_sd,failures"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("legendre,10,"));
    assert!(lines[2].starts_with("haar,10,"));
    for f in ["config.json", "study.txt", "study.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
