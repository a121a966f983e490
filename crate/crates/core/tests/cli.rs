use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use binagg::gdp::RandomSource;
use binagg::pipeline::PipelineConfig;
use binagg::privtree::{self, debug};
use binagg::regression::wls_exact;
use binagg::Region;
use nalgebra::{DMatrix, DVector};

fn binagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binagg"))
        .args(args)
        .env_remove("BINAGG_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a 3-column CSV (x1, x2, y) and returns the rows.
fn write_data(dir: &Path, n: usize, seed: u64) -> (PathBuf, Vec<[f64; 3]>) {
    let mut rng = RandomSource::new(seed, 0);
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let a = rng.uniform(0.0, 1.0);
            let b = rng.uniform(0.0, 1.0);
            let y = (0.8 * a + 0.3 * b + 0.2 * rng.standard_normal()).clamp(-1.0, 2.0);
            [a, b, y]
        })
        .collect();
    let path = dir.join("data.csv");
    let mut text = String::from("x1,x2,y\n");
    for r in &rows {
        text += &format!("{},{},{}\n", r[0], r[1], r[2]);
    }
    std::fs::write(&path, text).unwrap();
    (path, rows)
}

#[test]
fn convert_budget_prints_delta() {
    let o = binagg(&["convert-budget", "--mu", "1", "--epsilon", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("delta = 0.1269367375"), "{}", stdout(&o));
    let o = binagg(&["convert-budget", "--pure-epsilon", "1"]);
    assert!(stdout(&o).starts_with("mu = "));
}

#[test]
fn exit_codes() {
    assert_eq!(binagg(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(binagg(&["convert-budget", "--mu", "-1"]).status.code(), Some(1));
    let missing = binagg(&[
        "fit",
        "--data",
        "/nonexistent/file.csv",
        "--bounds",
        "0:1",
        "--label-bounds",
        "0:1",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_data(dir.path(), 30, 1);
    let data = data.to_str().unwrap();
    // too few rows for any bin to survive with a tiny budget
    let o = binagg(&[
        "fit", "--data", data, "--bounds", "0:1,0:1", "--label-bounds", "-1:2", "--mu", "0.01",
    ]);
    assert!(matches!(o.status.code(), Some(2) | Some(3)), "{o:?}");
    // wrong number of feature bounds
    let o = binagg(&["fit", "--data", data, "--bounds", "0:1", "--label-bounds", "-1:2"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn noiseless_fit_is_exact_wls_on_bin_sums() {
    let dir = tempfile::tempdir().unwrap();
    let (data, rows) = write_data(dir.path(), 600, 2);
    let o = binagg(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--bounds",
        "0:1,0:1",
        "--label-bounds",
        "-1:2",
        "--no-noise",
        "--json",
    ]);
    assert!(o.status.success(), "{o:?}");
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let got: Vec<f64> = doc["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["estimate"].as_f64().unwrap())
        .collect();

    let cfg = PipelineConfig::default();
    let tree = privtree::calibrate(cfg.budgets().unwrap().mu_bin, cfg.theta, cfg.max_depth).unwrap();
    let x = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r][c]);
    let leaves = debug::build_noiseless(&x, &Region::unit(2).unwrap(), &tree).unwrap();
    let mut sums = Vec::new();
    for l in &leaves {
        let inside = |v: f64, i: usize| {
            l.lower()[i] <= v && (v < l.upper()[i] || (v == 1.0 && l.upper()[i] == 1.0))
        };
        let members: Vec<&[f64; 3]> = rows.iter().filter(|r| inside(r[0], 0) && inside(r[1], 1)).collect();
        if members.len() >= 2 {
            let s0: f64 = members.iter().map(|r| r[0]).sum();
            let s1: f64 = members.iter().map(|r| r[1]).sum();
            let t: f64 = members.iter().map(|r| r[2]).sum();
            sums.push((s0, s1, t, members.len() as f64));
        }
    }
    let k = sums.len();
    let s = DMatrix::from_fn(k, 2, |r, c| if c == 0 { sums[r].0 } else { sums[r].1 });
    let t = DVector::from_fn(k, |r, _| sums[r].2);
    let w = DVector::from_fn(k, |r, _| 1.0 / sums[r].3);
    let expect = wls_exact(&s, &w, &t).unwrap();
    assert_eq!(doc["bins"].as_u64().unwrap() as usize, k);
    for j in 0..2 {
        assert!((got[j] - expect[j]).abs() < 1e-9, "{got:?} vs {expect}");
    }
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_data(dir.path(), 800, 3);
    let data = data.to_str().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "total_mu = 2.0\nseed = 5\nbounds = [[0, 1], [0, 1]]\nlabel_bounds = [-1, 2]\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = binagg(&["--config", cfg, "fit", "--data", data, "--json"]);
    assert!(from_file.status.success(), "{from_file:?}");
    let doc: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert!((doc["total_mu"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let same_seed = binagg(&["--seed", "5", "fit", "--data", data, "--bounds", "0:1,0:1", "--label-bounds", "-1:2", "--mu", "2", "--json"]);
    assert_eq!(from_file.stdout, same_seed.stdout);

    let flag_wins = binagg(&["--config", cfg, "fit", "--data", data, "--mu", "0.5", "--json"]);
    let doc: serde_json::Value = serde_json::from_slice(&flag_wins.stdout).unwrap();
    assert!((doc["total_mu"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let other_seed = binagg(&["--config", cfg, "--seed", "6", "fit", "--data", data, "--json"]);
    assert_ne!(from_file.stdout, other_seed.stdout);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "totl_mu = 1\n").unwrap();
    let o = binagg(&["--config", bad.to_str().unwrap(), "fit", "--data", data]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_data(dir.path(), 500, 4);
    let args = [
        "fit", "--data", data.to_str().unwrap(), "--bounds", "0:1,0:1", "--label-bounds", "-1:2", "--json",
    ];
    let env = Command::new(env!("CARGO_BIN_EXE_binagg"))
        .args(args)
        .env("BINAGG_SEED", "9")
        .output()
        .unwrap();
    let mut flag_args = vec!["--seed", "9"];
    flag_args.extend(args);
    assert_eq!(env.stdout, binagg(&flag_args).stdout);
}

#[test]
fn synth_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_data(dir.path(), 700, 5);
    let out = dir.path().join("synth.csv");
    let args = [
        "--seed", "1", "synth", "--data", data.to_str().unwrap(), "--bounds", "0:1,0:1",
        "--label-bounds", "-1:2", "--include-bin", "--out", out.to_str().unwrap(),
    ];
    let o = binagg(&args);
    assert!(o.status.success(), "{o:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x_1,x_2,y,bin");
    assert!(lines.count() > 100);
    let first = std::fs::read(&out).unwrap();
    assert!(binagg(&args).status.success());
    assert_eq!(first, std::fs::read(&out).unwrap());
}

#[test]
fn coverage_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let prefix = dir.path().join(name);
        let o = binagg(&[
            "--seed", "3", "coverage", "--d", "2", "--n", "300", "--reps", "100", "--out",
            prefix.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{o:?}");
        outputs.push(o.stdout);
        for ext in ["json", "csv", "reps.csv"] {
            assert!(dir.path().join(format!("{name}.{ext}")).exists());
        }
    }
    for ext in ["json", "csv", "reps.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join(format!("a.{ext}"))).unwrap(),
            std::fs::read(dir.path().join(format!("b.{ext}"))).unwrap()
        );
    }
}
