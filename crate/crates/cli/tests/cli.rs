use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gencov::dgp::dgp_a;
use gencov::sim::{generate_sample, read_report, sidecar_path};
use gencov::ErrorCategory;
use gencov_cli::data::{load_dataset, load_table, write_dataset};

fn gencov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gencov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn loads_a_small_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "S,T,Y\n0.1,0.2,1\n0.5,0.4,2\n0.9,0.8,3\n").unwrap();
    let d = load_dataset(&p).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.y, vec![1.0, 2.0, 3.0]);
}

#[test]
fn missing_values_name_their_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "s,t,y\n0.1,NA,1\n0.5,0.4,2\n").unwrap();
    let err = load_dataset(&p).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Data);
    assert!(err.to_string().contains("row 2, column t"), "{err}");

    let out = gencov(&["fit", "--input", path_str(&p)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[data]:"));
}

#[test]
fn rejects_malformed_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "").unwrap();
    assert!(load_table(&p).is_err());
    fs::write(&p, "s,t,y\n0.1,0.2\n").unwrap();
    assert!(load_table(&p).unwrap_err().to_string().contains("row 2"));
    fs::write(&p, "s,t\n0.1,0.2\n").unwrap();
    assert!(load_dataset(&p).unwrap_err().to_string().contains("missing column 'y'"));
    fs::write(&p, "s,t,y,w\n0.1,0.2,1,4\n").unwrap();
    assert!(load_dataset(&p).unwrap_err().to_string().contains("unexpected column"));
}

#[test]
fn samples_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sample.csv");
    let data = generate_sample(&dgp_a(), 50, 9);
    write_dataset(&p, &data).unwrap();
    let back = load_dataset(&p).unwrap();
    assert_eq!(back.s, data.s);
    assert_eq!(back.t, data.t);
    assert_eq!(back.y, data.y);
}

fn assert_values(text: &str, expected: &[f64]) {
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.split('=').nth(1).unwrap().trim().parse().unwrap())
        .collect();
    assert_eq!(values.len(), expected.len(), "{text}");
    for (v, e) in values.iter().zip(expected) {
        assert!((v - e).abs() < 1e-12, "{text}");
    }
}

#[test]
fn rates_and_windows_print_bounds() {
    let out = gencov(&["rates", "--eta", "0.2", "--delta", "0.4", "--alpha", "1", "--xi", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_values(&stdout(&out), &[0.4, 0.4, 0.6, 0.6]);

    let out = gencov(&["window", "--application", "censored", "--p", "1", "--q", "1", "--eta", "0.2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("theta_lower = "));
    assert_values(&text, &[0.2, 0.4]);

    let out = gencov(&["window", "--application", "censored", "--p", "4", "--q", "1", "--eta", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[config]:"));
}

#[test]
fn usage_errors_exit_with_config_status() {
    let out = gencov(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));

    let out = gencov(&[]);
    assert_eq!(out.status.code(), Some(2));

    let out = gencov(&["simulate", "--dgp", "dgp-a", "--n", "300", "--h", "0.2", "--g", "0.2", "--eta", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not both"));
}

#[test]
fn fit_writes_a_curve() {
    let dir = tempfile::tempdir().unwrap();
    let sample = dir.path().join("sample.csv");
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let out = gencov(&[
        "fit", "--dgp", "dgp-a", "--n", "800", "--seed", "4", "--save-sample", path_str(&sample),
        "--output", path_str(&first),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = gencov(&["fit", "--input", path_str(&sample), "--output", path_str(&second)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let a = fs::read_to_string(&first).unwrap();
    assert_eq!(a, fs::read_to_string(&second).unwrap());
    assert!(a.starts_with("x,m_hat,eff_n,flag\n"));
    assert!(a.lines().count() > 10);
}

#[test]
fn simulation_replays_from_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let replay = dir.path().join("replay.csv");
    let out = gencov(&[
        "simulate", "--dgp", "dgp-a", "--estimator", "two_stage", "--n", "300,600", "--reps", "6",
        "--seed", "7", "--output", path_str(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sidecar = sidecar_path(&report);
    assert!(sidecar.exists());
    let out = gencov(&[
        "--config", path_str(&sidecar), "--threads", "2", "--output", path_str(&replay),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read(&report).unwrap(), fs::read(&replay).unwrap());

    let r = read_report(&report).unwrap();
    assert_eq!(r.metadata.seed, 7);
    assert_eq!(r.metadata.reps, 6);
    assert_eq!(r.sample_sizes(), vec![300, 600]);
}

#[test]
fn flags_override_the_configuration_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let report = dir.path().join("report.csv");
    fs::write(
        &config,
        "command = \"simulate\"\ndgp = \"dgp-a\"\nn = [300]\nreps = 5\nseed = 1\n",
    )
    .unwrap();
    let out = gencov(&["--config", path_str(&config), "--reps", "3", "--output", path_str(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = read_report(&report).unwrap();
    assert_eq!(r.metadata.reps, 3);
    assert_eq!(r.metadata.seed, 1);

    fs::write(&config, "command = \"simulate\"\n[nested]\nx = 1\n").unwrap();
    let out = gencov(&["--config", path_str(&config)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn applications_run_from_designs() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("c.csv");
    let out = gencov(&["censored", "--dgp", "censored-a", "--n", "800", "--output", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("x,mu_hat,r_hat,avar,clipped_nodes,flag\n"));

    let out = gencov(&["triangular", "--dgp", "triangular-a", "--n", "600", "--output", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("x1,z1,mu1_hat,dropout,avar,flag\n"), "{text}");
}
