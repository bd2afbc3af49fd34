use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smalldev_cli::{Experiment, ExperimentConfig, Overrides, RunError};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smalldev(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smalldev"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SMALLBALL_THREADS")
        .output()
        .unwrap()
}

fn with_config(kind: &str, json: &str, extra: &[&str], out: &Path) -> Output {
    let path = out.with_extension("json");
    fs::write(&path, json).unwrap();
    let mut args = vec![kind, "--config", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    smalldev(&args, out)
}

/// Body lines of an artifact after checking its manifest header.
fn body(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# smalldev "), "{}", lines[0]);
    assert!(lines[1].starts_with("# experiment: "));
    assert!(lines[2].starts_with("# config: {"));
    lines.iter().skip_while(|l| l.starts_with('#')).map(|l| l.to_string()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_seed_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let json = r#"{"experiment": "eigen", "process": {"kind": "brownian_motion"}}"#;
    let o = with_config("eigen", json, &[], &tmp.path().join("run"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));
    // the flag supplies it
    let o = with_config("eigen", json, &["--seed", "4"], &tmp.path().join("run"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn corrupted_chenli_fixture_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("chenli_corrupted.json");
    let o = smalldev(&["chenli", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let rows = body(&tmp.path().join("chenli.csv"));
    assert_eq!(rows[0], "lambda,eps,lhs,rhs,margin_stderr");
    assert_eq!(rows.len(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 3);
}

#[test]
fn chenli_holds_for_integrated_brownian_motion() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("chenli_integrated_bm.json");
    let o = smalldev(&["chenli", "--config", cfg.to_str().unwrap(), "--n-samples", "50000"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(body(&tmp.path().join("chenli.csv")).len(), 11);
}

#[test]
fn bad_configs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("eigen", r#"{"seed": 1, "process": {"kind": "brownian_motion"}, "colour": "red"}"#),
        ("eigen", r#"{"experiment": "quantize", "seed": 1, "process": {"kind": "brownian_motion"}}"#),
        ("eigen", r#"{"seed": 1}"#),
        ("eigen", r#"{"seed": 1, "process": {"kind": "fractional_bm", "hurst": 1.5}}"#),
        ("smallball", r#"{"seed": 1, "process": {"kind": "brownian_motion"}, "eps": [0.5], "method": "spectral"}"#),
        (
            "transfer",
            r#"{"seed": 1, "rate": {"form": "direct", "kappa": 1, "tau": 0.1, "theta": 0}, "order": 0.1, "norm": {"kind": "holder", "eta": 0.5}}"#,
        ),
        ("quantize", "not json"),
    ];
    for (i, (kind, json)) in cases.iter().enumerate() {
        let o = with_config(kind, json, &[], &tmp.path().join(format!("case{i}")));
        assert_eq!(o.status.code(), Some(1), "{json}: {}", stderr(&o));
    }
    let o = smalldev(&["eigen"], &tmp.path().join("noconfig"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_curve_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let json = r#"{"seed": 1, "process": {"kind": "brownian_motion"}, "eps": [0.02], "n_samples": 2000}"#;
    let o = with_config("ratefit", json, &[], &tmp.path().join("run"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("transfer_bm.json");
    let o = Command::new(env!("CARGO_BIN_EXE_smalldev"))
        .args(["transfer", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path())
        .env("SMALLBALL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transfer_writes_exact_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("transfer_bm.json");
    let o = smalldev(&["transfer", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = body(&tmp.path().join("transfer.csv"));
    assert_eq!(rows, vec!["direction,exponent,log_exponent,constant", "direct,0.6666666666666666,0,"]);
}

#[test]
fn every_subcommand_writes_headed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    // subcommand, config, extra flags, (file, expected CSV header prefix)
    type Run<'a> = (&'a str, &'a str, &'a [&'a str], &'a [(&'a str, &'a str)]);
    let runs: [Run; 6] = [
        ("simulate", "simulate_fbm.json", &[], &[("paths.csv", "t,path_0,")]),
        (
            "smallball",
            "smallball_bm_sup.json",
            &["--n-samples", "20000"],
            &[("smallball.csv", "eps,neg_log_p,stderr,method")],
        ),
        (
            "ratefit",
            "ratefit_integrated_bm.json",
            &[],
            &[
                ("smallball.csv", "eps,neg_log_p,stderr,method"),
                ("ratefit.csv", "kappa,inv_tau,theta,offset,r2,points"),
            ],
        ),
        ("eigen", "eigen_integrated_bm.json", &[], &[("eigen.csv", "k,lambda"), ("eigen_fit.csv", "lo,hi,slope,")]),
        (
            "quantize",
            "quantize_bm.json",
            &["--n-samples", "2000"],
            &[("quantize.csv", "r,distortion,stderr"), ("quantize_fit.csv", "r_lo,r_hi,decay_exponent")],
        ),
        ("transfer", "transfer_bm.json", &[], &[("transfer.csv", "direction,")]),
    ];
    for (kind, file, extra, files) in runs {
        let dir = tmp.path().join(kind);
        let cfg = configs().join(file);
        let mut args = vec![kind, "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = smalldev(&args, &dir);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}", stderr(&o));
        for (name, head) in files {
            let rows = body(&dir.join(name));
            assert!(rows[0].starts_with(head), "{kind}/{name}: {}", rows[0]);
            assert!(rows.len() > 1);
        }
        assert!(dir.join("run_manifest.json").exists());
    }
    let fit = body(&tmp.path().join("ratefit/ratefit.csv"));
    let inv_tau: f64 = fit[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((inv_tau - 2.0 / 3.0).abs() < 0.03, "{inv_tau}");
    let eig = body(&tmp.path().join("eigen/eigen_fit.csv"));
    let slope: f64 = eig[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((slope + 4.0).abs() < 0.1, "{slope}");
}

#[test]
fn reruns_are_byte_identical_and_header_omits_out() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smallball_bm_sup.json");
    let mut seen = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "2")] {
        let dir = tmp.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_smalldev"))
            .args(["smallball", "--config", cfg.to_str().unwrap(), "--n-samples", "5000", "--seed", "99", "--out"])
            .arg(&dir)
            .env("SMALLBALL_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        seen.push(fs::read(dir.join("smallball.csv")).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
    let text = String::from_utf8(seen[0].clone()).unwrap();
    let config_line = text.lines().nth(2).unwrap();
    assert!(config_line.contains("\"seed\":99") && config_line.contains("\"n_samples\":5000"), "{config_line}");
    assert!(!config_line.contains("\"out\""));
    assert!(!text.contains('\r'));
}

#[test]
fn config_resolution() {
    let cfg = ExperimentConfig::from_json(r#"{"seed": 3, "n_samples": 10}"#).unwrap();
    let o = Overrides { seed: Some(8), out: Some("x".into()), n_samples: Some(20) };
    let r = cfg.clone().resolve(Experiment::Smallball, &o).unwrap();
    assert_eq!((r.seed, r.n_samples, r.kind()), (Some(8), Some(20), Experiment::Smallball));
    assert!(!r.echo().contains("\"out\""));
    let zero = Overrides { n_samples: Some(0), ..Overrides::default() };
    assert!(matches!(cfg.resolve(Experiment::Smallball, &zero), Err(RunError::Config(_))));
    let e = ExperimentConfig::from_json(r#"{"experiment": "verify-all"}"#)
        .unwrap()
        .resolve(Experiment::VerifyAll, &Overrides::default())
        .unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("`seed`"));
}

#[test]
fn exit_codes_follow_error_kind() {
    use smalldev_core::Error as E;
    assert_eq!(RunError::Core(E::Domain("x".into())).exit_code(), 1);
    assert_eq!(RunError::Core(E::Unsupported("x".into())).exit_code(), 1);
    assert_eq!(RunError::Core(E::Numerical("x".into())).exit_code(), 2);
    assert_eq!(RunError::Core(E::EmptyCurve).exit_code(), 2);
    assert_eq!(RunError::Verification("x".into()).exit_code(), 3);
}
