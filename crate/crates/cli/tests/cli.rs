use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpkf_cli::commands::{self, CompareRow};
use dpkf_cli::config;
use dpkf_cli::Options;
use serde_json::Value;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn dpkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpkf")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes `scalar_n1.json` with one field replaced into `dir`.
fn edited_scenario(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(scenario_path("scalar_n1.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("edited.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn row<'a>(rows: &'a [CompareRow], mechanism: &str, basis_prefix: &str) -> &'a CompareRow {
    rows.iter()
        .find(|r| r.mechanism == mechanism && r.basis.starts_with(basis_prefix))
        .unwrap_or_else(|| panic!("no row {mechanism}/{basis_prefix}"))
}

fn options(out: &Path) -> Options {
    Options {
        out: out.to_path_buf(),
        ..Options::default()
    }
}

#[test]
fn bundled_scenarios_round_trip() {
    for name in ["syndromic.json", "scalar_n1.json", "scalar_n100.json"] {
        let parsed = config::load(&scenario_path(name)).unwrap();
        let rebuilt = parsed.validate().unwrap().to_config().unwrap();
        assert_eq!(rebuilt, parsed, "{name}");
    }
}

#[test]
fn invalid_configurations_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let bad_rho = edited_scenario(dir.path(), |v| v["participants"][0]["rho"] = (-1.0).into());
    let r = dpkf(&["simulate", "--config", bad_rho.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("participants[0].rho"), "{}", stderr(&r));

    let unknown = edited_scenario(dir.path(), |v| v["noise_model"] = "laplace".into());
    let r = dpkf(&["design", "--config", unknown.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("noise_model"), "{}", stderr(&r));

    let no_reps = edited_scenario(dir.path(), |v| v["simulation"]["replications"] = 0.into());
    let r = dpkf(&["simulate", "--config", no_reps.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("simulation.replications"), "{}", stderr(&r));

    let good = scenario_path("scalar_n1.json");
    let r = dpkf(&["design", "--config", good.to_str().unwrap(), "--out", out, "--gap=-1"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("--gap"), "{}", stderr(&r));

    let r = dpkf(&["design", "--config", dir.path().join("missing.json").to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn single_participant_design_is_input_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = config::load(&scenario_path("scalar_n1.json")).unwrap().validate().unwrap();
    let (rows, _) = commands::compare(&scenario, &options(dir.path())).unwrap();
    let designed = row(&rows, "two_stage_sdp", "posterior").analytic_mse;
    let ip = row(&rows, "input_perturbation", "posterior").analytic_mse;
    assert!((designed - ip).abs() <= 1e-6 * ip, "{designed} vs {ip}");
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("mechanism,basis,analytic_mse,empirical_mse,stderr\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

#[test]
fn aggregation_of_many_participants_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = config::load(&scenario_path("scalar_n100.json")).unwrap().validate().unwrap();
    let (rows, _) = commands::compare(&scenario, &options(dir.path())).unwrap();

    let ip_closed = row(&rows, "input_perturbation", "closed_form").analytic_mse;
    let agg_closed = row(&rows, "aggregated", "closed_form").analytic_mse;
    assert!((ip_closed - 6235.0118255652).abs() < 1e-6, "{ip_closed}");
    assert!((agg_closed - 650.0729707295).abs() < 1e-6, "{agg_closed}");

    // The filters report posterior errors; each sits below its predicted
    // counterpart by the same measurement update.
    let ip = row(&rows, "input_perturbation", "posterior").analytic_mse;
    let agg = row(&rows, "fixed_D", "posterior").analytic_mse;
    assert!(ip < ip_closed && agg < agg_closed);
    assert!(agg < ip / 10.0);
    let maxrho = row(&rows, "input_perturbation_maxrho", "posterior").analytic_mse;
    assert!((maxrho - ip).abs() <= 1e-9 * ip, "uniform bounds make both baselines equal");
}

#[test]
fn outputs_depend_only_on_the_seed() {
    let config = scenario_path("scalar_n1.json");
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let r = dpkf(&[
            "compare",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--replications",
            "500",
            "--seed",
            seed,
        ]);
        assert!(r.status.success(), "{}", stderr(&r));
        std::fs::read_to_string(dir.path().join("compare.csv")).unwrap()
    };
    let a = run("3");
    assert_eq!(a, run("3"));
    assert_ne!(a, run("4"));
    assert!(a.lines().skip(1).take(3).all(|l| l.split(',').filter(|f| !f.is_empty()).count() == 5), "{a}");
}

#[test]
fn simulate_writes_report_and_per_step_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario_path("scalar_n1.json");
    let r = dpkf(&["simulate", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sim.json")).unwrap()).unwrap();
    let steps = report["analytic_mse"].as_array().unwrap().len();
    let csv = std::fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    assert!(csv.starts_with("t,analytic_mse,empirical_mse,stderr\n"));
    assert_eq!(csv.lines().count(), steps + 1);
}

#[test]
fn scalar_example_defaults_to_the_built_in_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let r = dpkf(&["scalar-example", "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("scalar.json")).unwrap()).unwrap();
    let ip = report["input_perturbation"]["mse"].as_f64().unwrap();
    let agg = report["aggregated"]["mse"].as_f64().unwrap();
    assert!((ip - 6235.0118255652).abs() < 1e-6 && (agg - 650.0729707295).abs() < 1e-6);

    // The same numbers come out of the equivalent scenario file.
    let from_file = dpkf(&[
        "scalar-example",
        "--config",
        scenario_path("scalar_n100.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let again: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("scalar.json")).unwrap()).unwrap();
    assert_eq!(again["input_perturbation"], report["input_perturbation"]);
    assert_eq!(again["aggregated"], report["aggregated"]);
}

#[test]
fn syndromic_design_beats_both_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario_path("syndromic.json");
    let r = dpkf(&["design", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("design.json")).unwrap()).unwrap();
    let mse = report["analytic_mse"].as_f64().unwrap();
    assert!(mse < 6.8519 && mse < 7.0646, "{mse}");
    assert!((mse - 4.9057).abs() < 1e-3, "{mse}");
    assert_eq!(report["solver"]["status"], "optimal");

    let d = std::fs::read_to_string(dir.path().join("D.csv")).unwrap();
    let header: Vec<_> = d.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 20);
    assert_eq!(header[0], "y0_0");
}
