use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use odex::bundled::{self, GammaGrid};
use odex::estimation::FittedModel;
use odex::io::{read_design, read_dataset, write_dataset};
use odex::model::BOX_LIMIT;
use odex::optimizer::{build_cache, PsoConfig};
use odex::{Dataset, Flavor};
use serde_json::Value;
use tempfile::TempDir;

fn odex(args: &[&str]) -> Output {
    odex_with_env(args, &[])
}

fn odex_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_odex"));
    cmd.args(args).env_remove("ODEX_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fit_to(dir: &TempDir, args: &[&str], name: &str) -> (PathBuf, FittedModel) {
    let out = dir.path().join(name);
    let mut all = vec!["fit"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path_str(&out)]);
    let res = odex(&all);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let fitted = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    (out, fitted)
}

#[test]
fn fit_bundled_temperature_reproduces_estimates() {
    let dir = TempDir::new().unwrap();
    let (_, f) = fit_to(&dir, &["--bundled", "temperature"], "t.json");
    for (a, b) in f.beta_hat.iter().zip(bundled::ESTIMATES[0]) {
        assert!((a - b).abs() <= 1e-2, "{a} vs {b}");
    }
    let res = odex(&["fit", "--bundled", "temperature"]);
    let table = String::from_utf8(res.stdout).unwrap();
    assert!(table.contains("(Intercept)") && table.contains("K^2") && table.contains("BIC"));
}

#[test]
fn fit_rejects_nonpositive_response_naming_the_row() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "run,L,K,D,FDV,day,temperature\n1,0,0,0,0,0,1500\n2,1,0,0,0,0,1490\n3,0,1,0,0,0,0\n",
    )
    .unwrap();
    let res = odex(&["fit", "--data", path_str(&bad), "--model", "temperature"]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("row 3"), "{}", stderr(&res));
}

#[test]
fn fit_link_override_has_higher_bic() {
    let dir = TempDir::new().unwrap();
    let (_, log) = fit_to(&dir, &["--bundled", "velocity"], "log.json");
    let (_, identity) = fit_to(&dir, &["--bundled", "velocity", "--link", "identity"], "id.json");
    assert!(
        identity.bic > log.bic,
        "identity-link BIC {} does not exceed log-link BIC {}",
        identity.bic,
        log.bic
    );
}

#[test]
fn fit_failures_map_to_exit_codes() {
    assert_eq!(code(&odex(&["fit"])), 1);
    assert_eq!(code(&odex(&["fit", "--bundled", "pressure"])), 1);
    assert_eq!(code(&odex(&["fit", "--bundled", "temperature", "--link", "probit"])), 1);
    assert_eq!(code(&odex(&["fit", "--bundled", "temperature", "--data", "/nonexistent.csv"])), 2);

    let dir = TempDir::new().unwrap();
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("run,L,K,D,FDV,day,temperature\n");
    for i in 0..12 {
        text.push_str(&format!("{},{},0,{},0,0,{}\n", i + 1, i % 3 - 1, i % 2, 1500 + i));
    }
    fs::write(&flat, text).unwrap();
    let res = odex(&["fit", "--data", path_str(&flat), "--model", "temperature"]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
}

fn design_run(dir: &TempDir, tag: &str, args: &[&str], env: &[(&str, &str)]) -> (Output, PathBuf, PathBuf) {
    let csv = dir.path().join(format!("{tag}.csv"));
    let report = dir.path().join(format!("{tag}.json"));
    let mut all = vec!["design"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path_str(&csv), "--report", path_str(&report)]);
    let res = odex_with_env(&all, env);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    (res, csv, report)
}

fn self_built_ensemble() -> odex::ScenarioEnsemble {
    let mut ens = bundled::ensemble(&[0, 1, 2, 3], GammaGrid::Fixed, 4).unwrap();
    build_cache(&mut ens, &PsoConfig::default(), &[]).unwrap();
    ens
}

#[test]
fn bayes_design_dominates_published_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["--criterion", "bayesD", "--gammas", "fixed", "--m", "4", "--seed", "1"];
    let (_, csv, report) = design_run(&dir, "a", &args, &[("ODEX_THREADS", "1")]);
    let r = json(&report);
    let value = r["best_value"].as_f64().unwrap();
    assert!(r["evaluations"].as_u64().unwrap() > 0);
    assert_eq!(r["efficiencies"].as_array().unwrap().len(), 4);

    let ens = self_built_ensemble();
    let published = ens.phi_bayes(&bundled::bayes_d_fixed().runs, Flavor::D).unwrap();
    assert!(value >= published - 1e-6, "{value} < {published}");

    let design = read_design(fs::File::open(&csv).unwrap(), "a").unwrap();
    assert_eq!(design.len(), 4);
    assert!(design.runs.iter().all(|r| r.coords.iter().all(|c| c.abs() <= BOX_LIMIT)));
    assert!((ens.phi_bayes(&design.runs, Flavor::D).unwrap() - value).abs() <= 1e-12 * value);

    let (_, csv_b, report_b) = design_run(&dir, "b", &args, &[("ODEX_THREADS", "4")]);
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&csv_b).unwrap());
    assert_eq!(json(&report), json(&report_b));
}

#[test]
fn compromise_design_dominates_published() {
    let dir = TempDir::new().unwrap();
    let args = ["--criterion", "compromise", "--alpha", "0.5", "--m", "4", "--seed", "1"];
    let (_, _, report) = design_run(&dir, "c", &args, &[]);
    let r = json(&report);
    let value = r["best_value"].as_f64().unwrap();
    assert_eq!(r["alpha"].as_f64(), Some(0.5));
    let ens = self_built_ensemble();
    let published = ens.phi_compromise(&bundled::compromise_half().runs, 0.5).unwrap();
    assert!(value >= published - 1e-6, "{value} < {published}");
}

#[test]
fn empty_design_with_warning() {
    let dir = TempDir::new().unwrap();
    let (res, csv, report) = design_run(&dir, "z", &["--criterion", "D", "--m", "0"], &[]);
    assert!(stderr(&res).contains("warning"));
    assert_eq!(fs::read_to_string(&csv).unwrap().trim(), "run,L,K,D,FDV,day");
    assert_eq!(json(&report)["best_value"].as_f64(), Some(0.0));
}

#[test]
fn design_usage_errors() {
    assert_eq!(code(&odex(&["design", "--criterion", "E"])), 1);
    assert_eq!(code(&odex(&["design", "--criterion", "D", "--models", "temperature,velocity"])), 1);
    assert_eq!(code(&odex(&["design", "--criterion", "compromise", "--alpha", "2"])), 1);
    assert_eq!(code(&odex(&["design", "--criterion", "bayesD", "--swarm", "1"])), 1);
    assert_eq!(code(&odex_with_env(&["design", "--criterion", "D", "--m", "0"], &[("ODEX_THREADS", "0")])), 1);
}

#[test]
fn unusable_scenario_fails_the_cache() {
    let dir = TempDir::new().unwrap();
    let ensemble = dir.path().join("e.json");
    fs::write(
        &ensemble,
        r#"{"scenarios": [{"model": {"name": "w", "link": "inverse", "factors": ["L"],
             "terms": [["intercept"], ["main", "L"]]}, "beta": [1.0, 0.1], "gamma": -100.0}], "m": 2}"#,
    )
    .unwrap();
    let res = odex(&["design", "--criterion", "bayesD", "--ensemble", path_str(&ensemble), "--swarm", "10", "--iters", "20"]);
    assert_eq!(code(&res), 4, "{}", stderr(&res));
}

fn efficiency_report(dir: &TempDir, args: &[&str]) -> Vec<f64> {
    let out = dir.path().join("eff.json");
    let mut all = vec!["efficiency"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path_str(&out)]);
    let res = odex(&all);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    json(&out)["efficiencies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["efficiency"].as_f64().unwrap())
        .collect()
}

#[test]
fn reference_against_temperature_local_optimum() {
    let dir = TempDir::new().unwrap();
    let e = efficiency_report(&dir, &["--design", "@reference", "--model", "temperature", "--flavor", "D"]);
    assert_eq!(e.len(), 1);
    assert!((100.0 * e[0] - 80.03).abs() <= 1.0, "{}", 100.0 * e[0]);
}

#[test]
fn reference_against_published_bayesian_design() {
    let dir = TempDir::new().unwrap();
    let e = efficiency_report(&dir, &["--design", "@reference", "--relative-to", "@bayes-d/pm10pm20", "--flavor", "D"]);
    let want = [79.53, 75.35, 78.14, 69.34];
    for (got, w) in e.iter().zip(want) {
        assert!((100.0 * got - w).abs() <= 1.0, "{} vs {w}", 100.0 * got);
    }
}

#[test]
fn design_against_itself_is_fully_efficient() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("ref.csv");
    let mut f = fs::File::create(&csv).unwrap();
    odex::io::write_design(&bundled::reference_design(), &mut f).unwrap();
    for flavor in ["D", "D1"] {
        let e = efficiency_report(&dir, &["--design", path_str(&csv), "--relative-to", "@reference", "--flavor", flavor]);
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-12), "{e:?}");
    }
}

#[test]
fn efficiency_dimension_mismatch() {
    let dir = TempDir::new().unwrap();
    let short = dir.path().join("short.csv");
    fs::write(&short, "run,L,K,D,FDV,day\n1,0,0,0,0,1\n2,1,1,1,1,1\n3,-1,-1,-1,-1,1\n").unwrap();
    assert_eq!(code(&odex(&["efficiency", "--design", path_str(&short), "--relative-to", "@reference"])), 5);
    assert_eq!(code(&odex(&["efficiency", "--design", path_str(&short)])), 5);
    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "run,L,K,D,FDV,day\n1,0,zero,0,0,1\n").unwrap();
    assert_eq!(code(&odex(&["efficiency", "--design", path_str(&broken)])), 2);
}

#[test]
fn predict_perfect_data_scores_zero() {
    let dir = TempDir::new().unwrap();
    let (model, fitted) = fit_to(&dir, &["--bundled", "flame_width"], "fw.json");
    let runs = bundled::ccd30().runs().to_vec();
    let mu = odex::estimation::predict(&fitted, &runs).unwrap();
    let mut responses = std::collections::BTreeMap::new();
    responses.insert("flame_width".to_string(), mu);
    let perfect = dir.path().join("perfect.csv");
    write_dataset(&Dataset::new(runs, responses).unwrap(), fs::File::create(&perfect).unwrap()).unwrap();
    for metric in ["mse", "rmse", "mae"] {
        let res = odex(&["predict", "--model", path_str(&model), "--data", path_str(&perfect), "--metric", metric]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        let text = String::from_utf8(res.stdout).unwrap();
        assert!(text.trim_end().ends_with(&format!("flame_width {metric}: 0")), "{text}");
    }
}

#[test]
fn predict_validation_runs_with_augmented_temperature_fit() {
    let dir = TempDir::new().unwrap();
    let (model, _) = fit_to(&dir, &["--bundled", "temperature", "--data", "@ccd30+reference"], "t34.json");
    let out = dir.path().join("pred.csv");
    let res = odex(&["predict", "--model", path_str(&model), "--data", "@validation14", "--metric", "rmse", "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    let rmse: f64 = text.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((rmse - 16.97).abs() <= 0.01, "{rmse}");

    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["run", "observed", "predicted", "residual"]);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 14);
    for r in &rows {
        assert_eq!(r[3], r[2] - r[1]);
    }
    let observed = bundled::validation14();
    assert_eq!(
        rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
        observed.response("temperature").unwrap()
    );
}

#[test]
fn predict_errors() {
    let dir = TempDir::new().unwrap();
    let (model, fitted) = fit_to(&dir, &["--bundled", "flame_width"], "fw.json");
    let res = odex(&["predict", "--model", path_str(&model), "--data", "@validation14", "--metric", "median"]);
    assert_eq!(code(&res), 1);

    let mut bad = fitted.clone();
    bad.beta_hat.iter_mut().for_each(|b| *b = 0.0);
    bad.beta_hat[0] = 0.1;
    bad.beta_hat[1] = -0.1;
    let bad_model = dir.path().join("bad.json");
    fs::write(&bad_model, serde_json::to_string(&bad).unwrap()).unwrap();
    let data = dir.path().join("three.csv");
    fs::write(&data, "run,L,K,D,FDV,day,flame_width\n1,0,0,0,0,0,10\n2,0.5,0,0,0,0,11\n3,2,0,0,0,0,12\n").unwrap();
    let res = odex(&["predict", "--model", path_str(&bad_model), "--data", path_str(&data)]);
    assert_eq!(code(&res), 6);
    assert!(stderr(&res).contains("run 3"), "{}", stderr(&res));

    let later = dir.path().join("later.csv");
    fs::write(&later, "run,L,K,D,FDV,day,flame_width\n1,0,0,0,0,1,10\n").unwrap();
    assert_eq!(code(&odex(&["predict", "--model", path_str(&model), "--data", path_str(&later)])), 6);
    assert_eq!(code(&odex(&["predict", "--model", "/nonexistent.json", "--data", "@ccd30"])), 2);
    let parsed = read_dataset(fs::File::open(&data).unwrap()).unwrap();
    assert_eq!(parsed.len(), 3);
}
