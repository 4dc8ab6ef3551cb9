use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use odex::bundled::{self, RESPONSES};
use odex::criteria::{CriteriaError, LocalOptima};
use odex::estimation::{self, FitError};
use odex::io::write_design;
use odex::model::{Day, Link};
use odex::optimizer::{self, OptimizerError, PsoConfig, SearchResult};
use odex::{Design, Flavor, ScenarioEnsemble};
use serde::Serialize;
use serde_json::json;

use crate::{
    fit_code, inputs, Criterion, DesignArgs, EfficiencyArgs, Failure, FitArgs, OptimaSource, OrExit,
    Outcome, PredictArgs, ScenarioArgs, CACHE, DIMENSION, DOMAIN, PARSE, USAGE,
};

fn fit_failure(e: FitError) -> Failure {
    Failure::new(fit_code(&e), e)
}

fn search_failure(e: OptimizerError, criteria_code: u8) -> Failure {
    let code = match e {
        OptimizerError::Criteria(_) => criteria_code,
        OptimizerError::InvalidConfig(_) | OptimizerError::ThreadPool(_) => USAGE,
    };
    Failure::new(code, e)
}

fn ensemble_failure(e: CriteriaError) -> Failure {
    let code = match e {
        CriteriaError::InfeasibleInitial { .. } => DOMAIN,
        _ => PARSE,
    };
    Failure::new(code, e)
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .or_exit(PARSE)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).or_exit(PARSE)?;
    writeln!(out).and_then(|_| out.flush()).or_exit(PARSE)
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn print_design(design: &Design) {
    println!("{:>4} {:>9} {:>9} {:>9} {:>9} {:>4}", "run", "L", "K", "D", "FDV", "day");
    for (i, run) in design.runs.iter().enumerate() {
        let [l, k, d, fdv] = run.coords;
        println!("{:>4} {l:>9.4} {k:>9.4} {d:>9.4} {fdv:>9.4} {:>4}", i + 1, run.day.flag());
    }
}

pub fn fit(args: FitArgs) -> Outcome {
    let (spec, default_data, default_response) = match (&args.bundled, &args.model) {
        (Some(name), _) => {
            let i = inputs::bundled_index(name)?;
            (bundled::models()[i].clone(), Some("@ccd30"), RESPONSES[i].to_string())
        }
        (None, Some(source)) => {
            let spec = inputs::model_spec(source)?;
            let response = spec.name().to_string();
            (spec, None, response)
        }
        (None, None) => return Err(Failure::msg(USAGE, "fit needs --bundled <response> or --model")),
    };
    let source = args
        .data
        .as_deref()
        .or(default_data)
        .ok_or_else(|| Failure::msg(USAGE, "fit needs --data"))?;
    let data = inputs::dataset(source)?;
    let spec = match &args.link {
        Some(name) => spec.with_link(name.parse::<Link>().or_exit(USAGE)?),
        None => spec,
    };
    let response = args.response.unwrap_or(default_response);
    let day_effect = args.day_effect || data.runs().iter().any(|r| r.day == Day::Later);
    let fitted = estimation::fit(&spec, &data, &response, day_effect).map_err(fit_failure)?;

    println!(
        "{}: {} link, {} runs, {} iterations",
        fitted.response,
        spec.link(),
        fitted.n,
        fitted.iterations
    );
    println!("{:<14} {:>14} {:>14}", "term", "estimate", "std. error");
    let labels = spec
        .terms()
        .iter()
        .map(|t| t.label())
        .chain(fitted.gamma_hat.map(|_| "gamma".to_string()));
    for ((label, est), se) in labels.zip(fitted.coefficients()).zip(&fitted.std_errors) {
        println!("{label:<14} {est:>14.6} {se:>14.6}");
    }
    println!("{:<14} {:>14.6}", "shape", fitted.nu_hat);
    println!("{:<14} {:>14.4}", "loglik", fitted.log_likelihood);
    println!("{:<14} {:>14.4}", "BIC", fitted.bic);
    if let Some(path) = &args.out {
        write_json(path, &fitted)?;
    }
    Ok(())
}

fn empty_result(label: &str) -> SearchResult {
    SearchResult {
        best_design: Design::new(label, vec![]),
        best_value: 0.0,
        history: vec![],
        evaluations: 0,
    }
}

pub fn design(args: DesignArgs) -> Outcome {
    let local = args.criterion.local_flavor();
    let defaults: &[&str] = if local.is_some() { &RESPONSES[..1] } else { &RESPONSES };
    let (scenarios, file_m) = inputs::scenarios(&args.scenarios, defaults)?;
    if local.is_some() && scenarios.len() != 1 {
        return Err(Failure::msg(
            USAGE,
            format!("criterion {} needs exactly one scenario, got {}", args.criterion, scenarios.len()),
        ));
    }
    if args.criterion == Criterion::Compromise && !(0.0..=1.0).contains(&args.alpha) {
        return Err(Failure::msg(USAGE, format!("--alpha must lie in [0, 1], got {}", args.alpha)));
    }
    let m = args.m.or(file_m).unwrap_or(4);
    let config = inputs::pso_config(&args.search)?;
    let mut ensemble = ScenarioEnsemble::new(scenarios, bundled::initial_design(), m).map_err(ensemble_failure)?;

    let (result, efficiencies) = if m == 0 {
        eprintln!("warning: --m 0 requests no new runs; the design is empty and its value is 0");
        (empty_result(&args.criterion.to_string()), vec![])
    } else {
        let solutions = optimizer::build_cache(&mut ensemble, &config, &[]).map_err(|e| search_failure(e, CACHE))?;
        let result = match args.criterion {
            Criterion::D => Ok(solutions[0].d_optimal.clone()),
            Criterion::D1 => Ok(solutions[0].d1_optimal.clone()),
            Criterion::BayesD => optimizer::solve_bayes(&ensemble, Flavor::D, &config, &[]),
            Criterion::BayesD1 => optimizer::solve_bayes(&ensemble, Flavor::D1, &config, &[]),
            Criterion::Compromise => optimizer::solve_compromise(&ensemble, args.alpha, &config, &[]),
        }
        .map_err(|e| search_failure(e, USAGE))?;
        let efficiencies = ensemble.efficiencies(&result.best_design.runs).or_exit(CACHE)?;
        (result, efficiencies)
    };

    println!(
        "criterion {} over {} scenario(s), m = {m}, seed {}",
        args.criterion,
        ensemble.len(),
        config.seed
    );
    println!("value {} ({} evaluations)", result.best_value, result.evaluations);
    print_design(&result.best_design);
    if !efficiencies.is_empty() {
        println!("{:<32} {:>8} {:>9} {:>9}", "scenario", "weight", "eff_D", "eff_D1");
        for e in &efficiencies {
            println!(
                "{:<32} {:>8.4} {:>9} {:>9}",
                e.scenario,
                e.weight,
                percent(e.eff_d),
                percent(e.eff_d1)
            );
        }
    }
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        write_design(&result.best_design, &mut out).or_exit(PARSE)?;
        out.flush().or_exit(PARSE)?;
    }
    if let Some(path) = &args.report {
        let mut report = json!({
            "criterion": args.criterion.to_string(),
            "m": m,
            "seed": config.seed,
            "best_value": result.best_value,
            "evaluations": result.evaluations,
            "efficiencies": efficiencies,
        });
        if args.criterion == Criterion::Compromise {
            report["alpha"] = json!(args.alpha);
        }
        write_json(path, &report)?;
    }
    Ok(())
}

fn published_cache(ensemble: &ScenarioEnsemble) -> Outcome<Vec<LocalOptima>> {
    if ensemble.m() != 4 {
        return Err(Failure::msg(
            DIMENSION,
            format!("published optima have 4 runs but the design has {}", ensemble.m()),
        ));
    }
    let specs = bundled::models();
    ensemble
        .models()
        .iter()
        .map(|model| {
            let spec = &model.scenario().spec;
            let i = specs.iter().position(|s| s == spec).ok_or_else(|| {
                Failure::msg(
                    CACHE,
                    format!("no published optimum for model `{}`; use --optima search", spec.name()),
                )
            })?;
            Ok(LocalOptima::from_designs(
                model,
                &bundled::local_d_optimal(i).runs,
                &bundled::local_d1_optimal(i).runs,
            ))
        })
        .collect()
}

#[derive(Serialize)]
struct EfficiencyRow {
    scenario: String,
    weight: f64,
    efficiency: f64,
}

pub fn efficiency(args: EfficiencyArgs) -> Outcome {
    let design = inputs::design(&args.design)?;
    let m = design.len();
    let scenario_args = ScenarioArgs {
        models: args.model.clone().or(args.scenarios.models.clone()),
        gammas: args.scenarios.gammas,
        ensemble: args.scenarios.ensemble.clone(),
    };
    let (scenarios, file_m) = inputs::scenarios(&scenario_args, &RESPONSES)?;
    if let Some(expected) = file_m.filter(|e| *e != m) {
        return Err(Failure::msg(
            DIMENSION,
            format!("ensemble expects {expected} runs but the design has {m}"),
        ));
    }
    let mut ensemble = ScenarioEnsemble::new(scenarios, bundled::initial_design(), m).map_err(ensemble_failure)?;
    let flavor = args.flavor;

    let (rows, overall, against) = if let Some(source) = &args.relative_to {
        let other = inputs::design(source)?;
        if other.len() != m {
            return Err(Failure::msg(
                DIMENSION,
                format!("designs differ in size: {m} runs against {}", other.len()),
            ));
        }
        let rows: Vec<EfficiencyRow> = ensemble
            .models()
            .iter()
            .zip(ensemble.weights())
            .map(|(model, w)| EfficiencyRow {
                scenario: model.scenario().label(),
                weight: *w,
                efficiency: model.relative(flavor, &design.runs, &other.runs),
            })
            .collect();
        (rows, None, other.label)
    } else {
        let cache = match args.optima {
            OptimaSource::Published => published_cache(&ensemble)?,
            OptimaSource::Search => {
                let config: PsoConfig = inputs::pso_config(&args.search)?;
                let mut searched = ensemble.clone();
                optimizer::build_cache(&mut searched, &config, &[]).map_err(|e| search_failure(e, CACHE))?;
                searched.cache().expect("build_cache installs the cache").to_vec()
            }
        };
        ensemble.set_cache(cache).or_exit(CACHE)?;
        let rows = (0..ensemble.len())
            .map(|i| {
                Ok(EfficiencyRow {
                    scenario: ensemble.model(i).scenario().label(),
                    weight: ensemble.weights()[i],
                    efficiency: ensemble.efficiency(i, flavor, &design.runs).or_exit(CACHE)?,
                })
            })
            .collect::<Outcome<Vec<_>>>()?;
        let overall = ensemble.phi_bayes(&design.runs, flavor).or_exit(CACHE)?;
        (rows, Some(overall), format!("locally {flavor}-optimal designs"))
    };

    println!("{flavor}-efficiency of `{}` relative to {against}", design.label);
    println!("{:<32} {:>8} {:>11}", "scenario", "weight", "efficiency");
    for r in &rows {
        println!("{:<32} {:>8.4} {:>11}", r.scenario, r.weight, percent(r.efficiency));
    }
    if let Some(v) = overall {
        println!("{:<32} {:>8} {:>11}", "weighted mean", "", percent(v));
    }
    if let Some(path) = &args.out {
        let report = json!({
            "flavor": flavor.to_string(),
            "design": design.label,
            "relative_to": against,
            "efficiencies": rows,
            "weighted_mean": overall,
        });
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn predict(args: PredictArgs) -> Outcome {
    let model = inputs::fitted_model(&args.model)?;
    let data = inputs::dataset(&args.data)?;
    let response = args.response.unwrap_or_else(|| model.response.clone());
    let observed = data.response(&response).map_err(fit_failure)?;
    let predicted = estimation::predict(&model, data.runs()).map_err(fit_failure)?;
    let residuals: Vec<f64> = predicted.iter().zip(observed).map(|(p, o)| p - o).collect();
    let value = args.metric.aggregate(&residuals);

    let rows = observed.iter().zip(&predicted).zip(&residuals).enumerate();
    match &args.out {
        Some(path) => {
            let mut wtr = csv::Writer::from_writer(create(path)?);
            wtr.write_record(["run", "observed", "predicted", "residual"]).or_exit(PARSE)?;
            for (i, ((o, p), r)) in rows {
                wtr.write_record([(i + 1).to_string(), o.to_string(), p.to_string(), r.to_string()])
                    .or_exit(PARSE)?;
            }
            wtr.flush().or_exit(PARSE)?;
        }
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{:>4} {:>14} {:>14} {:>14}", "run", "observed", "predicted", "residual").or_exit(PARSE)?;
            for (i, ((o, p), r)) in rows {
                writeln!(out, "{:>4} {o:>14.6} {p:>14.6} {r:>14.6}", i + 1).or_exit(PARSE)?;
            }
        }
    }
    println!("{} {}: {value}", response, args.metric);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_has_two_decimals() {
        assert_eq!(percent(0.80034), "80.03%");
        assert_eq!(percent(1.0), "100.00%");
    }

    #[test]
    fn empty_result_is_zero() {
        let r = empty_result("x");
        assert!(r.best_design.is_empty());
        assert_eq!(r.best_value, 0.0);
    }
}
