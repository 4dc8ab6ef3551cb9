use std::fs::File;
use std::path::Path;

use anyhow::Context;
use odex::bundled;
use odex::io::{read_dataset, read_design, EnsembleFile};
use odex::optimizer::PsoConfig;
use odex::{Dataset, Design, FittedModel, ModelSpec, Scenario};

use crate::{Failure, OrExit, Outcome, ScenarioArgs, SearchArgs, PARSE, USAGE};

fn open(path: &Path) -> Outcome<File> {
    File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .or_exit(PARSE)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    serde_json::from_reader(std::io::BufReader::new(open(path)?))
        .with_context(|| format!("{}", path.display()))
        .or_exit(PARSE)
}

/// `@ccd30`, `@ccd30+reference` and so on, or a CSV path.
pub fn dataset(source: &str) -> Outcome<Dataset> {
    if let Some(names) = source.strip_prefix('@') {
        let mut parts = names.split('+').map(|name| match name {
            "ccd30" => Ok(bundled::ccd30()),
            "reference" => Ok(bundled::reference_data()),
            "bayes" => Ok(bundled::bayes_data()),
            "validation14" => Ok(bundled::validation14()),
            _ => Err(Failure::msg(
                USAGE,
                format!("unknown bundled dataset `{name}` (expected ccd30, reference, bayes or validation14)"),
            )),
        });
        let first = parts.next().expect("split yields at least one part")?;
        return parts.try_fold(first, |acc, next| Ok(acc.concat(&next?)));
    }
    let path = Path::new(source);
    read_dataset(open(path)?)
        .with_context(|| path.display().to_string())
        .or_exit(PARSE)
}

/// `@reference`, `@local-d/temperature` and so on, or a CSV path.
pub fn design(source: &str) -> Outcome<Design> {
    if let Some(name) = source.strip_prefix('@') {
        let mut all = bundled::appendix_designs();
        return all.remove(name).ok_or_else(|| {
            let known: Vec<String> = all.into_keys().collect();
            Failure::msg(USAGE, format!("unknown bundled design `{name}` (known: {})", known.join(", ")))
        });
    }
    let path = Path::new(source);
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_design(open(path)?, &label)
        .with_context(|| path.display().to_string())
        .or_exit(PARSE)
}

pub fn bundled_index(name: &str) -> Outcome<usize> {
    bundled::model_index(name).ok_or_else(|| {
        Failure::msg(
            USAGE,
            format!("unknown bundled model `{name}` (expected one of {})", bundled::RESPONSES.join(", ")),
        )
    })
}

/// A bundled model name or a model JSON path.
pub fn model_spec(source: &str) -> Outcome<ModelSpec> {
    if let Some(spec) = bundled::model(source) {
        return Ok(spec);
    }
    let path = Path::new(source);
    if !path.exists() {
        bundled_index(source)?;
    }
    read_json(path)
}

pub fn fitted_model(path: &Path) -> Outcome<FittedModel> {
    read_json(path)
}

/// Scenarios and, for an ensemble file, its run budget.
pub fn scenarios(args: &ScenarioArgs, default_models: &[&str]) -> Outcome<(Vec<Scenario>, Option<usize>)> {
    if let Some(path) = &args.ensemble {
        let file: EnsembleFile = read_json(path)?;
        let scenarios = file
            .scenarios()
            .with_context(|| path.display().to_string())
            .or_exit(PARSE)?;
        return Ok((scenarios, Some(file.m)));
    }
    let names: Vec<String> = match &args.models {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => default_models.iter().map(|s| s.to_string()).collect(),
    };
    if names.is_empty() {
        return Err(Failure::msg(USAGE, "--models names no model"));
    }
    let indices = names.iter().map(|n| bundled_index(n)).collect::<Outcome<Vec<_>>>()?;
    let scenarios = bundled::scenarios(&indices, args.gammas).or_exit(PARSE)?;
    Ok((scenarios, None))
}

pub fn pso_config(args: &SearchArgs) -> Outcome<PsoConfig> {
    let mut config: PsoConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => PsoConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(swarm) = args.swarm {
        config.swarm_size = swarm;
    }
    if let Some(iters) = args.iters {
        config.iterations = iters;
    }
    if let Some(restarts) = args.restarts {
        config.restarts = restarts;
    }
    config.validate().or_exit(USAGE)?;
    Ok(config)
}
