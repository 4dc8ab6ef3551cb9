//! Maximum-likelihood fitting of Gamma GLMs by Fisher scoring, plus
//! prediction and the prediction-error and observed-efficiency summaries.
//!
//! Conventions:
//! - `β̂` maximizes the likelihood (it does not depend on `ν`).
//! - `ν̂` maximizes the profile likelihood given `β̂`.
//! - Standard errors are `sqrt(diag(φ̂ (XᵀWX)⁻¹))` with the Pearson
//!   dispersion `φ̂ = Σ((y−μ̂)/μ̂)² / (n − k)`, `k` being the number of
//!   linear-predictor coefficients.
//! - `BIC = −2ℓ(β̂, ν̂) + (k + 1) log n`; the `+1` counts the shape.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::linalg::{SymMatrix, DEFAULT_PIVOT_TOLERANCE};
use crate::model::{Day, Link, ModelError, ModelSpec, Run};

const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;
const MAX_SHAPE: f64 = 1e6;
const MIN_SHAPE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("scoring did not converge within {iterations} iterations")]
    Divergence { iterations: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("run {run}: linear predictor {eta} is outside the domain of the {link} link")]
    PredictorOutOfDomain { run: usize, eta: f64, link: Link },
    #[error("dataset has no response `{0}`")]
    UnknownResponse(String),
    #[error("{n} runs cannot identify {k} coefficients plus the shape")]
    TooFewRuns { n: usize, k: usize },
    #[error("run {run} is on a later day but the model has no day effect")]
    MissingDayEffect { run: usize },
    #[error("models are not comparable: {0}")]
    Incomparable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("row {row}: response `{response}` must be positive, got {value}")]
    NonPositive {
        row: usize,
        response: String,
        value: f64,
    },
    #[error("response `{response}` has {got} values for {expected} runs")]
    Length {
        response: String,
        expected: usize,
        got: usize,
    },
}

/// Runs with one or more positive responses per run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    runs: Vec<Run>,
    responses: BTreeMap<String, Vec<f64>>,
}

impl Dataset {
    pub fn new(runs: Vec<Run>, responses: BTreeMap<String, Vec<f64>>) -> Result<Self, DataError> {
        for (name, values) in &responses {
            if values.len() != runs.len() {
                return Err(DataError::Length {
                    response: name.clone(),
                    expected: runs.len(),
                    got: values.len(),
                });
            }
            if let Some((row, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
            {
                return Err(DataError::NonPositive {
                    row: row + 1,
                    response: name.clone(),
                    value,
                });
            }
        }
        Ok(Self { runs, responses })
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn response_names(&self) -> impl Iterator<Item = &str> {
        self.responses.keys().map(String::as_str)
    }

    pub fn response(&self, name: &str) -> Result<&[f64], FitError> {
        self.responses
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| FitError::UnknownResponse(name.to_string()))
    }

    /// Rows of `self` followed by rows of `other`; only responses present in
    /// both are kept.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut runs = self.runs.clone();
        runs.extend_from_slice(&other.runs);
        let responses = self
            .responses
            .iter()
            .filter_map(|(k, v)| {
                other.responses.get(k).map(|w| {
                    let mut all = v.clone();
                    all.extend_from_slice(w);
                    (k.clone(), all)
                })
            })
            .collect();
        Dataset { runs, responses }
    }
}

/// A fitted Gamma GLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub response: String,
    pub beta_hat: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hat: Option<f64>,
    pub nu_hat: f64,
    /// Pearson dispersion used for the covariance.
    pub dispersion: f64,
    /// Covariance of `(β̂, γ̂)`.
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub deviance: f64,
    pub n: usize,
    pub iterations: usize,
}

impl FittedModel {
    /// `(β̂, γ̂)` as one vector.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = self.beta_hat.clone();
        c.extend(self.gamma_hat);
        c
    }

    pub fn linear_predictor(&self, run: &Run) -> Result<f64, ModelError> {
        let z = self.spec.regressor(run);
        let eta: f64 = z.iter().zip(&self.beta_hat).map(|(a, b)| a * b).sum();
        match (run.day, self.gamma_hat) {
            (Day::Initial, _) => Ok(eta),
            (Day::Later, Some(g)) => Ok(eta + g),
            (Day::Later, None) => Err(ModelError::MissingGamma),
        }
    }
}

fn design_row(spec: &ModelSpec, run: &Run, with_day: bool) -> Vec<f64> {
    let mut z = spec.regressor(run);
    if with_day {
        z.push(run.day.indicator());
    }
    z
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gamma_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(y, m)| -(y / m).ln() + (y - m) / m)
        .sum::<f64>()
}

/// Gamma log-likelihood with shape `nu`.
pub fn gamma_log_likelihood(y: &[f64], mu: &[f64], nu: f64) -> f64 {
    let lg = ln_gamma(nu);
    y.iter()
        .zip(mu)
        .map(|(y, m)| nu * (nu / m).ln() + (nu - 1.0) * y.ln() - nu * y / m - lg)
        .sum()
}

/// Profile ML shape: the root of `log ν − ψ(ν) = D / (2n)`, found by
/// bisection on `log ν` over `[1e-8, 1e6]`.
pub fn shape_ml(y: &[f64], mu: &[f64]) -> f64 {
    let n = y.len() as f64;
    let target = gamma_deviance(y, mu) / (2.0 * n);
    let g = |ln_nu: f64| {
        let nu = ln_nu.exp();
        nu.ln() - digamma(nu) - target
    };
    let (mut lo, mut hi) = (MIN_SHAPE.ln(), MAX_SHAPE.ln());
    // g decreases from +inf towards 0
    if g(hi) >= 0.0 {
        return MAX_SHAPE;
    }
    if g(lo) <= 0.0 {
        return MIN_SHAPE;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

struct State {
    eta: Vec<f64>,
    mu: Vec<f64>,
    deviance: f64,
}

fn evaluate(x: &[Vec<f64>], y: &[f64], link: Link, beta: &[f64]) -> Result<State, FitError> {
    let eta: Vec<f64> = x.iter().map(|row| dot(row, beta)).collect();
    let mu = eta
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            link.mean(e)
                .ok()
                .filter(|m| m.is_finite() && *m > 0.0)
                .ok_or(FitError::PredictorOutOfDomain { run: i + 1, eta: e, link })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let deviance = gamma_deviance(y, &mu);
    if !deviance.is_finite() {
        return Err(FitError::Divergence { iterations: 0 });
    }
    Ok(State { eta, mu, deviance })
}

fn weighted_normal_equations(x: &[Vec<f64>], weights: &[f64], target: &[f64]) -> (SymMatrix, Vec<f64>) {
    let k = x[0].len();
    let mut xtwx = SymMatrix::zeros(k);
    let mut xtwz = vec![0.0; k];
    for ((row, w), t) in x.iter().zip(weights).zip(target) {
        xtwx.add_rank_one(*w, row);
        for (acc, v) in xtwz.iter_mut().zip(row) {
            *acc += w * v * t;
        }
    }
    (xtwx, xtwz)
}

fn solve(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>, FitError> {
    a.ldl(DEFAULT_PIVOT_TOLERANCE)
        .map(|f| f.solve(b))
        .ok_or(FitError::RankDeficient)
}

fn starting_values(x: &[Vec<f64>], y: &[f64], link: Link) -> Result<Vec<f64>, FitError> {
    let ones = vec![1.0; y.len()];
    let gy: Vec<f64> = y.iter().map(|v| link.link(*v)).collect();
    let (xtx, xty) = weighted_normal_equations(x, &ones, &gy);
    let beta = solve(&xtx, &xty)?;
    if evaluate(x, y, link, &beta).is_ok() {
        return Ok(beta);
    }
    // fall back to the constant-mean model
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut beta = vec![0.0; x[0].len()];
    beta[0] = link.link(mean);
    Ok(beta)
}

/// Fits `spec` to `response` by Fisher scoring with step-halving.
pub fn fit(
    spec: &ModelSpec,
    data: &Dataset,
    response: &str,
    include_day_effect: bool,
) -> Result<FittedModel, FitError> {
    let y = data.response(response)?;
    if !include_day_effect {
        if let Some(i) = data.runs().iter().position(|r| r.day == Day::Later) {
            return Err(FitError::MissingDayEffect { run: i + 1 });
        }
    }
    let x: Vec<Vec<f64>> = data
        .runs()
        .iter()
        .map(|r| design_row(spec, r, include_day_effect))
        .collect();
    let n = y.len();
    let k = spec.num_terms() + usize::from(include_day_effect);
    if n < k + 1 {
        return Err(FitError::TooFewRuns { n, k });
    }
    let link = spec.link();

    let mut beta = starting_values(&x, y, link)?;
    let mut state = evaluate(&x, y, link, &beta)?;
    // rounding noise of the deviance sum
    let noise = 64.0 * n as f64 * f64::EPSILON;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let weights: Vec<f64> = state
            .eta
            .iter()
            .map(|e| link.info_weight(*e).expect("state is in the link domain"))
            .collect();
        let working: Vec<f64> = (0..n)
            .map(|i| state.eta[i] + (y[i] - state.mu[i]) / link.mean_derivative(state.eta[i]))
            .collect();
        let (xtwx, xtwz) = weighted_normal_equations(&x, &weights, &working);
        let proposal = solve(&xtwx, &xtwz)?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&proposal)
                .map(|(b, p)| b + step * (p - b))
                .collect();
            if let Ok(next) = evaluate(&x, y, link, &candidate) {
                if next.deviance <= state.deviance * (1.0 + 1e-12) + noise {
                    accepted = Some((candidate, next));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            return Err(FitError::Divergence { iterations });
        };
        let change = (state.deviance - next.deviance).abs();
        let max_step = beta
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a - b).abs() / (a.abs() + 1e-8))
            .fold(0.0, f64::max);
        beta = candidate;
        state = next;
        let flat = change <= 1e-14 * state.deviance.abs() + noise;
        if max_step < 1e-13 || (flat && max_step < 1e-9) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::Divergence { iterations });
    }

    let weights: Vec<f64> = state
        .eta
        .iter()
        .map(|e| link.info_weight(*e).expect("state is in the link domain"))
        .collect();
    let (xtwx, _) = weighted_normal_equations(&x, &weights, &vec![0.0; n]);
    let unscaled = xtwx
        .inverse(DEFAULT_PIVOT_TOLERANCE)
        .ok_or(FitError::RankDeficient)?;
    let pearson: f64 = y
        .iter()
        .zip(&state.mu)
        .map(|(y, m)| ((y - m) / m).powi(2))
        .sum();
    let dispersion = pearson / (n - k) as f64;
    let mut covariance = unscaled;
    covariance.scale(dispersion);
    let std_errors = (0..k).map(|i| covariance.get(i, i).sqrt()).collect();

    let nu_hat = shape_ml(y, &state.mu);
    let log_likelihood = gamma_log_likelihood(y, &state.mu, nu_hat);
    let bic = -2.0 * log_likelihood + (k as f64 + 1.0) * (n as f64).ln();

    let (beta_hat, gamma_hat) = if include_day_effect {
        (beta[..k - 1].to_vec(), Some(beta[k - 1]))
    } else {
        (beta, None)
    };
    Ok(FittedModel {
        spec: spec.clone(),
        response: response.to_string(),
        beta_hat,
        gamma_hat,
        nu_hat,
        dispersion,
        covariance: covariance.to_rows(),
        std_errors,
        log_likelihood,
        bic,
        deviance: state.deviance,
        n,
        iterations,
    })
}

/// Score `∂ℓ/∂(β, γ)` per unit shape: `Σ (y−μ)/μ² · dμ/dη · z*`.
pub fn score(model: &FittedModel, data: &Dataset) -> Result<Vec<f64>, FitError> {
    let y = data.response(&model.response)?;
    let with_day = model.gamma_hat.is_some();
    let link = model.spec.link();
    let mut s = vec![0.0; model.beta_hat.len() + usize::from(with_day)];
    for (i, run) in data.runs().iter().enumerate() {
        let eta = model
            .linear_predictor(run)
            .map_err(|_| FitError::MissingDayEffect { run: i + 1 })?;
        let mu = link
            .mean(eta)
            .map_err(|_| FitError::PredictorOutOfDomain { run: i + 1, eta, link })?;
        let factor = (y[i] - mu) / (mu * mu) * link.mean_derivative(eta);
        for (acc, z) in s.iter_mut().zip(design_row(&model.spec, run, with_day)) {
            *acc += factor * z;
        }
    }
    Ok(s)
}

/// Log-likelihood at arbitrary coefficients `(β, γ)` and shape `nu`.
pub fn log_likelihood_at(
    spec: &ModelSpec,
    data: &Dataset,
    response: &str,
    coefficients: &[f64],
    nu: f64,
) -> Result<f64, FitError> {
    let y = data.response(response)?;
    let with_day = coefficients.len() == spec.num_terms() + 1;
    let x: Vec<Vec<f64>> = data
        .runs()
        .iter()
        .map(|r| design_row(spec, r, with_day))
        .collect();
    let state = evaluate(&x, y, spec.link(), coefficients)?;
    Ok(gamma_log_likelihood(y, &state.mu, nu))
}

/// `μ̂ = g⁻¹(zᵀβ̂ + tγ̂)` for every run.
pub fn predict(model: &FittedModel, runs: &[Run]) -> Result<Vec<f64>, FitError> {
    let link = model.spec.link();
    runs.iter()
        .enumerate()
        .map(|(i, run)| {
            let eta = model
                .linear_predictor(run)
                .map_err(|_| FitError::MissingDayEffect { run: i + 1 })?;
            link.mean(eta)
                .map_err(|_| FitError::PredictorOutOfDomain { run: i + 1, eta, link })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Rmse,
    Mae,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::Rmse, Metric::Mae];

    pub fn aggregate(self, residuals: &[f64]) -> f64 {
        let n = residuals.len() as f64;
        match self {
            Metric::Mse => residuals.iter().map(|r| r * r).sum::<f64>() / n,
            Metric::Rmse => Metric::Mse.aggregate(residuals).sqrt(),
            Metric::Mae => residuals.iter().map(|r| r.abs()).sum::<f64>() / n,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mse => "mse",
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
        })
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Metric::Mse),
            "rmse" => Ok(Metric::Rmse),
            "mae" => Ok(Metric::Mae),
            _ => Err(format!("unknown metric `{s}` (expected mse, rmse or mae)")),
        }
    }
}

/// Predicted minus observed, per run.
pub fn residuals(model: &FittedModel, data: &Dataset, response: &str) -> Result<Vec<f64>, FitError> {
    let observed = data.response(response)?;
    Ok(predict(model, data.runs())?
        .iter()
        .zip(observed)
        .map(|(p, o)| p - o)
        .collect())
}

pub fn prediction_error(
    model: &FittedModel,
    data: &Dataset,
    response: &str,
    metric: Metric,
) -> Result<f64, FitError> {
    Ok(metric.aggregate(&residuals(model, data, response)?))
}

/// `(det Cov_b / det Cov_a)^{1/dim}`: the empirical D-efficiency of the
/// design behind `fit_a` relative to the one behind `fit_b`.
pub fn observed_efficiency(fit_a: &FittedModel, fit_b: &FittedModel) -> Result<f64, FitError> {
    if fit_a.spec != fit_b.spec {
        return Err(FitError::Incomparable("different model specifications".into()));
    }
    if fit_a.covariance.len() != fit_b.covariance.len() {
        return Err(FitError::Incomparable("different day-effect structure".into()));
    }
    let dim = fit_a.covariance.len() as f64;
    let la = SymMatrix::from_rows(&fit_a.covariance).log_det(DEFAULT_PIVOT_TOLERANCE);
    let lb = SymMatrix::from_rows(&fit_b.covariance).log_det(DEFAULT_PIVOT_TOLERANCE);
    if !la.is_finite() || !lb.is_finite() {
        return Err(FitError::RankDeficient);
    }
    Ok(((lb - la) / dim).exp())
}
