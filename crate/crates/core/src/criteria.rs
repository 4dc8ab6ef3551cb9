//! Design criteria for the later-day runs `X⁽²⁾` given a fixed initial block
//! `X⁽¹⁾`: `Φ_D`, `Φ_D₁`, their efficiencies against locally optimal designs,
//! Bayesian averages over a weighted scenario set, and the α-compromise.
//!
//! Infeasible designs (a nonpositive predictor under an identity or inverse
//! link) and singular designs score exactly `0` under every criterion, so an
//! optimizer always sees a totally ordered objective.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::information::{accumulate_run, Design, InfoMatrix};
use crate::model::{ModelError, ModelSpec, ParamPoint, Run};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriteriaError {
    #[error("locally optimal values have not been computed for this ensemble")]
    MissingCache,
    #[error("scenario {index} has no cached optimum for {flavor}")]
    CacheEntry { index: usize, flavor: Flavor },
    #[error("cache has {got} entries for {expected} scenarios")]
    CacheSize { expected: usize, got: usize },
    #[error("scenario weight must be positive, got {0}")]
    InvalidWeight(f64),
    #[error("ensemble has no scenarios")]
    EmptyEnsemble,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("initial design is infeasible for scenario `{scenario}`: {source}")]
    InfeasibleInitial { scenario: String, source: ModelError },
    #[error("initial design must contain only initial-day runs")]
    InitialDay,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which single-scenario criterion to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    /// `|I|^{1/(p+1)}`: estimation of all parameters including `γ`.
    D,
    /// `(eᵀ I⁻¹ e)⁻¹` for the `γ` coordinate: testing for a day effect.
    D1,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::D => "D",
            Flavor::D1 => "D1",
        })
    }
}

impl FromStr for Flavor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D" | "d" => Ok(Flavor::D),
            "D1" | "d1" => Ok(Flavor::D1),
            _ => Err(format!("unknown criterion flavor `{s}` (expected D or D1)")),
        }
    }
}

/// One atom `s = (g, z, β, γ)` of a discrete prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ModelSpec,
    pub params: ParamPoint,
    pub weight: f64,
}

impl Scenario {
    pub fn new(spec: ModelSpec, params: ParamPoint, weight: f64) -> Result<Self, CriteriaError> {
        spec.check_params(&params)?;
        if params.gamma.is_none() {
            return Err(ModelError::MissingGamma.into());
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(CriteriaError::InvalidWeight(weight));
        }
        Ok(Self {
            spec,
            params,
            weight,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma.expect("validated on construction")
    }

    pub fn label(&self) -> String {
        format!("{} (gamma={})", self.spec.name(), self.gamma())
    }
}

/// A scenario with the information of the initial block precomputed, so
/// each evaluation only adds the `m` later-day summands.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    scenario: Scenario,
    base: InfoMatrix,
}

impl ScenarioModel {
    pub fn new(scenario: Scenario, initial: &Design) -> Result<Self, CriteriaError> {
        let dim = scenario.spec.num_terms() + 1;
        let mut base = InfoMatrix::zeros(dim);
        let mut z = vec![0.0; dim];
        for run in &initial.runs {
            accumulate_run(
                &scenario.spec,
                &scenario.params.beta,
                scenario.params.gamma,
                run,
                &mut z,
                &mut base,
            )
            .map_err(|source| CriteriaError::InfeasibleInitial {
                scenario: scenario.label(),
                source,
            })?;
        }
        Ok(Self { scenario, base })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// `p(s) + 1`.
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Day-effect information of `(X⁽¹⁾, new_runs)`.
    pub fn information(&self, new_runs: &[Run]) -> Result<InfoMatrix, ModelError> {
        let mut info = self.base.clone();
        let mut z = vec![0.0; self.dim()];
        for run in new_runs {
            accumulate_run(
                &self.scenario.spec,
                &self.scenario.params.beta,
                self.scenario.params.gamma,
                run,
                &mut z,
                &mut info,
            )?;
        }
        Ok(info)
    }

    /// `|I((X⁽¹⁾, X⁽²⁾), s)|^{1/(p(s)+1)}`.
    pub fn phi_d(&self, new_runs: &[Run]) -> f64 {
        match self.information(new_runs) {
            Ok(info) => {
                let ld = info.log_det();
                if ld == f64::NEG_INFINITY {
                    0.0
                } else {
                    (ld / self.dim() as f64).exp()
                }
            }
            Err(_) => 0.0,
        }
    }

    /// `(e_{p+1}ᵀ I⁻¹ e_{p+1})⁻¹`.
    pub fn phi_d1(&self, new_runs: &[Run]) -> f64 {
        match self.information(new_runs) {
            Ok(info) => info.inv_quadratic_form(self.dim() - 1),
            Err(_) => 0.0,
        }
    }

    pub fn phi(&self, flavor: Flavor, new_runs: &[Run]) -> f64 {
        match flavor {
            Flavor::D => self.phi_d(new_runs),
            Flavor::D1 => self.phi_d1(new_runs),
        }
    }

    /// `Φ(new_runs) / Φ(reference)` under one scenario; `0` if the reference
    /// scores `0`.
    pub fn relative(&self, flavor: Flavor, new_runs: &[Run], reference: &[Run]) -> f64 {
        let denom = self.phi(flavor, reference);
        if denom > 0.0 {
            self.phi(flavor, new_runs) / denom
        } else {
            0.0
        }
    }
}

/// Cached locally optimal criterion values for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptima {
    /// `Φ_D` at the locally D-optimal design.
    pub d_optimum: f64,
    /// `Φ_D₁` at the locally D₁-optimal design.
    pub d1_optimum: f64,
    /// `Φ_D₁` at the locally D-optimal design.
    pub d1_at_d_optimum: f64,
}

impl LocalOptima {
    /// Evaluates given (e.g. published) locally optimal designs.
    pub fn from_designs(model: &ScenarioModel, d_optimal: &[Run], d1_optimal: &[Run]) -> Self {
        Self {
            d_optimum: model.phi_d(d_optimal),
            d1_optimum: model.phi_d1(d1_optimal),
            d1_at_d_optimum: model.phi_d1(d_optimal),
        }
    }

    fn is_valid(&self) -> bool {
        [self.d_optimum, self.d1_optimum, self.d1_at_d_optimum]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
    }
}

/// Per-scenario efficiencies of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEfficiency {
    pub scenario: String,
    pub weight: f64,
    pub eff_d: f64,
    pub eff_d1: f64,
}

/// A weighted finite set of scenarios sharing one initial design and run
/// budget `m`.
///
/// The optima cache is written once (see [`ScenarioEnsemble::set_cache`])
/// and only read afterwards.
#[derive(Debug, Clone)]
pub struct ScenarioEnsemble {
    models: Vec<ScenarioModel>,
    weights: Vec<f64>,
    initial: Design,
    m: usize,
    cache: Option<Vec<LocalOptima>>,
}

impl ScenarioEnsemble {
    pub fn new(scenarios: Vec<Scenario>, initial: Design, m: usize) -> Result<Self, CriteriaError> {
        if scenarios.is_empty() {
            return Err(CriteriaError::EmptyEnsemble);
        }
        if initial.later_runs().next().is_some() {
            return Err(CriteriaError::InitialDay);
        }
        let total: f64 = scenarios.iter().map(|s| s.weight).sum();
        let weights = scenarios.iter().map(|s| s.weight / total).collect();
        let models = scenarios
            .into_iter()
            .map(|s| ScenarioModel::new(s, &initial))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            models,
            weights,
            initial,
            m,
            cache: None,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ScenarioModel] {
        &self.models
    }

    pub fn model(&self, index: usize) -> &ScenarioModel {
        &self.models[index]
    }

    /// Normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn initial_design(&self) -> &Design {
        &self.initial
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cache(&self) -> Option<&[LocalOptima]> {
        self.cache.as_deref()
    }

    pub fn set_cache(&mut self, cache: Vec<LocalOptima>) -> Result<(), CriteriaError> {
        if cache.len() != self.models.len() {
            return Err(CriteriaError::CacheSize {
                expected: self.models.len(),
                got: cache.len(),
            });
        }
        for (index, entry) in cache.iter().enumerate() {
            if !entry.is_valid() {
                let flavor = if entry.d_optimum > 0.0 { Flavor::D1 } else { Flavor::D };
                return Err(CriteriaError::CacheEntry { index, flavor });
            }
        }
        self.cache = Some(cache);
        Ok(())
    }

    fn optima(&self, index: usize) -> Result<&LocalOptima, CriteriaError> {
        self.cache
            .as_ref()
            .map(|c| &c[index])
            .ok_or(CriteriaError::MissingCache)
    }

    pub fn phi_d(&self, index: usize, new_runs: &[Run]) -> f64 {
        self.models[index].phi_d(new_runs)
    }

    pub fn phi_d1(&self, index: usize, new_runs: &[Run]) -> f64 {
        self.models[index].phi_d1(new_runs)
    }

    /// `Φ_D(X⁽²⁾|s) / Φ_D(X*⁽²⁾_s|s)`.
    pub fn eff_d(&self, index: usize, new_runs: &[Run]) -> Result<f64, CriteriaError> {
        Ok(self.phi_d(index, new_runs) / self.optima(index)?.d_optimum)
    }

    /// `Φ_D₁(X⁽²⁾|s) / Φ_D₁(X*⁽²⁾_s|s)` against the locally D₁-optimal design.
    pub fn eff_d1(&self, index: usize, new_runs: &[Run]) -> Result<f64, CriteriaError> {
        Ok(self.phi_d1(index, new_runs) / self.optima(index)?.d1_optimum)
    }

    /// `Φ_D₁` relative to its value at the locally D-optimal design.
    pub fn d1_ratio_to_d_optimum(&self, index: usize, new_runs: &[Run]) -> Result<f64, CriteriaError> {
        Ok(self.phi_d1(index, new_runs) / self.optima(index)?.d1_at_d_optimum)
    }

    pub fn efficiency(&self, index: usize, flavor: Flavor, new_runs: &[Run]) -> Result<f64, CriteriaError> {
        match flavor {
            Flavor::D => self.eff_d(index, new_runs),
            Flavor::D1 => self.eff_d1(index, new_runs),
        }
    }

    /// `Φ_B` (flavor D) or `Φ_B₁` (flavor D1): the weighted mean efficiency.
    pub fn phi_bayes(&self, new_runs: &[Run], flavor: Flavor) -> Result<f64, CriteriaError> {
        let mut total = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            total += w * self.efficiency(i, flavor, new_runs)?;
        }
        Ok(total)
    }

    /// `α Φ_B + (1 − α) Φ_B₁`.
    pub fn phi_compromise(&self, new_runs: &[Run], alpha: f64) -> Result<f64, CriteriaError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CriteriaError::InvalidAlpha(alpha));
        }
        Ok(alpha * self.phi_bayes(new_runs, Flavor::D)?
            + (1.0 - alpha) * self.phi_bayes(new_runs, Flavor::D1)?)
    }

    pub fn efficiencies(&self, new_runs: &[Run]) -> Result<Vec<ScenarioEfficiency>, CriteriaError> {
        (0..self.len())
            .map(|i| {
                Ok(ScenarioEfficiency {
                    scenario: self.models[i].scenario().label(),
                    weight: self.weights[i],
                    eff_d: self.eff_d(i, new_runs)?,
                    eff_d1: self.eff_d1(i, new_runs)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Day, Factor, Link, Term};

    fn toy_spec(link: Link) -> ModelSpec {
        use Factor::*;
        ModelSpec::new("toy", link, vec![L, K], vec![Term::Intercept, Term::Main(L), Term::Main(K)])
            .unwrap()
    }

    fn initial() -> Design {
        Design::from_coords(
            "init",
            &[
                [-1.0, -1.0, 0.0, 0.0],
                [1.0, -1.0, 0.0, 0.0],
                [-1.0, 1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0],
            ],
            Day::Initial,
        )
        .unwrap()
    }

    fn later(coords: &[[f64; 4]]) -> Vec<Run> {
        coords.iter().map(|c| Run::later(*c).unwrap()).collect()
    }

    #[test]
    fn no_new_runs_scores_zero() {
        let s = Scenario::new(toy_spec(Link::Log), ParamPoint::new(vec![1.0, 0.1, 0.1], Some(0.2)), 1.0)
            .unwrap();
        let model = ScenarioModel::new(s, &initial()).unwrap();
        assert_eq!(model.phi_d(&[]), 0.0);
        assert_eq!(model.phi_d1(&[]), 0.0);
        assert!(model.phi_d(&later(&[[2.0, 2.0, 0.0, 0.0]])) > 0.0);
    }

    #[test]
    fn infeasible_new_run_scores_zero() {
        let s = Scenario::new(
            toy_spec(Link::Identity),
            ParamPoint::new(vec![1.0, 0.1, 0.1], Some(-3.0)),
            1.0,
        )
        .unwrap();
        let model = ScenarioModel::new(s, &initial()).unwrap();
        let runs = later(&[[0.0, 0.0, 0.0, 0.0]]);
        assert_eq!(model.phi_d(&runs), 0.0);
        assert_eq!(model.phi_d1(&runs), 0.0);
    }

    #[test]
    fn missing_cache_is_reported() {
        let s = Scenario::new(toy_spec(Link::Log), ParamPoint::new(vec![1.0, 0.1, 0.1], Some(0.2)), 1.0)
            .unwrap();
        let ens = ScenarioEnsemble::new(vec![s], initial(), 1).unwrap();
        let runs = later(&[[2.0, 2.0, 0.0, 0.0]]);
        assert_eq!(ens.eff_d(0, &runs), Err(CriteriaError::MissingCache));
        assert_eq!(ens.phi_bayes(&runs, Flavor::D1), Err(CriteriaError::MissingCache));
    }

    #[test]
    fn cache_rejects_nonpositive_entries() {
        let s = Scenario::new(toy_spec(Link::Log), ParamPoint::new(vec![1.0, 0.1, 0.1], Some(0.2)), 1.0)
            .unwrap();
        let mut ens = ScenarioEnsemble::new(vec![s], initial(), 1).unwrap();
        let bad = LocalOptima {
            d_optimum: 1.0,
            d1_optimum: 0.0,
            d1_at_d_optimum: 1.0,
        };
        assert!(ens.set_cache(vec![bad]).is_err());
        assert!(ens.set_cache(vec![]).is_err());
    }

    #[test]
    fn compromise_rejects_bad_alpha() {
        let s = Scenario::new(toy_spec(Link::Log), ParamPoint::new(vec![1.0, 0.1, 0.1], Some(0.2)), 1.0)
            .unwrap();
        let mut ens = ScenarioEnsemble::new(vec![s], initial(), 1).unwrap();
        let runs = later(&[[2.0, 2.0, 0.0, 0.0]]);
        let opt = LocalOptima::from_designs(ens.model(0), &runs, &runs);
        ens.set_cache(vec![opt]).unwrap();
        assert!(ens.phi_compromise(&runs, 1.5).is_err());
        assert!((ens.eff_d(0, &runs).unwrap() - 1.0).abs() < 1e-15);
        assert!((ens.eff_d1(0, &runs).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scenario_requires_gamma_and_weight() {
        let spec = toy_spec(Link::Log);
        assert!(Scenario::new(spec.clone(), ParamPoint::new(vec![1.0, 0.0, 0.0], None), 1.0).is_err());
        assert!(Scenario::new(spec, ParamPoint::new(vec![1.0, 0.0, 0.0], Some(0.1)), 0.0).is_err());
    }
}
