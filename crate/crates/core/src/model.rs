//! Gamma GLM building blocks: links, quadratic response-surface terms,
//! model specifications, parameter points and experimental runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-width of the coded design box `[-2, 2]`.
pub const BOX_LIMIT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("run is on the later day but the parameter point has no day effect")]
    MissingGamma,
    #[error("linear predictor {eta} is not positive under the {link} link")]
    InvalidPredictor { link: Link, eta: f64 },
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("coefficient vector has length {got}, model has {expected} terms")]
    BetaLength { expected: usize, got: usize },
    #[error("shape parameter must be positive, got {0}")]
    InvalidShape(f64),
    #[error("coordinate {value} of factor {factor} is outside [-2, 2]")]
    OutOfBox { factor: Factor, value: f64 },
    #[error("day flag must be 0 or 1, got {0}")]
    InvalidDay(i64),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
}

/// Link function `g` with `g(E[Y|x]) = zᵀβ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    /// Canonical link, `g(μ) = 1/μ`.
    Inverse,
    Log,
}

impl Link {
    pub const ALL: [Link; 3] = [Link::Identity, Link::Inverse, Link::Log];

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Inverse => "inverse",
            Link::Log => "log",
        }
    }

    fn check(self, eta: f64) -> Result<(), ModelError> {
        match self {
            Link::Log => Ok(()),
            _ if eta > 0.0 => Ok(()),
            _ => Err(ModelError::InvalidPredictor { link: self, eta }),
        }
    }

    /// `g(μ)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Identity => mu,
            Link::Inverse => 1.0 / mu,
            Link::Log => mu.ln(),
        }
    }

    /// `g⁻¹(η)`; identity and inverse links require `η > 0`.
    pub fn mean(self, eta: f64) -> Result<f64, ModelError> {
        self.check(eta)?;
        Ok(match self {
            Link::Identity => eta,
            Link::Inverse => 1.0 / eta,
            Link::Log => eta.exp(),
        })
    }

    /// `dμ/dη` at `η`.
    pub fn mean_derivative(self, eta: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Inverse => -1.0 / (eta * eta),
            Link::Log => eta.exp(),
        }
    }

    /// Gamma information weight `((log g⁻¹)'(η))²`: `1/η²` for the identity and
    /// inverse links, `1` for the log link.
    #[inline]
    pub fn info_weight(self, eta: f64) -> Result<f64, ModelError> {
        self.check(eta)?;
        Ok(match self {
            Link::Identity | Link::Inverse => 1.0 / (eta * eta),
            Link::Log => 1.0,
        })
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Link::Identity),
            "inverse" | "canonical" => Ok(Link::Inverse),
            "log" => Ok(Link::Log),
            _ => Err(ModelError::UnknownLink(s.to_string())),
        }
    }
}

/// Process parameters. Every run carries a coordinate for each of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    /// Ratio of kerosine to oxygen.
    L,
    /// Amount of kerosine.
    K,
    /// Stand-off distance.
    D,
    /// Feeder disc velocity.
    #[serde(rename = "FDV")]
    Fdv,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::L, Factor::K, Factor::D, Factor::Fdv];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::L => "L",
            Factor::K => "K",
            Factor::D => "D",
            Factor::Fdv => "FDV",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(Factor::L),
            "K" => Ok(Factor::K),
            "D" => Ok(Factor::D),
            "FDV" => Ok(Factor::Fdv),
            _ => Err(ModelError::UnknownFactor(s.to_string())),
        }
    }
}

/// One monomial of the quadratic response surface.
///
/// Serialized as `["intercept"]`, `["main","K"]`, `["square","K"]` or
/// `["interaction","D","FDV"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub enum Term {
    Intercept,
    Main(Factor),
    Square(Factor),
    /// Stored with the factors in global order, so `(a, b)` and `(b, a)` coincide.
    Interaction(Factor, Factor),
}

impl Term {
    pub fn interaction(a: Factor, b: Factor) -> Result<Self, ModelError> {
        if a == b {
            return Err(ModelError::InvalidSpec(format!(
                "interaction of {a} with itself; use a square term"
            )));
        }
        Ok(Term::Interaction(a.min(b), a.max(b)))
    }

    #[inline]
    pub fn eval(&self, coords: &[f64; Factor::COUNT]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Main(f) => coords[f.index()],
            Term::Square(f) => coords[f.index()] * coords[f.index()],
            Term::Interaction(a, b) => coords[a.index()] * coords[b.index()],
        }
    }

    pub fn factors(&self) -> Vec<Factor> {
        match *self {
            Term::Intercept => vec![],
            Term::Main(f) | Term::Square(f) => vec![f],
            Term::Interaction(a, b) => vec![a, b],
        }
    }

    pub fn label(&self) -> String {
        match self {
            Term::Intercept => "(Intercept)".to_string(),
            Term::Main(f) => f.to_string(),
            Term::Square(f) => format!("{f}^2"),
            Term::Interaction(a, b) => format!("{a}*{b}"),
        }
    }
}

impl TryFrom<Vec<String>> for Term {
    type Error = ModelError;
    fn try_from(parts: Vec<String>) -> Result<Self, Self::Error> {
        let bad = || ModelError::InvalidSpec(format!("malformed term {parts:?}"));
        match parts.first().map(String::as_str) {
            Some("intercept") if parts.len() == 1 => Ok(Term::Intercept),
            Some("main") if parts.len() == 2 => Ok(Term::Main(parts[1].parse()?)),
            Some("square") if parts.len() == 2 => Ok(Term::Square(parts[1].parse()?)),
            Some("interaction") if parts.len() == 3 => {
                Term::interaction(parts[1].parse()?, parts[2].parse()?)
            }
            _ => Err(bad()),
        }
    }
}

impl From<Term> for Vec<String> {
    fn from(t: Term) -> Self {
        match t {
            Term::Intercept => vec!["intercept".into()],
            Term::Main(f) => vec!["main".into(), f.name().into()],
            Term::Square(f) => vec!["square".into(), f.name().into()],
            Term::Interaction(a, b) => {
                vec!["interaction".into(), a.name().into(), b.name().into()]
            }
        }
    }
}

/// A link plus an ordered list of quadratic-surface terms over a subset of
/// the factors. The first term is always the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec")]
pub struct ModelSpec {
    name: String,
    link: Link,
    factors: Vec<Factor>,
    terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawModelSpec {
    name: String,
    link: Link,
    factors: Vec<Factor>,
    terms: Vec<Term>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = ModelError;
    fn try_from(raw: RawModelSpec) -> Result<Self, Self::Error> {
        ModelSpec::new(raw.name, raw.link, raw.factors, raw.terms)
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        link: Link,
        factors: Vec<Factor>,
        terms: Vec<Term>,
    ) -> Result<Self, ModelError> {
        if terms.first() != Some(&Term::Intercept) {
            return Err(ModelError::InvalidSpec(
                "the first term must be the intercept".into(),
            ));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(ModelError::InvalidSpec(format!(
                    "duplicate term {}",
                    t.label()
                )));
            }
            if let Some(f) = t.factors().into_iter().find(|f| !factors.contains(f)) {
                return Err(ModelError::InvalidSpec(format!(
                    "term {} uses factor {f} which the model does not list",
                    t.label()
                )));
            }
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].contains(f) {
                return Err(ModelError::InvalidSpec(format!("duplicate factor {f}")));
            }
        }
        Ok(Self {
            name: name.into(),
            link,
            factors,
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of regression coefficients `p(s)`.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Same terms, different link.
    pub fn with_link(&self, link: Link) -> Self {
        Self {
            link,
            ..self.clone()
        }
    }

    /// Regression vector `z(x)`. Coordinates of factors the model does not
    /// use never enter any term.
    pub fn regressor(&self, run: &Run) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        self.regressor_into(&run.coords, &mut out);
        out
    }

    #[inline]
    pub fn regressor_into(&self, coords: &[f64; Factor::COUNT], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(coords);
        }
    }

    /// `zᵀβ`, plus `γ` for later-day runs.
    pub fn linear_predictor(&self, params: &ParamPoint, run: &Run) -> Result<f64, ModelError> {
        self.check_params(params)?;
        let base: f64 = self
            .terms
            .iter()
            .zip(&params.beta)
            .map(|(t, b)| t.eval(&run.coords) * b)
            .sum();
        match run.day {
            Day::Initial => Ok(base),
            Day::Later => params
                .gamma
                .map(|g| base + g)
                .ok_or(ModelError::MissingGamma),
        }
    }

    pub fn check_params(&self, params: &ParamPoint) -> Result<(), ModelError> {
        if params.beta.len() != self.terms.len() {
            return Err(ModelError::BetaLength {
                expected: self.terms.len(),
                got: params.beta.len(),
            });
        }
        Ok(())
    }
}

/// Coefficients `β`, an optional day effect `γ` and the Gamma shape `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_shape")]
    pub nu: f64,
}

fn default_shape() -> f64 {
    1.0
}

impl ParamPoint {
    pub fn new(beta: Vec<f64>, gamma: Option<f64>) -> Self {
        Self {
            beta,
            gamma,
            nu: 1.0,
        }
    }

    pub fn with_shape(mut self, nu: f64) -> Result<Self, ModelError> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(ModelError::InvalidShape(nu));
        }
        self.nu = nu;
        Ok(self)
    }

    /// `(cβ, cγ)`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            beta: self.beta.iter().map(|b| b * c).collect(),
            gamma: self.gamma.map(|g| g * c),
            nu: self.nu,
        }
    }
}

/// Day indicator `t`: 0 for the initial day, 1 for a later day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Day {
    #[default]
    Initial,
    Later,
}

impl Day {
    #[inline]
    pub fn indicator(self) -> f64 {
        match self {
            Day::Initial => 0.0,
            Day::Later => 1.0,
        }
    }

    pub fn from_flag(flag: i64) -> Result<Self, ModelError> {
        match flag {
            0 => Ok(Day::Initial),
            1 => Ok(Day::Later),
            other => Err(ModelError::InvalidDay(other)),
        }
    }

    pub fn flag(self) -> u8 {
        self.indicator() as u8
    }
}

/// One experimental condition: coordinates over `(L, K, D, FDV)` in
/// `[-2, 2]` and the day it is run on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub coords: [f64; Factor::COUNT],
    pub day: Day,
}

impl Run {
    pub fn new(coords: [f64; Factor::COUNT], day: Day) -> Result<Self, ModelError> {
        for (f, v) in Factor::ALL.iter().zip(coords) {
            if !(v.is_finite() && v.abs() <= BOX_LIMIT) {
                return Err(ModelError::OutOfBox { factor: *f, value: v });
            }
        }
        Ok(Self { coords, day })
    }

    pub fn initial(coords: [f64; Factor::COUNT]) -> Result<Self, ModelError> {
        Self::new(coords, Day::Initial)
    }

    pub fn later(coords: [f64; Factor::COUNT]) -> Result<Self, ModelError> {
        Self::new(coords, Day::Later)
    }

    pub fn coord(&self, f: Factor) -> f64 {
        self.coords[f.index()]
    }

    pub fn on_day(mut self, day: Day) -> Self {
        self.day = day;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temperature() -> ModelSpec {
        use Factor::*;
        ModelSpec::new(
            "temperature",
            Link::Identity,
            vec![L, K, D],
            vec![Term::Intercept, Term::Main(L), Term::Main(K), Term::Main(D), Term::Square(K)],
        )
        .unwrap()
    }

    #[test]
    fn regressor_at_center_and_corner() {
        let spec = temperature();
        let center = Run::initial([0.0; 4]).unwrap();
        assert_eq!(spec.regressor(&center), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let run = Run::initial([1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(spec.regressor(&run), vec![1.0, 1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn info_weights_per_link() {
        assert_eq!(Link::Identity.info_weight(2.0).unwrap(), 0.25);
        assert_eq!(Link::Log.info_weight(-3.7).unwrap(), 1.0);
        assert_eq!(Link::Inverse.info_weight(0.5).unwrap(), 4.0);
        assert!(matches!(
            Link::Identity.info_weight(0.0),
            Err(ModelError::InvalidPredictor { .. })
        ));
        assert!(Link::Inverse.info_weight(-1.0).is_err());
    }

    #[test]
    fn linear_predictor_day_shift() {
        let spec = temperature();
        let beta = vec![1523.2627, -17.7423, 19.6580, -13.8181, -9.9897];
        let p = ParamPoint::new(beta.clone(), Some(-16.0));
        let center = Run::initial([0.0; 4]).unwrap();
        assert!((spec.linear_predictor(&p, &center).unwrap() - 1523.2627).abs() < 1e-12);
        let later = center.on_day(Day::Later);
        assert!((spec.linear_predictor(&p, &later).unwrap() - 1507.2627).abs() < 1e-9);
        let no_gamma = ParamPoint::new(beta, None);
        assert_eq!(
            spec.linear_predictor(&no_gamma, &later),
            Err(ModelError::MissingGamma)
        );
        let zero = ParamPoint::new(vec![0.0; 5], None);
        assert_eq!(spec.linear_predictor(&zero, &center).unwrap(), 0.0);
    }

    #[test]
    fn interaction_is_unordered() {
        use Factor::*;
        assert_eq!(Term::interaction(Fdv, D).unwrap(), Term::interaction(D, Fdv).unwrap());
        assert!(Term::interaction(K, K).is_err());
    }

    #[test]
    fn spec_validation() {
        use Factor::*;
        assert!(ModelSpec::new("x", Link::Log, vec![L], vec![Term::Main(L)]).is_err());
        assert!(ModelSpec::new(
            "x",
            Link::Log,
            vec![L],
            vec![Term::Intercept, Term::Main(L), Term::Main(L)]
        )
        .is_err());
        assert!(ModelSpec::new("x", Link::Log, vec![L], vec![Term::Intercept, Term::Main(K)])
            .is_err());
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_value(temperature()).unwrap();
        assert_eq!(json["link"], "identity");
        assert_eq!(json["terms"][0], serde_json::json!(["intercept"]));
        assert_eq!(json["terms"][4], serde_json::json!(["square", "K"]));
        let back: ModelSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, temperature());
        let bad = serde_json::json!({
            "name": "x", "link": "log", "factors": ["L"], "terms": [["main", "L"]]
        });
        assert!(serde_json::from_value::<ModelSpec>(bad).is_err());
    }

    #[test]
    fn run_rejects_out_of_box() {
        assert!(Run::initial([2.0, -2.0, 0.0, 0.0]).is_ok());
        assert!(Run::initial([2.0001, 0.0, 0.0, 0.0]).is_err());
        assert!(Run::initial([f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }
}
