//! Global-best particle swarm search over the box `[-2, 2]^{m·k}` for
//! locally optimal, Bayesian and compromise augmentation designs.
//!
//! Every particle owns its own ChaCha stream (keyed by seed, restart and
//! particle index) and the swarm is updated synchronously, so a search is
//! bitwise reproducible whatever the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundled;
use crate::criteria::{CriteriaError, Flavor, LocalOptima, ScenarioEnsemble, ScenarioModel};
use crate::information::Design;
use crate::model::{Day, Factor, Run, BOX_LIMIT};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid PSO configuration: {0}")]
    InvalidConfig(String),
    #[error("could not build a thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub restarts: usize,
    pub seed: u64,
    /// A restart stops once the global best improved by less than this
    /// fraction of its magnitude over the last `stall_iterations` iterations.
    pub tolerance: f64,
    pub stall_iterations: usize,
    /// Worker threads for particle evaluation; `None` uses the global pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 100,
            iterations: 1000,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            restarts: 5,
            seed: 1,
            tolerance: 1e-9,
            stall_iterations: 100,
            threads: None,
        }
    }
}

impl PsoConfig {
    /// Budget used by the regression tests: swarm 40, 300 iterations.
    pub fn reduced() -> Self {
        Self {
            swarm_size: 40,
            iterations: 300,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |msg: &str| Err(OptimizerError::InvalidConfig(msg.to_string()));
        if self.swarm_size < 2 {
            return bad("swarm_size must be at least 2");
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return bad("inertia must lie in (0, 1)");
        }
        if !(self.cognitive > 0.0 && self.social > 0.0) {
            return bad("cognitive and social coefficients must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be nonnegative");
        }
        Ok(())
    }
}

/// Outcome of a search over flat coordinate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatResult {
    pub best_position: Vec<f64>,
    pub best_value: f64,
    /// Global-best value after initialization and after every iteration,
    /// one list per restart.
    pub history: Vec<Vec<f64>>,
    pub evaluations: u64,
}

struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    best_position: Vec<f64>,
    best_value: f64,
    rng: ChaCha8Rng,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, OptimizerError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| OptimizerError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Maximizes `objective` over `[-2, 2]^dim`. Seeds (clamped into the box)
/// occupy the first particles of every restart.
pub fn pso_flat<F>(
    objective: &F,
    dim: usize,
    config: &PsoConfig,
    seeds: &[Vec<f64>],
) -> Result<FlatResult, OptimizerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    if dim == 0 {
        return Err(OptimizerError::InvalidConfig("search dimension is zero".into()));
    }
    run_in_pool(config.threads, || pso_restarts(objective, dim, config, seeds))
}

fn pso_restarts<F>(objective: &F, dim: usize, config: &PsoConfig, seeds: &[Vec<f64>]) -> FlatResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (lo, hi) = (-BOX_LIMIT, BOX_LIMIT);
    let range = hi - lo;
    let seeds: Vec<&Vec<f64>> = seeds.iter().filter(|s| s.len() == dim).collect();
    let mut best_position = vec![0.0; dim];
    let mut best_value = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.restarts);
    let mut evaluations = 0u64;

    for restart in 0..config.restarts {
        let mut swarm: Vec<Particle> = (0..config.swarm_size)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream((restart * config.swarm_size + i) as u64);
                let position: Vec<f64> = match seeds.get(i) {
                    Some(s) => s.iter().map(|v| v.clamp(lo, hi)).collect(),
                    None => (0..dim).map(|_| rng.gen_range(lo..=hi)).collect(),
                };
                let velocity = (0..dim)
                    .map(|_| rng.gen_range(-0.25 * range..=0.25 * range))
                    .collect();
                Particle {
                    best_position: position.clone(),
                    position,
                    velocity,
                    best_value: f64::NEG_INFINITY,
                    rng,
                }
            })
            .collect();

        swarm.par_iter_mut().for_each(|p| {
            p.best_value = sanitize(objective(&p.position));
        });
        evaluations += config.swarm_size as u64;

        let (mut g_pos, mut g_val) = global_best(&swarm);
        let mut trace = vec![g_val];

        for _ in 0..config.iterations {
            let gbest = &g_pos;
            swarm.par_iter_mut().for_each(|p| {
                for d in 0..dim {
                    let r1: f64 = p.rng.gen();
                    let r2: f64 = p.rng.gen();
                    let v = config.inertia * p.velocity[d]
                        + config.cognitive * r1 * (p.best_position[d] - p.position[d])
                        + config.social * r2 * (gbest[d] - p.position[d]);
                    let v = v.clamp(-range, range);
                    let x = p.position[d] + v;
                    if x > hi || x < lo {
                        p.position[d] = x.clamp(lo, hi);
                        p.velocity[d] = 0.0;
                    } else {
                        p.position[d] = x;
                        p.velocity[d] = v;
                    }
                }
                let value = sanitize(objective(&p.position));
                if value > p.best_value {
                    p.best_value = value;
                    p.best_position.copy_from_slice(&p.position);
                }
            });
            evaluations += config.swarm_size as u64;

            let (pos, val) = global_best(&swarm);
            if val > g_val {
                g_pos = pos;
                g_val = val;
            }
            trace.push(g_val);
            let n = trace.len();
            if n > config.stall_iterations
                && g_val - trace[n - 1 - config.stall_iterations] <= config.tolerance * g_val.abs()
            {
                break;
            }
        }

        if g_val > best_value {
            best_value = g_val;
            best_position = g_pos;
        }
        history.push(trace);
    }

    FlatResult {
        best_position,
        best_value,
        history,
        evaluations,
    }
}

/// Ties go to the lowest particle index.
fn global_best(swarm: &[Particle]) -> (Vec<f64>, f64) {
    let mut best = 0;
    for (i, p) in swarm.iter().enumerate() {
        if p.best_value > swarm[best].best_value {
            best = i;
        }
    }
    (swarm[best].best_position.clone(), swarm[best].best_value)
}

/// `m` later-day runs whose coordinates on `factors` are searched; the other
/// coordinates stay at the center.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    pub m: usize,
    pub factors: Vec<Factor>,
}

impl DesignSpace {
    pub fn new(m: usize, factors: &[Factor]) -> Self {
        let mut factors = factors.to_vec();
        factors.sort();
        factors.dedup();
        Self { m, factors }
    }

    pub fn dim(&self) -> usize {
        self.m * self.factors.len()
    }

    pub fn decode(&self, x: &[f64]) -> Vec<Run> {
        let k = self.factors.len();
        (0..self.m)
            .map(|i| {
                let mut coords = [0.0; Factor::COUNT];
                for (j, f) in self.factors.iter().enumerate() {
                    coords[f.index()] = x[i * k + j].clamp(-BOX_LIMIT, BOX_LIMIT);
                }
                Run {
                    coords,
                    day: Day::Later,
                }
            })
            .collect()
    }

    /// Projects a design onto the searched coordinates; `None` if it does
    /// not have exactly `m` runs.
    pub fn encode(&self, design: &Design) -> Option<Vec<f64>> {
        if design.len() != self.m {
            return None;
        }
        Some(
            design
                .runs
                .iter()
                .flat_map(|r| self.factors.iter().map(move |f| r.coord(*f)))
                .collect(),
        )
    }

    pub fn center(&self) -> Design {
        Design::new("center", self.decode(&vec![0.0; self.dim()]))
    }

    /// Two-level corner pattern from the rows of a Sylvester–Hadamard matrix
    /// (column 0 dropped), scaled to `±2`.
    pub fn corners(&self, negate: bool) -> Design {
        let k = self.factors.len();
        let masks = self.m.next_power_of_two().max(2) - 1;
        let mut x = Vec::with_capacity(self.dim());
        for i in 0..self.m {
            for j in 0..k {
                let mask = j % masks + 1;
                let odd = ((i & mask).count_ones() % 2 == 1) ^ negate;
                x.push(if odd { -BOX_LIMIT } else { BOX_LIMIT });
            }
        }
        Design::new("corners", self.decode(&x))
    }
}

/// Best design found by a search, with its value recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_design: Design,
    pub best_value: f64,
    pub history: Vec<Vec<f64>>,
    pub evaluations: u64,
}

impl SearchResult {
    fn empty(label: &str) -> Self {
        Self {
            best_design: Design::new(label, vec![]),
            best_value: 0.0,
            history: vec![],
            evaluations: 0,
        }
    }
}

/// Maximizes a design criterion over `space`.
pub fn pso_maximize<F>(
    objective: F,
    space: &DesignSpace,
    config: &PsoConfig,
    seeds: &[Design],
    label: &str,
) -> Result<SearchResult, OptimizerError>
where
    F: Fn(&[Run]) -> f64 + Sync,
{
    if space.dim() == 0 {
        config.validate()?;
        return Ok(SearchResult {
            best_value: objective(&space.decode(&[])),
            ..SearchResult::empty(label)
        });
    }
    let flat_seeds: Vec<Vec<f64>> = seeds.iter().filter_map(|d| space.encode(d)).collect();
    let flat = pso_flat(
        &|x: &[f64]| objective(&space.decode(x)),
        space.dim(),
        config,
        &flat_seeds,
    )?;
    let runs = space.decode(&flat.best_position);
    let best_value = objective(&runs);
    Ok(SearchResult {
        best_design: Design::new(label, runs),
        best_value,
        history: flat.history,
        evaluations: flat.evaluations,
    })
}

/// Published 4-run designs, the center and two corner patterns; designs with
/// a different run count are dropped when encoded.
fn default_seeds(space: &DesignSpace, extra: &[Design]) -> Vec<Design> {
    let mut seeds = extra.to_vec();
    seeds.extend(bundled::appendix_designs().into_values());
    seeds.push(space.center());
    seeds.push(space.corners(false));
    seeds.push(space.corners(true));
    seeds
}

/// Locally D- or D₁-optimal `m`-run design for one scenario, searching only
/// the factors the scenario's model uses.
pub fn solve_local(
    model: &ScenarioModel,
    m: usize,
    flavor: Flavor,
    config: &PsoConfig,
    extra_seeds: &[Design],
) -> Result<SearchResult, OptimizerError> {
    config.validate()?;
    let label = format!("locally {flavor}-optimal: {}", model.scenario().label());
    if m == 0 {
        return Ok(SearchResult::empty(&label));
    }
    let space = DesignSpace::new(m, model.scenario().spec.factors());
    let seeds = default_seeds(&space, extra_seeds);
    pso_maximize(|runs| model.phi(flavor, runs), &space, config, &seeds, &label)
}

/// Locally optimal designs for one scenario, as stored in the cache.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub d_optimal: SearchResult,
    pub d1_optimal: SearchResult,
    pub optima: LocalOptima,
}

/// Runs `solve_local` for both flavors on every scenario and installs the
/// resulting optima in the ensemble.
pub fn build_cache(
    ensemble: &mut ScenarioEnsemble,
    config: &PsoConfig,
    extra_seeds: &[Design],
) -> Result<Vec<LocalSolution>, OptimizerError> {
    config.validate()?;
    let m = ensemble.m();
    let mut solutions = Vec::with_capacity(ensemble.len());
    for (i, model) in ensemble.models().iter().enumerate() {
        let base = config.seed.wrapping_add(2 * i as u64);
        let d = solve_local(model, m, Flavor::D, &config.with_seed(base), extra_seeds)?;
        let d1 = solve_local(model, m, Flavor::D1, &config.with_seed(base + 1), extra_seeds)?;
        let optima = LocalOptima {
            d_optimum: d.best_value,
            d1_optimum: d1.best_value,
            d1_at_d_optimum: model.phi_d1(&d.best_design.runs),
        };
        solutions.push(LocalSolution {
            d_optimal: d,
            d1_optimal: d1,
            optima,
        });
    }
    ensemble.set_cache(solutions.iter().map(|s| s.optima).collect())?;
    Ok(solutions)
}

fn ensemble_space(ensemble: &ScenarioEnsemble) -> DesignSpace {
    let factors: Vec<Factor> = ensemble
        .models()
        .iter()
        .flat_map(|m| m.scenario().spec.factors().to_vec())
        .collect();
    DesignSpace::new(ensemble.m(), &factors)
}

/// Maximizes `Φ_B` (flavor D) or `Φ_B₁` (flavor D1).
pub fn solve_bayes(
    ensemble: &ScenarioEnsemble,
    flavor: Flavor,
    config: &PsoConfig,
    extra_seeds: &[Design],
) -> Result<SearchResult, OptimizerError> {
    if ensemble.cache().is_none() {
        return Err(CriteriaError::MissingCache.into());
    }
    let space = ensemble_space(ensemble);
    let seeds = default_seeds(&space, extra_seeds);
    pso_maximize(
        |runs| ensemble.phi_bayes(runs, flavor).unwrap_or(0.0),
        &space,
        config,
        &seeds,
        &format!("Bayesian {flavor}-optimal"),
    )
}

/// Maximizes `α Φ_B + (1 − α) Φ_B₁`.
pub fn solve_compromise(
    ensemble: &ScenarioEnsemble,
    alpha: f64,
    config: &PsoConfig,
    extra_seeds: &[Design],
) -> Result<SearchResult, OptimizerError> {
    if ensemble.cache().is_none() {
        return Err(CriteriaError::MissingCache.into());
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CriteriaError::InvalidAlpha(alpha).into());
    }
    let space = ensemble_space(ensemble);
    let seeds = default_seeds(&space, extra_seeds);
    pso_maximize(
        |runs| ensemble.phi_compromise(runs, alpha).unwrap_or(0.0),
        &space,
        config,
        &seeds,
        &format!("compromise (alpha={alpha})"),
    )
}
