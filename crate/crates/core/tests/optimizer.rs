use odex::bundled::{self, GammaGrid};
use odex::criteria::{CriteriaError, Flavor, ScenarioModel};
use odex::model::{Factor, BOX_LIMIT};
use odex::optimizer::{build_cache, solve_bayes, solve_compromise, solve_local, OptimizerError, PsoConfig};

fn config() -> PsoConfig {
    PsoConfig::reduced()
}

fn model(i: usize) -> ScenarioModel {
    let s = bundled::scenarios(&[i], GammaGrid::Fixed).unwrap().remove(0);
    ScenarioModel::new(s, &bundled::initial_design()).unwrap()
}

fn in_box(runs: &[odex::model::Run]) -> bool {
    runs.iter()
        .all(|r| r.coords.iter().all(|c| c.is_finite() && c.abs() <= BOX_LIMIT))
}

#[test]
fn temperature_local_d_optimum_structure() {
    let m = model(0);
    let res = solve_local(&m, 4, Flavor::D, &config(), &[]).unwrap();
    let published = m.phi_d(&bundled::local_d_optimal(0).runs);
    assert!(res.best_value >= published - 1e-12, "{} < {published}", res.best_value);
    assert!((res.best_value - m.phi_d(&res.best_design.runs)).abs() <= 1e-12 * res.best_value);
    assert!(in_box(&res.best_design.runs));
    let interior: Vec<(usize, Factor, f64)> = res
        .best_design
        .runs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            [Factor::L, Factor::K, Factor::D]
                .into_iter()
                .map(move |f| (i, f, r.coord(f)))
        })
        .filter(|(_, _, v)| (v.abs() - 2.0).abs() > 1e-6)
        .collect();
    assert!(!interior.is_empty());
    for (_, f, v) in &interior {
        assert_eq!(*f, Factor::K, "{interior:?}");
        assert!((v + 0.1).abs() <= 0.15, "{interior:?}");
    }
    assert!(res.best_design.runs.iter().all(|r| r.coord(Factor::Fdv) == 0.0));
}

#[test]
fn temperature_local_d1_optimum_is_close_to_published() {
    let m = model(0);
    let res = solve_local(&m, 4, Flavor::D1, &config(), &[]).unwrap();
    let published = m.phi_d1(&bundled::local_d1_optimal(0).runs);
    assert!(res.best_value >= 0.99 * published, "{} vs {published}", res.best_value);
    let interior = res
        .best_design
        .runs
        .iter()
        .flat_map(|r| [r.coord(Factor::L), r.coord(Factor::K), r.coord(Factor::D)])
        .filter(|v| v.abs() < 2.0 - 1e-6)
        .count();
    assert!(interior > 0);
}

#[test]
fn flame_width_local_d1_dominates_published() {
    let m = model(2);
    let res = solve_local(&m, 4, Flavor::D1, &config(), &[]).unwrap();
    let published = m.phi_d1(&bundled::local_d1_optimal(2).runs);
    assert!(res.best_value >= published - 1e-12);
}

#[test]
fn no_runs_scores_zero() {
    let res = solve_local(&model(1), 0, Flavor::D, &config(), &[]).unwrap();
    assert_eq!(res.best_value, 0.0);
    assert!(res.best_design.is_empty());
}

#[test]
fn cache_dominates_published_optima_and_is_idempotent() {
    let mut ens = bundled::ensemble(&[0, 1, 2, 3], GammaGrid::Fixed, 4).unwrap();
    let solutions = build_cache(&mut ens, &config(), &[]).unwrap();
    let published = bundled::published_ensemble().unwrap();
    for (i, (ours, theirs)) in ens.cache().unwrap().iter().zip(published.cache().unwrap()).enumerate() {
        assert!(ours.d_optimum > 0.0 && ours.d1_optimum > 0.0 && ours.d1_at_d_optimum > 0.0);
        assert!(ours.d_optimum >= theirs.d_optimum - 1e-12, "model {i} D");
        assert!(ours.d1_optimum >= theirs.d1_optimum - 1e-12, "model {i} D1");
        for run in solutions[i].d_optimal.best_design.runs.iter() {
            for f in Factor::ALL {
                if !ens.model(i).scenario().spec.factors().contains(&f) {
                    assert_eq!(run.coord(f), 0.0);
                }
            }
        }
    }
    let mut again = bundled::ensemble(&[0, 1, 2, 3], GammaGrid::Fixed, 4).unwrap();
    build_cache(&mut again, &config(), &[]).unwrap();
    assert_eq!(ens.cache(), again.cache());
}

#[test]
fn bayes_and_compromise_dominate_published() {
    let mut ens = bundled::ensemble(&[0, 1, 2, 3], GammaGrid::Fixed, 4).unwrap();
    assert!(matches!(
        solve_bayes(&ens, Flavor::D, &config(), &[]),
        Err(OptimizerError::Criteria(CriteriaError::MissingCache))
    ));
    build_cache(&mut ens, &config(), &[]).unwrap();
    let d = solve_bayes(&ens, Flavor::D, &config(), &[]).unwrap();
    assert!(d.best_value >= ens.phi_bayes(&bundled::bayes_d_fixed().runs, Flavor::D).unwrap() - 1e-6);
    let d1 = solve_bayes(&ens, Flavor::D1, &config(), &[]).unwrap();
    assert!(d1.best_value >= ens.phi_bayes(&bundled::bayes_d1_fixed().runs, Flavor::D1).unwrap() - 1e-6);
    let c = solve_compromise(&ens, 0.5, &config(), &[]).unwrap();
    assert!(c.best_value >= ens.phi_compromise(&bundled::compromise_half().runs, 0.5).unwrap() - 1e-6);
    for r in [&d, &d1, &c] {
        assert!(in_box(&r.best_design.runs));
        assert_eq!(r.best_design.len(), 4);
        assert!(r.history.iter().all(|h| h.windows(2).all(|w| w[1] >= w[0])));
    }
}

#[test]
fn deterministic_across_runs_and_thread_counts() {
    let m = model(3);
    let one = PsoConfig {
        threads: Some(1),
        ..config()
    };
    let four = PsoConfig {
        threads: Some(4),
        ..config()
    };
    let a = solve_local(&m, 4, Flavor::D, &one, &[]).unwrap();
    let b = solve_local(&m, 4, Flavor::D, &four, &[]).unwrap();
    let c = solve_local(&m, 4, Flavor::D, &four, &[]).unwrap();
    assert_eq!(a.best_design, b.best_design);
    assert_eq!(a.history, b.history);
    assert_eq!(b.best_value, c.best_value);
    assert_eq!(a.evaluations, b.evaluations);
    let other = solve_local(&m, 4, Flavor::D, &config().with_seed(99), &[]).unwrap();
    assert!(other.best_value > 0.0);
}
