//! Thermal-spraying data shipped with the crate: the 30-run central
//! composite design of the initial day, the four selected models with their
//! estimates, the reference and Bayesian designs run on the second day with
//! their observations, the 14 validation runs, and the published optimal
//! designs.
//!
//! Coordinates are coded to `[-2, 2]` in the order `(L, K, D, FDV)`.

use std::collections::BTreeMap;

use crate::criteria::{CriteriaError, LocalOptima, Scenario, ScenarioEnsemble};
use crate::estimation::Dataset;
use crate::information::Design;
use crate::model::{Day, Factor, Link, ModelSpec, ParamPoint, Run, Term};

/// Response names, in the order used by every table below.
pub const RESPONSES: [&str; 4] = ["temperature", "velocity", "flame_width", "flame_intensity"];

/// Day effects assumed for the locally optimal designs.
pub const GAMMAS: [f64; 4] = [-16.0, 0.01, 0.002, 0.09];

type Row = ([f64; 4], [f64; 4]);

/// Initial-day central composite design with the four responses.
pub const CCD30: [Row; 30] = [
    ([1.0, -1.0, 1.0, -1.0], [1450.5706, 674.1324, 7.9059, 13.1971]),
    ([1.0, 1.0, 1.0, 1.0], [1500.9382, 726.6706, 12.4912, 21.0029]),
    ([-1.0, -1.0, 1.0, -1.0], [1484.8952, 649.1190, 8.1238, 15.3929]),
    ([-1.0, -1.0, -1.0, 1.0], [1534.6750, 666.0781, 13.5563, 21.4375]),
    ([0.0, 0.0, 0.0, 0.0], [1519.4829, 709.3029, 11.9629, 19.7143]),
    ([0.0, 0.0, 0.0, 0.0], [1527.6065, 713.6581, 12.1742, 19.9419]),
    ([-1.0, 1.0, 1.0, -1.0], [1543.3053, 730.3474, 10.3711, 18.3579]),
    ([-1.0, 1.0, -1.0, 1.0], [1574.0970, 739.4212, 14.9909, 23.3667]),
    ([1.0, 1.0, -1.0, 1.0], [1536.2371, 756.7057, 13.7657, 21.8543]),
    ([1.0, -1.0, -1.0, -1.0], [1497.6209, 698.4093, 8.7767, 15.8093]),
    ([0.0, 0.0, 0.0, 0.0], [1527.8571, 710.8250, 11.9821, 19.9393]),
    ([-1.0, 1.0, -1.0, -1.0], [1564.3114, 753.5943, 11.1229, 18.7143]),
    ([1.0, 1.0, -1.0, -1.0], [1528.9267, 770.7367, 9.5000, 17.0000]),
    ([-1.0, 1.0, 1.0, 1.0], [1546.6594, 714.0031, 14.8187, 23.5625]),
    ([1.0, -1.0, 1.0, 1.0], [1484.7806, 665.0000, 12.3472, 20.5139]),
    ([-1.0, -1.0, 1.0, 1.0], [1502.0265, 640.9088, 13.2176, 21.3500]),
    ([-1.0, -1.0, -1.0, -1.0], [1525.3917, 678.9194, 10.0417, 17.2917]),
    ([1.0, 1.0, 1.0, -1.0], [1508.2706, 749.0647, 8.5206, 15.9706]),
    ([0.0, 0.0, 0.0, 0.0], [1535.5706, 714.2500, 12.3294, 20.1412]),
    ([1.0, -1.0, -1.0, 1.0], [1504.6000, 689.5364, 12.6121, 20.2879]),
    ([0.0, 0.0, 0.0, 0.0], [1521.7227, 708.9636, 11.7977, 19.6568]),
    ([0.0, 0.0, -2.0, 0.0], [1534.7182, 726.6697, 11.7939, 19.2697]),
    ([-2.0, 0.0, 0.0, 0.0], [1542.8600, 688.1171, 12.4971, 20.2914]),
    ([2.0, 0.0, 0.0, 0.0], [1462.0088, 723.5471, 9.1765, 16.7735]),
    ([0.0, 0.0, 0.0, 0.0], [1521.4765, 709.1412, 11.5176, 19.2412]),
    ([0.0, 0.0, 0.0, -2.0], [1516.5378, 708.6919, 11.3649, 19.0757]),
    ([0.0, 0.0, 2.0, 0.0], [1491.7684, 684.3026, 10.4868, 18.5632]),
    ([0.0, 2.0, 0.0, 0.0], [1512.7982, 755.1382, 10.8436, 18.8527]),
    ([0.0, 0.0, 0.0, 2.0], [1520.6485, 695.1848, 14.4455, 22.7879]),
    ([0.0, -2.0, 0.0, 0.0], [1435.7488, 612.6093, 8.9209, 16.0163]),
];

/// Second-day runs of the Bayesian D-optimal design (five day-effect values).
pub const BAYES_RUNS: [Row; 4] = [
    ([2.0, 2.0, 2.0, -0.53], [1466.8123, 787.5585, 12.3446, 22.0938]),
    ([-2.0, -2.0, 2.0, -2.0], [1298.8123, 593.2692, 10.2261, 9.8646]),
    ([-2.0, 0.31, -2.0, 2.0], [1560.3545, 706.1242, 18.9030, 28.6333]),
    ([2.0, -2.0, -2.0, -2.0], [1437.7284, 687.5351, 7.4500, 13.8446]),
];

/// Second-day runs of the reference fractional factorial design.
pub const REFERENCE_RUNS: [Row; 4] = [
    ([1.0, 1.0, -1.0, -1.0], [1527.1426, 778.2632, 13.2456, 22.3985]),
    ([-1.0, 1.0, 1.0, -1.0], [1493.9143, 752.6063, 12.4841, 22.3333]),
    ([1.0, 1.0, 1.0, 1.0], [1507.5667, 752.8273, 17.6909, 27.9348]),
    ([1.0, -1.0, 1.0, -1.0], [1443.8103, 696.7851, 10.4471, 18.8977]),
];

/// Fourteen validation runs made on the second day.
pub const VALIDATION14: [Row; 14] = [
    ([0.01, 1.09, -0.20, -1.67], [1514.6610, 782.1146, 10.2951, 19.1976]),
    ([0.01, 1.09, -0.20, -1.67], [1521.8186, 786.4209, 10.0116, 18.6930]),
    ([1.82, -0.36, 0.46, -0.58], [1475.2022, 734.7978, 11.7778, 21.1467]),
    ([1.82, -0.36, 0.46, -0.58], [1488.6825, 737.3925, 11.1850, 20.0250]),
    ([1.27, -1.32, 0.38, -0.71], [1434.2327, 687.7714, 10.4510, 18.9408]),
    ([1.27, -1.32, 0.38, -0.71], [1456.8717, 689.5453, 10.0019, 17.7623]),
    ([0.00, -0.01, 0.20, -1.73], [1478.7136, 743.1182, 9.7227, 17.1773]),
    ([0.00, -0.01, 0.20, -1.73], [1520.9761, 747.9326, 9.3457, 16.3413]),
    ([-0.48, 0.50, -0.60, 1.78], [1529.3061, 726.5163, 17.9367, 27.6449]),
    ([-0.48, 0.50, -0.60, 1.78], [1521.4094, 721.4434, 17.4113, 27.1906]),
    ([1.00, -1.00, -1.00, 1.00], [1507.4579, 698.7368, 16.2667, 25.5053]),
    ([-1.00, -1.00, -1.00, -1.00], [1491.3108, 696.6215, 12.4585, 21.0092]),
    ([-1.00, -1.00, 1.00, 1.00], [1453.4762, 661.9381, 16.2333, 26.2127]),
    ([-1.00, 1.00, -1.00, 1.00], [1552.7875, 749.2734, 18.3484, 27.9703]),
];

/// Initial-day estimates `β̂` of the four selected models, in term order.
pub const ESTIMATES: [&[f64]; 4] = [
    &[1523.2627, -17.7423, 19.6580, -13.8181, -9.9897],
    &[6.5648, 0.0136, 0.0516, -0.0171, -0.0078, -0.0092, -0.0031],
    &[0.0863, 0.0053, -0.0044, 0.0029, -0.0123, 0.0039],
    &[19.4784, -0.8887, 0.8646, -0.3709, 2.1661, -0.3096, -0.5615, 0.5092, 0.4095],
];

/// Published standard errors of [`ESTIMATES`], as printed.
pub const STANDARD_ERRORS: [&[f64]; 4] = [
    &[2.6722, 2.3136, 2.2939, 2.3136, 2.0813],
    &[0.0016, 0.0014, 0.0014, 0.0014, 0.0014, 0.0012, 0.0017],
    &[0.0018, 0.0015, 0.0016, 0.0015, 0.0015, 0.0015],
    &[0.3364, 0.1901, 0.1863, 0.1970, 0.2042, 0.1760, 0.1925, 0.1699, 0.2378],
];

/// Published BIC of the four selected models.
pub const BIC: [f64; 4] = [245.744, 196.979, 99.749, 106.148];

/// Locally D-optimal designs per model. The temperature model does not use
/// FDV, so that coordinate is set to the center.
pub const LOCAL_D_OPTIMAL: [[[f64; 4]; 4]; 4] = [
    [[-2.0, -0.07, -2.0, 0.0], [2.0, -0.13, 2.0, 0.0], [2.0, 2.0, -2.0, 0.0], [-2.0, -2.0, 2.0, 0.0]],
    [[-2.0, 2.0, -2.0, 2.0], [-2.0, -2.0, 2.0, 2.0], [2.0, 2.0, -2.0, -2.0], [2.0, -2.0, 2.0, -2.0]],
    [[2.0, 0.37, 2.0, 2.0], [-2.0, 2.0, -2.0, 2.0], [-2.0, 0.08, -2.0, 2.0], [2.0, 0.37, -2.0, -2.0]],
    [[2.0, 2.0, 2.0, -2.0], [-2.0, -2.0, 2.0, -2.0], [0.47, -0.95, 2.0, -0.64], [2.0, -2.0, -2.0, -2.0]],
];

/// Locally D₁-optimal designs per model (temperature FDV at the center).
pub const LOCAL_D1_OPTIMAL: [[[f64; 4]; 4]; 4] = [
    [[-1.23, -1.32, -0.05, 0.0], [0.10, 0.94, 0.81, 0.0], [0.28, 0.64, 0.42, 0.0], [1.20, -0.64, -0.89, 0.0]],
    [[0.00, 0.96, 0.64, -0.73], [-0.54, -0.62, -1.90, 0.84], [0.40, -1.12, 1.31, -1.25], [0.13, 0.79, -0.05, 1.14]],
    [[-1.02, 0.29, 1.72, -1.83], [-1.81, 0.99, 0.29, 1.92], [0.07, -1.07, -1.40, -0.29], [1.54, 0.28, -1.58, 1.50]],
    [[1.59, 1.03, 1.30, -1.075], [0.09, -1.53, 1.43, -0.51], [0.00, -0.61, -0.66, 0.64], [-0.85, -0.22, -1.79, -1.11]],
];

/// Bayesian D-optimal design, four models, day effect fixed.
pub const BAYES_D_FIXED: [[f64; 4]; 4] =
    [[2.0, 2.0, 2.0, 2.0], [2.0, -2.0, 2.0, -2.0], [-2.0, 0.34, -2.0, 2.0], [-2.0, -2.0, -2.0, -2.0]];

/// Bayesian D-optimal design, four models, day effect `γ, γ ± 10%`.
pub const BAYES_D_PM10: [[f64; 4]; 4] =
    [[2.0, 2.0, 2.0, -2.0], [2.0, -2.0, -2.0, -2.0], [-2.0, 0.37, -2.0, 2.0], [-2.0, -2.0, 2.0, 2.0]];

/// Bayesian D₁-optimal design, four models, day effect fixed.
pub const BAYES_D1_FIXED: [[f64; 4]; 4] = [
    [0.03, -1.62, 2.00, -0.65],
    [0.90, 0.36, 0.44, -0.57],
    [1.11, 0.53, -2.00, -0.70],
    [-1.83, 0.54, -0.53, 2.00],
];

/// Bayesian D₁-optimal design, four models, day effect `γ, γ ± 10%`.
pub const BAYES_D1_PM10: [[f64; 4]; 4] = [
    [-0.57, 0.13, -1.15, -0.96],
    [0.46, -1.53, 1.97, -0.61],
    [-1.37, 0.45, -0.61, 1.83],
    [1.42, 0.84, -0.27, -0.60],
];

/// Compromise design for `α = 0.5`, day effect fixed.
pub const COMPROMISE_HALF: [[f64; 4]; 4] = [
    [0.10, 0.17, 2.00, -0.76],
    [0.29, -2.00, -2.00, -1.05],
    [1.75, 0.58, 2.00, -0.08],
    [-2.00, 0.41, -2.00, 2.00],
];

/// How the day effect is varied across the atoms of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaGrid {
    /// `γ` only.
    Fixed,
    /// `0.9γ, γ, 1.1γ`.
    Pm10,
    /// `0.8γ, 0.9γ, γ, 1.1γ, 1.2γ`.
    Pm10Pm20,
}

impl GammaGrid {
    pub fn multipliers(self) -> &'static [f64] {
        match self {
            GammaGrid::Fixed => &[1.0],
            GammaGrid::Pm10 => &[0.9, 1.0, 1.1],
            GammaGrid::Pm10Pm20 => &[0.8, 0.9, 1.0, 1.1, 1.2],
        }
    }
}

impl std::str::FromStr for GammaGrid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(GammaGrid::Fixed),
            "pm10" => Ok(GammaGrid::Pm10),
            "pm10pm20" => Ok(GammaGrid::Pm10Pm20),
            _ => Err(format!("unknown gamma grid `{s}` (expected fixed, pm10 or pm10pm20)")),
        }
    }
}

/// The four selected models: temperature (identity), velocity (log),
/// flame width (inverse), flame intensity (identity).
pub fn models() -> [ModelSpec; 4] {
    use Factor::*;
    let all = vec![L, K, D, Fdv];
    let mains = |fs: &[Factor]| -> Vec<Term> {
        std::iter::once(Term::Intercept)
            .chain(fs.iter().map(|f| Term::Main(*f)))
            .collect()
    };
    let mut temperature = mains(&[L, K, D]);
    temperature.push(Term::Square(K));
    let mut velocity = mains(&all);
    velocity.extend([Term::Square(K), Term::Interaction(L, K)]);
    let mut width = mains(&all);
    width.push(Term::Square(K));
    let mut intensity = mains(&all);
    intensity.extend([Term::Square(L), Term::Square(K), Term::Square(Fdv), Term::Interaction(D, Fdv)]);
    [
        ModelSpec::new(RESPONSES[0], Link::Identity, vec![L, K, D], temperature),
        ModelSpec::new(RESPONSES[1], Link::Log, all.clone(), velocity),
        ModelSpec::new(RESPONSES[2], Link::Inverse, all.clone(), width),
        ModelSpec::new(RESPONSES[3], Link::Identity, all, intensity),
    ]
    .map(|s| s.expect("bundled model specifications are valid"))
}

pub fn model_index(name: &str) -> Option<usize> {
    RESPONSES.iter().position(|r| *r == name)
}

pub fn model(name: &str) -> Option<ModelSpec> {
    model_index(name).map(|i| models()[i].clone())
}

/// Published estimates with day effect `gamma`.
pub fn params(index: usize, gamma: Option<f64>) -> ParamPoint {
    ParamPoint::new(ESTIMATES[index].to_vec(), gamma)
}

fn dataset(rows: &[Row], day: Day) -> Dataset {
    let runs = rows
        .iter()
        .map(|(c, _)| Run::new(*c, day).expect("bundled runs lie in the box"))
        .collect();
    let responses: BTreeMap<String, Vec<f64>> = RESPONSES
        .iter()
        .enumerate()
        .map(|(j, name)| (name.to_string(), rows.iter().map(|(_, y)| y[j]).collect()))
        .collect();
    Dataset::new(runs, responses).expect("bundled responses are positive")
}

fn design(label: &str, coords: &[[f64; 4]], day: Day) -> Design {
    Design::from_coords(label, coords, day).expect("bundled designs lie in the box")
}

/// 30-run initial-day dataset.
pub fn ccd30() -> Dataset {
    dataset(&CCD30, Day::Initial)
}

/// Initial design `X⁽¹⁾` without responses.
pub fn initial_design() -> Design {
    let coords: Vec<[f64; 4]> = CCD30.iter().map(|(c, _)| *c).collect();
    design("central composite", &coords, Day::Initial)
}

/// Reference runs with observations, on the later day.
pub fn reference_data() -> Dataset {
    dataset(&REFERENCE_RUNS, Day::Later)
}

/// Bayesian D-optimal runs with observations, on the later day.
pub fn bayes_data() -> Dataset {
    dataset(&BAYES_RUNS, Day::Later)
}

/// Validation runs; they were made on the same later day.
pub fn validation14() -> Dataset {
    dataset(&VALIDATION14, Day::Later)
}

pub fn reference_design() -> Design {
    let coords: Vec<[f64; 4]> = REFERENCE_RUNS.iter().map(|(c, _)| *c).collect();
    design("reference", &coords, Day::Later)
}

pub fn bayes_design_pm10pm20() -> Design {
    let coords: Vec<[f64; 4]> = BAYES_RUNS.iter().map(|(c, _)| *c).collect();
    design("Bayesian D-optimal (gamma +-10%, +-20%)", &coords, Day::Later)
}

pub fn local_d_optimal(index: usize) -> Design {
    design(
        &format!("locally D-optimal ({})", RESPONSES[index]),
        &LOCAL_D_OPTIMAL[index],
        Day::Later,
    )
}

pub fn local_d1_optimal(index: usize) -> Design {
    design(
        &format!("locally D1-optimal ({})", RESPONSES[index]),
        &LOCAL_D1_OPTIMAL[index],
        Day::Later,
    )
}

pub fn bayes_d_fixed() -> Design {
    design("Bayesian D-optimal (gamma fixed)", &BAYES_D_FIXED, Day::Later)
}

pub fn bayes_d_pm10() -> Design {
    design("Bayesian D-optimal (gamma +-10%)", &BAYES_D_PM10, Day::Later)
}

pub fn bayes_d1_fixed() -> Design {
    design("Bayesian D1-optimal (gamma fixed)", &BAYES_D1_FIXED, Day::Later)
}

pub fn bayes_d1_pm10() -> Design {
    design("Bayesian D1-optimal (gamma +-10%)", &BAYES_D1_PM10, Day::Later)
}

pub fn compromise_half() -> Design {
    design("compromise (alpha=0.5)", &COMPROMISE_HALF, Day::Later)
}

/// Every published later-day design, by short name.
pub fn appendix_designs() -> BTreeMap<String, Design> {
    let mut out = BTreeMap::new();
    for (i, name) in RESPONSES.iter().enumerate() {
        out.insert(format!("local-d/{name}"), local_d_optimal(i));
        out.insert(format!("local-d1/{name}"), local_d1_optimal(i));
    }
    out.insert("reference".into(), reference_design());
    out.insert("bayes-d/fixed".into(), bayes_d_fixed());
    out.insert("bayes-d/pm10".into(), bayes_d_pm10());
    out.insert("bayes-d/pm10pm20".into(), bayes_design_pm10pm20());
    out.insert("bayes-d1/fixed".into(), bayes_d1_fixed());
    out.insert("bayes-d1/pm10".into(), bayes_d1_pm10());
    out.insert("compromise/0.5".into(), compromise_half());
    out
}

/// Scenarios for the chosen models, each with its day effect scaled by every
/// multiplier of `grid`, equally weighted.
pub fn scenarios(model_indices: &[usize], grid: GammaGrid) -> Result<Vec<Scenario>, CriteriaError> {
    let specs = models();
    let mut out = Vec::new();
    for &i in model_indices {
        for mult in grid.multipliers() {
            out.push(Scenario::new(
                specs[i].clone(),
                params(i, Some(GAMMAS[i] * mult)),
                1.0,
            )?);
        }
    }
    Ok(out)
}

/// Ensemble over the chosen models with `m` later-day runs after the CCD.
pub fn ensemble(model_indices: &[usize], grid: GammaGrid, m: usize) -> Result<ScenarioEnsemble, CriteriaError> {
    ScenarioEnsemble::new(scenarios(model_indices, grid)?, initial_design(), m)
}

/// Four-model, fixed-day-effect ensemble whose optima cache is filled from
/// the published locally D- and D₁-optimal designs.
pub fn published_ensemble() -> Result<ScenarioEnsemble, CriteriaError> {
    let mut ens = ensemble(&[0, 1, 2, 3], GammaGrid::Fixed, 4)?;
    let cache = (0..4)
        .map(|i| {
            LocalOptima::from_designs(
                ens.model(i),
                &local_d_optimal(i).runs,
                &local_d1_optimal(i).runs,
            )
        })
        .collect();
    ens.set_cache(cache)?;
    Ok(ens)
}
