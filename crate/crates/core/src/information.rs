//! Fisher information of exact designs, with and without the day effect,
//! and the two reductions the criteria need: the log-determinant and the
//! day-effect quadratic form `(eᵀ I⁻¹ e)⁻¹`.

use thiserror::Error;

use crate::linalg::{SymMatrix, DEFAULT_PIVOT_TOLERANCE};
use crate::model::{Day, Factor, ModelError, ModelSpec, ParamPoint, Run};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("run {run}: {source}")]
    AtRun { run: usize, source: ModelError },
}

/// An ordered list of runs, possibly mixing initial-day and later-day runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub label: String,
    pub runs: Vec<Run>,
}

impl Design {
    pub fn new(label: impl Into<String>, runs: Vec<Run>) -> Self {
        Self {
            label: label.into(),
            runs,
        }
    }

    /// Builds a design from raw coordinates, all on `day`.
    pub fn from_coords(
        label: impl Into<String>,
        coords: &[[f64; Factor::COUNT]],
        day: Day,
    ) -> Result<Self, ModelError> {
        let runs = coords
            .iter()
            .map(|c| Run::new(*c, day))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(label, runs))
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Initial-day block `X⁽¹⁾`.
    pub fn initial_runs(&self) -> impl Iterator<Item = &Run> {
        self.runs.iter().filter(|r| r.day == Day::Initial)
    }

    /// Later-day block `X⁽²⁾`.
    pub fn later_runs(&self) -> impl Iterator<Item = &Run> {
        self.runs.iter().filter(|r| r.day == Day::Later)
    }

    /// `(X⁽¹⁾, X⁽²⁾)` as one design.
    pub fn augmented(&self, new_runs: &[Run]) -> Design {
        let mut runs = self.runs.clone();
        runs.extend_from_slice(new_runs);
        Design::new(self.label.clone(), runs)
    }

    pub fn with_day(&self, day: Day) -> Design {
        Design::new(
            self.label.clone(),
            self.runs.iter().map(|r| r.on_day(day)).collect(),
        )
    }
}

/// Symmetric positive semidefinite Fisher information.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    matrix: SymMatrix,
}

impl InfoMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: SymMatrix::zeros(dim),
        }
    }

    pub fn from_matrix(matrix: SymMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn add_rank_one(&mut self, weight: f64, z: &[f64]) {
        self.matrix.add_rank_one(weight, z);
    }

    /// `log |I|`, or `-inf` when numerically singular.
    pub fn log_det(&self) -> f64 {
        self.log_det_with_tolerance(DEFAULT_PIVOT_TOLERANCE)
    }

    pub fn log_det_with_tolerance(&self, tolerance: f64) -> f64 {
        self.matrix.log_det(tolerance)
    }

    /// `(eᵀ I⁻¹ e)⁻¹` for the unit vector `e` at `index`, or `0` when `I` is
    /// singular.
    ///
    /// Computed as the last LDLᵀ pivot after moving `index` to the end: that
    /// pivot is the Schur complement `I_ee - I_e,r I_rr⁻¹ I_r,e`.
    pub fn inv_quadratic_form(&self, index: usize) -> f64 {
        self.inv_quadratic_form_with_tolerance(index, DEFAULT_PIVOT_TOLERANCE)
    }

    pub fn inv_quadratic_form_with_tolerance(&self, index: usize, tolerance: f64) -> f64 {
        let n = self.dim();
        assert!(index < n, "index {index} out of range for dimension {n}");
        let order: Vec<usize> = (0..n).filter(|&i| i != index).chain([index]).collect();
        match self.matrix.select(&order).ldl(tolerance) {
            Some(f) => f.pivots()[n - 1],
            None => 0.0,
        }
    }
}

/// Fisher information of `design` at `params` with `ν = 1`.
///
/// With the day effect the regressor is `z* = (zᵀ, t)ᵀ` and the weight is
/// evaluated at `zᵀβ + tγ`; without it every run is treated as an
/// initial-day run and the information has dimension `p`.
pub fn fisher_info(
    spec: &ModelSpec,
    params: &ParamPoint,
    design: &Design,
    with_day_effect: bool,
) -> Result<InfoMatrix, InfoError> {
    spec.check_params(params)?;
    let p = spec.num_terms();
    let gamma = if with_day_effect {
        Some(params.gamma.ok_or(ModelError::MissingGamma)?)
    } else {
        None
    };
    let dim = p + usize::from(with_day_effect);
    let mut info = InfoMatrix::zeros(dim);
    let mut z = vec![0.0; dim];
    for (i, run) in design.runs.iter().enumerate() {
        accumulate_run(spec, &params.beta, gamma, run, &mut z, &mut info)
            .map_err(|source| InfoError::AtRun { run: i, source })?;
    }
    Ok(info)
}

/// Adds one run's summand to `info`. `scratch` must have length `info.dim()`;
/// `gamma` is `Some` exactly when the information carries the day effect.
#[inline]
pub(crate) fn accumulate_run(
    spec: &ModelSpec,
    beta: &[f64],
    gamma: Option<f64>,
    run: &Run,
    scratch: &mut [f64],
    info: &mut InfoMatrix,
) -> Result<(), ModelError> {
    let p = spec.num_terms();
    spec.regressor_into(&run.coords, &mut scratch[..p]);
    let mut eta: f64 = scratch[..p].iter().zip(beta).map(|(z, b)| z * b).sum();
    if let Some(g) = gamma {
        let t = run.day.indicator();
        scratch[p] = t;
        eta += t * g;
    }
    let w = spec.link().info_weight(eta)?;
    info.add_rank_one(w, scratch);
    Ok(())
}
