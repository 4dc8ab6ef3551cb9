//! Optimal augmentation designs for gamma generalized linear models.

pub mod bundled;
pub mod criteria;
pub mod estimation;
pub mod information;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optimizer;

pub use criteria::{Flavor, LocalOptima, Scenario, ScenarioEnsemble, ScenarioModel};
pub use estimation::{fit, Dataset, FittedModel, Metric};
pub use information::{fisher_info, Design, InfoMatrix};
pub use model::{Day, Factor, Link, ModelSpec, ParamPoint, Run, Term};
pub use optimizer::{pso_maximize, DesignSpace, PsoConfig, SearchResult};
