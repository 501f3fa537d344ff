//! Shared inputs for the criterion benchmarks.

use threetank::linmodel::{self, DiscreteModel};
use threetank::tracking::{self, AugmentedModel};
use threetank::{OperatingPoint, PlantParams};

/// Linearized model at the default operating point, `t_s = 1 s`.
pub fn reference_model() -> (DiscreteModel, AugmentedModel) {
    let (_, dm) = linmodel::linearize(&PlantParams::default(), &OperatingPoint::default(), 1.0)
        .expect("default operating point is valid");
    let am = tracking::augment(&dm).expect("default model is controllable");
    (dm, am)
}
