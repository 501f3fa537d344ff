//! Scenario runner: reference programs, measurement noise, closed-loop wiring,
//! metrics and CSV output.

pub mod config;
pub mod metrics;
pub mod noise;
pub mod record;
pub mod reference;
pub mod runner;

pub use config::{Mode, ScenarioConfig};
pub use metrics::{compute_metrics, MetricsReport};
pub use noise::{add_measurement_noise, ScenarioRng};
pub use record::{read_csv, write_csv, SimRecord, CSV_HEADER};
pub use reference::{generate_reference, ReferenceProgram, Segment};
pub use runner::{run_scenario, ScenarioOutput};
