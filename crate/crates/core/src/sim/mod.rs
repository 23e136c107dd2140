//! Slotted-time simulator.

pub mod arrivals;
pub mod baseline;
pub mod engine;
pub mod lifting;
pub mod metrics;

pub use arrivals::{ArrivalGenerator, ArrivalProcess, RawTask, WorkloadDist};
pub use baseline::{BaselineMode, BaselineScheduler};
pub use engine::{run_simulation, Algorithm, SimConfig, SimResult, TraceRow};
pub use lifting::{lift_relaxed_schedule, LiftingMode};
pub use metrics::MetricsSummary;
