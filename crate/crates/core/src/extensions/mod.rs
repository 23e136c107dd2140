//! Practical extensions: admission-time refusal in place of drops, workload classes
//! sharing a station's CPU and energy, and statistics of waiting-bound violations.

pub mod classes;
pub mod refuse;
pub mod violation;

pub use classes::{class_partition_and_budget, multiplex_classes, ClassPlan};
pub use refuse::{Admission, PhysicalSlot, RefuseLedger};
pub use violation::{violation_stats, ViolationCounter, ViolationStats};
