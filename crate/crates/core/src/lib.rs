//! Cooperative peer offloading among edge base stations.
//!
//! Time is slotted. Each base station receives at most one (aggregated) task per slot,
//! keeps a FIFO queue, and may hand its head-of-line task to a peer. Two schedulers are
//! provided: a randomised one-slot offloader for known arrival rates
//! ([`known_rate`]), and an online drift-plus-penalty scheduler with a hard bound on
//! head-of-line waiting time ([`scheduler`]). [`sim`] drives either of them, or a
//! baseline, over arrival processes and reports response times, utility and energy.

pub mod assignment;
pub mod decision;
pub mod error;
pub mod extensions;
pub mod known_rate;
pub mod model;
pub mod planner;
pub mod queue;
pub mod scheduler;
pub mod sim;
pub mod utility;

pub use decision::SlotDecision;
pub use error::{Error, Result};
pub use model::{StationConfig, Topology};
pub use planner::{solve_pk, PkSolution};
pub use queue::{QueueState, QueuedTask};
pub use utility::{g_hat_eval, UtilitySpec};
