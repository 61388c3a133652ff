//! Online scheduling of anytime tasks on heterogeneous resources.
//!
//! Tasks are optimization problems solved by anytime algorithms: more
//! processing time buys a better solution. A central scheduler orders
//! pending tasks by due date and assigns them to the resource that finishes
//! them first ([`scheduler`]); a quality controller then lowers the
//! requested solution quality under overload so that the average normalized
//! lateness stays near zero ([`control`]). Processing time functions are not
//! known up front and are estimated from past runs ([`estimator`]).
//!
//! [`sim`] ties everything together in a deterministic event-driven
//! simulator driven by synthetic workloads from [`workload`]; [`metrics`]
//! summarizes the outcome.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod estimator;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use model::{PiecewiseLinearPTF, QualityTrace, Resource, ResourceId, Schedule, SolutionState, Task, TaskId, Time};
