//! Smoothed online workload shifting under uncertainty-quantified advice.
//!
//! * [`problem`]: instances, schedules, feasibility and the cost function.
//! * [`robust`]: the competitive-ratio constant, threshold function and pseudo-cost step.
//! * [`offline`]: the exact hindsight optimum.
//! * [`dus`]: the decision uncertainty score of a prediction interval.
//! * [`online`]: the online driver and the algorithm family.
//! * [`data`]: trace loading, instance windows and synthetic forecasts.
//! * [`experiments`]: batch runs, aggregation, sweeps and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dus;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod offline;
pub mod online;
pub mod problem;
pub mod robust;

pub use error::{Error, Result};
pub use exec::Execution;
pub use problem::{CostBreakdown, Instance, ProblemParams, Schedule, UqForecast};
