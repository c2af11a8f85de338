//! Scenario files, the coefficient expression language and the
//! `simulate` / `certify` / `sweep` / `selftest` runs behind the
//! `delaybound` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod load;
pub mod run;

pub use load::{load_scenario, load_scenario_with, Overrides, Scenario, ScenarioError};
