//! Scripted end-to-end runs: a service, clients, a middlebox chain and
//! per-step expectations, all on a manual clock and a seeded generator.

mod runner;
mod scenario;

pub use runner::{
    run_all, run_scenario, run_scenario_capturing, run_scenario_with, scenario_files, EnvironmentFailure, Report,
    RunOptions, StepReport, Summary,
};
pub use scenario::{
    HarnessAction, RegistryExpect, Scenario, Step, StepAction, TransportKind, DEFAULT_CLIENT, DEFAULT_START_TIME,
};
