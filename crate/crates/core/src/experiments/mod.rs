//! Metrics and the scenario harness.
//!
//! Each scenario simulates training and test trajectories from distinct
//! seeds, fits linear read-outs on the former and scores them on the latter,
//! and records tables, plots and pass/fail checks in a [`ScenarioReport`].

mod common;
pub mod config;
mod grid;
mod hd;
pub mod metrics;
pub mod report;
pub mod svg;
mod theta;

pub use config::{ScenarioConfig, ScenarioId, ThetaTemplate, TAU_GRID};
pub use hd::{ACCURATE, AT_CHANCE, VELOCITY_DECODES};
pub use theta::{pair_scale, QUOTED_SCALES_CM};
pub use report::{Cell, Check, Manifest, Plot, PlotKind, ScenarioReport, Series, Table};

use crate::error::Result;

/// Runs one scenario. Every reported number is measured on test
/// trajectories whose seeds differ from the fitting trajectories.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    match cfg.id {
        ScenarioId::E1 => hd::run_e1(cfg),
        ScenarioId::E2 => hd::run_e2(cfg),
        ScenarioId::E3 => hd::run_e3(cfg),
        ScenarioId::E4 => grid::run_e4(cfg),
        ScenarioId::E5 => theta::run_e5(cfg),
        ScenarioId::E6 => theta::run_e6(cfg),
        ScenarioId::E7 => theta::run_e7(cfg),
    }
}
