//! Grid cells on the circular track: position within the grid period from
//! firing rates.
//!
//! `cargo run --release --example grid_track`

use conjucode::decoder::{lag_grid, lag_sweep, Dataset, FeatureKind, Target};
use conjucode::encoders::{simulate_grid_cells, GridPopulationSpec};
use conjucode::rates::{firing_rates_strided, IntegratorConfig};
use conjucode::trajectory::{gen_track_run, TrackRunParams};

const STRIDE: usize = 10;

fn dataset(seed: u64, seconds: f64, tau: f64) -> conjucode::Result<Dataset> {
    let traj = gen_track_run(seed, &TrackRunParams { duration_s: seconds, ..TrackRunParams::default() })?;
    let spec = GridPopulationSpec::default();
    let raster = simulate_grid_cells(&traj, &spec, seed)?;
    let rates = firing_rates_strided(&raster, &IntegratorConfig::new(tau)?, STRIDE)?;
    let phase = traj.phase_within(spec.spacing_cm)?.into_iter().step_by(STRIDE).collect();
    Dataset::new(rates, Target::Angle(phase), FeatureKind::Firing, seed)
}

fn main() -> conjucode::Result<()> {
    let tau = 0.4;
    let train = dataset(1, 300.0, tau)?;
    let test = dataset(2, 120.0, tau)?;
    let sweep = lag_sweep(&train, &test, &lag_grid(800, STRIDE), 1e-8)?;
    println!(
        "position within {:.0} cm from grid firing rates: {:.3} of chance at lag {} ms",
        GridPopulationSpec::default().spacing_cm,
        sweep.best_relative(),
        sweep.best_lag
    );
    Ok(())
}
