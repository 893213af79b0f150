//! Converts theta speed cells into grid cells by spike resorting, after
//! calibrating the insertion coefficient on separate runs.
//!
//! `cargo run --release --example conversion`

use conjucode::encoders::{calibrate_conversion_coef, convert_speed_to_grid, simulate_theta_population, GridConversion, SpikeRaster, ThetaRingSpec};
use conjucode::trajectory::{gen_track_run, TrackRunParams};
use conjucode::Trajectory;

const LAMBDAS_CM: [f64; 2] = [41.0, -41.0];

fn run(seed: u64, seconds: f64) -> conjucode::Result<(Trajectory, SpikeRaster)> {
    let traj = gen_track_run(seed, &TrackRunParams { duration_s: seconds, ..TrackRunParams::default() })?;
    let rings: Vec<ThetaRingSpec> = LAMBDAS_CM.iter().map(|&l| ThetaRingSpec::new(l)).collect();
    let rasters = simulate_theta_population(&traj, &rings, seed)?;
    Ok((traj, SpikeRaster::stack(&rasters.iter().collect::<Vec<_>>())?))
}

fn main() -> conjucode::Result<()> {
    let layout = GridConversion::ring_layout(LAMBDAS_CM.len(), 12, 0.0);
    let calibration: Vec<(Trajectory, SpikeRaster)> = (10..13).map(|s| run(s, 120.0)).collect::<Result<_, _>>()?;
    let refs: Vec<(&SpikeRaster, &Trajectory)> = calibration.iter().map(|(t, r)| (r, t)).collect();
    let coef = calibrate_conversion_coef(&refs, &layout.phase_index, 99)?;
    println!("calibrated insertion coefficient {coef:.5}");

    let (traj, speed_cells) = run(1, 120.0)?;
    let grid_cells = convert_speed_to_grid(&speed_cells, &traj, &GridConversion { coef, ..layout }, 7)?;
    let (before, after) = (speed_cells.total_spikes(), grid_cells.total_spikes());
    println!(
        "spikes before {before}, after {after} ({:+.2}%)",
        100.0 * (after as f64 - before as f64) / before as f64
    );
    Ok(())
}
