//! Angular head velocity from head-direction co-firing rates, with the
//! firing-rate read-out of the same variable for comparison.
//!
//! `cargo run --release --example hd_sigma_chi`

use conjucode::decoder::{lag_grid, lag_sweep, Dataset, FeatureKind, Target};
use conjucode::encoders::{simulate_hd_cells, HdPopulationSpec};
use conjucode::rates::{cofiring_strided, firing_rates_strided, IntegratorConfig, PairingSpec};
use conjucode::trajectory::{gen_head_angle, HeadAngleParams};

const STRIDE: usize = 10;

fn datasets(seed: u64, seconds: f64, tau: f64) -> conjucode::Result<(Dataset, Dataset)> {
    let traj = gen_head_angle(seed, &HeadAngleParams { duration_s: seconds, ..HeadAngleParams::default() })?;
    let spec = HdPopulationSpec::default();
    let raster = simulate_hd_cells(&traj, &spec, seed)?;
    let cfg = IntegratorConfig::new(tau)?;
    let velocity: Vec<f64> = traj.v.iter().step_by(STRIDE).copied().collect();
    let firing = firing_rates_strided(&raster, &cfg, STRIDE)?;
    let co = cofiring_strided(&raster, &PairingSpec::HdRing { n: spec.n_cells() }, &cfg, STRIDE)?;
    Ok((
        Dataset::new(firing, Target::Scalar(velocity.clone()), FeatureKind::Firing, seed)?,
        Dataset::new(co, Target::Scalar(velocity), FeatureKind::Cofiring, seed)?,
    ))
}

fn main() -> conjucode::Result<()> {
    let tau = 0.2;
    let (train_r, train_c) = datasets(1, 300.0, tau)?;
    let (test_r, test_c) = datasets(2, 120.0, tau)?;
    let lags = lag_grid(1000, STRIDE);
    let co = lag_sweep(&train_c, &test_c, &lags, 1e-8)?;
    let rate = lag_sweep(&train_r, &test_r, &lags, 1e-8)?;
    println!("velocity from co-firing rates: {:.3} of chance at lag {} ms", co.best_relative(), co.best_lag);
    println!("velocity from firing rates:    {:.3} of chance at lag {} ms", rate.best_relative(), rate.best_lag);
    Ok(())
}
