//! Head angle from head-direction firing rates: fitted read-out with a lag
//! sweep, compared with the fixed sine/cosine weights.
//!
//! `cargo run --release --example hd_sigma`

use conjucode::decoder::{evaluate, fixed_hd_decoder, lag_grid, lag_sweep, Dataset, FeatureKind, Target};
use conjucode::encoders::{simulate_hd_cells, HdPopulationSpec};
use conjucode::rates::{firing_rates_strided, IntegratorConfig};
use conjucode::trajectory::{gen_head_angle, HeadAngleParams};

const STRIDE: usize = 10;

fn dataset(seed: u64, seconds: f64, tau: f64) -> conjucode::Result<Dataset> {
    let traj = gen_head_angle(seed, &HeadAngleParams { duration_s: seconds, ..HeadAngleParams::default() })?;
    let raster = simulate_hd_cells(&traj, &HdPopulationSpec::default(), seed)?;
    let rates = firing_rates_strided(&raster, &IntegratorConfig::new(tau)?, STRIDE)?;
    let angle = traj.q.iter().step_by(STRIDE).copied().collect();
    Dataset::new(rates, Target::Angle(angle), FeatureKind::Firing, seed)
}

fn main() -> conjucode::Result<()> {
    let tau = 0.2;
    let train = dataset(1, 300.0, tau)?;
    let test = dataset(2, 120.0, tau)?;
    let sweep = lag_sweep(&train, &test, &lag_grid(600, STRIDE), 1e-8)?;
    println!(
        "fitted weights: best lag {} ms, circular MSE {:.4} rad², {:.3} of chance",
        sweep.best_lag,
        sweep.best_mse(),
        sweep.best_relative()
    );
    let fixed = evaluate(&fixed_hd_decoder(test.features.labels.clone(), sweep.best_lag, STRIDE), &test)?;
    println!("fixed sine/cosine weights at the same lag: {:.3} of chance", fixed.relative());
    Ok(())
}
