//! A complementary pair of theta rings: running speed from firing rates and
//! position on half the phase slope from cross-ring co-firing rates.
//!
//! `cargo run --release --example theta_rings`

use conjucode::decoder::{lag_grid, lag_sweep, Dataset, FeatureKind, Target};
use conjucode::encoders::{simulate_theta_population, ThetaRingSpec};
use conjucode::experiments::pair_scale;
use conjucode::rates::{firing_rates_strided, multi_ring_cofiring, FeatureMatrix, IntegratorConfig};
use conjucode::trajectory::{gen_track_run, TrackRunParams};

const STRIDE: usize = 10;
const LAMBDA_CM: f64 = 41.0;

fn datasets(seed: u64, seconds: f64, tau: f64) -> conjucode::Result<(Dataset, Dataset)> {
    let traj = gen_track_run(seed, &TrackRunParams { duration_s: seconds, ..TrackRunParams::default() })?;
    let rings = [ThetaRingSpec::new(LAMBDA_CM), ThetaRingSpec::new(-LAMBDA_CM)];
    let rasters = simulate_theta_population(&traj, &rings, seed)?;
    let cfg = IntegratorConfig::new(tau)?;
    let firing: Vec<FeatureMatrix> = rasters.iter().map(|r| firing_rates_strided(r, &cfg, STRIDE)).collect::<Result<_, _>>()?;
    let firing = FeatureMatrix::stack(&firing.iter().collect::<Vec<_>>())?;
    let co = multi_ring_cofiring(&rasters.iter().collect::<Vec<_>>(), &[(0, 1)], &cfg, STRIDE)?;
    let speed = traj.v.iter().step_by(STRIDE).copied().collect();
    let phase = traj.phase_within(pair_scale(LAMBDA_CM, -LAMBDA_CM))?.into_iter().step_by(STRIDE).collect();
    Ok((
        Dataset::new(firing, Target::Scalar(speed), FeatureKind::Firing, seed)?,
        Dataset::new(co, Target::Angle(phase), FeatureKind::Cofiring, seed)?,
    ))
}

fn main() -> conjucode::Result<()> {
    let tau = 0.1;
    let (train_r, train_c) = datasets(1, 300.0, tau)?;
    let (test_r, test_c) = datasets(2, 120.0, tau)?;
    let lags = lag_grid(500, STRIDE);
    let speed = lag_sweep(&train_r, &test_r, &lags, 1e-8)?;
    let position = lag_sweep(&train_c, &test_c, &lags, 1e-8)?;
    println!("speed from firing rates: {:.3} of chance", speed.best_relative());
    println!(
        "position within {:.1} cm from co-firing rates: {:.3} of chance",
        pair_scale(LAMBDA_CM, -LAMBDA_CM),
        position.best_relative()
    );
    Ok(())
}
