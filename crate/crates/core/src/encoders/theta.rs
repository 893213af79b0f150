use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{threshold_row, SpikeRaster};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, Domain};
use crate::trajectory::{Trajectory, TrajectoryKind};

/// A ring of `p` theta cells sharing one phase slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRingSpec {
    pub p: usize,
    /// Signed phase-slope distance, cm. The ring's phase advances by one
    /// cycle every `λ` cm travelled.
    pub lambda_cm: f64,
    /// Reference angular frequency, rad/s.
    pub omega0: f64,
    /// Width of the Gaussian burst kernel, seconds.
    pub sigma_s: f64,
    /// Peak per-sample spike probability.
    pub r_max: f64,
}

impl ThetaRingSpec {
    pub fn new(lambda_cm: f64) -> Self {
        Self { p: 12, lambda_cm, omega0: TAU * 7.0, sigma_s: 0.025, r_max: 0.1 }
    }

    /// Phase offset of cell `p` (0-based).
    pub fn offset(&self, p: usize) -> f64 {
        TAU * p as f64 / self.p as f64
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_cm", self.lambda_cm), ("omega0", self.omega0), ("sigma_s", self.sigma_s), ("r_max", self.r_max)] {
            ensure_finite(name, v)?;
        }
        if !(0.0..=1.0).contains(&self.r_max) {
            return Err(Error::Parameter(format!("theta r_max {} must lie in [0, 1]", self.r_max)));
        }
        if self.p < 2 || self.lambda_cm == 0.0 || self.sigma_s <= 0.0 {
            return Err(Error::Parameter("theta ring needs p >= 2, lambda != 0 and sigma > 0".into()));
        }
        Ok(())
    }

    /// Burst frequency (Hz) at constant running speed `v` cm/s.
    pub fn burst_frequency(&self, v: f64) -> f64 {
        self.omega0 / TAU + v / self.lambda_cm
    }
}

/// Samples where a monotone phase series crosses a multiple of 2π.
pub fn seed_spike_indices(psi: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let Some(first) = psi.first() else { return out };
    let mut prev = (first / TAU).floor();
    for (k, &p) in psi.iter().enumerate().skip(1) {
        let cycle = p / TAU;
        // only pay for floor once the phase leaves the current cycle
        if cycle >= prev + 1.0 || cycle < prev {
            let c = cycle.floor();
            if c > prev {
                out.push(k);
            }
            prev = c;
        }
    }
    out
}

fn cell_phase(traj: &Trajectory, spec: &ThetaRingSpec, cell: usize) -> Result<Vec<f64>> {
    let x = traj.distance()?;
    let th = spec.offset(cell);
    let dt = traj.clock.dt;
    Ok(x.iter().enumerate().map(|(k, &xk)| spec.omega0 * k as f64 * dt + th + TAU * xk / spec.lambda_cm).collect())
}

/// Per-sample spike probability of one cell: even- and odd-numbered seed
/// spikes are each convolved with the unit Gaussian, then merged by maximum.
pub fn spike_probability(traj: &Trajectory, spec: &ThetaRingSpec, cell: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let psi = cell_phase(traj, spec, cell)?;
    let seeds = seed_spike_indices(&psi);
    let sigma = spec.sigma_s / traj.clock.dt;
    let half = (5.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let len = psi.len();
    let mut even = vec![0.0; len];
    let mut odd = vec![0.0; len];
    for (n, &s) in seeds.iter().enumerate() {
        let buf = if n % 2 == 0 { &mut even } else { &mut odd };
        let lo = s.saturating_sub(half);
        let hi = (s + half + 1).min(len);
        for k in lo..hi {
            buf[k] += kernel[k + half - s];
        }
    }
    Ok(even.iter().zip(&odd).map(|(a, b)| spec.r_max * a.max(*b).min(1.0)).collect())
}

/// Simulates one ring. Cell `p` draws from stream `(seed, ThetaRing, p)`.
pub fn simulate_theta_ring(traj: &Trajectory, spec: &ThetaRingSpec, seed: u64) -> Result<SpikeRaster> {
    simulate_ring_labelled(traj, spec, seed, "theta")
}

fn simulate_ring_labelled(traj: &Trajectory, spec: &ThetaRingSpec, seed: u64, prefix: &str) -> Result<SpikeRaster> {
    if !matches!(traj.kind, TrajectoryKind::CircularTrack { .. }) {
        return Err(Error::Parameter("theta cells need a circular-track trajectory".into()));
    }
    spec.validate()?;
    let rows = (0..spec.p)
        .into_par_iter()
        .map(|cell| {
            let prob = spike_probability(traj, spec, cell)?;
            let mut rng = rng::stream(seed, Domain::ThetaRing, cell as u64);
            threshold_row(prob.len(), &mut rng, |k| prob[k])
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..spec.p).map(|c| format!("{prefix}{c:02}")).collect();
    SpikeRaster::from_row_words(labels, traj.clock, rows)
}

/// Simulates several rings; ring `r` uses a master seed derived from
/// `(seed, r)` so adding rings never perturbs earlier ones.
pub fn simulate_theta_population(traj: &Trajectory, rings: &[ThetaRingSpec], seed: u64) -> Result<Vec<SpikeRaster>> {
    rings
        .iter()
        .enumerate()
        .map(|(r, spec)| simulate_ring_labelled(traj, spec, rng::derive_seed(seed, r as u64), &format!("ring{r}_c")))
        .collect()
}
