use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{threshold_row, SpikeRaster};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, Domain};
use crate::trajectory::{Trajectory, TrajectoryKind};

/// Modified Bessel function of the first kind, order 0 (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= y / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Von Mises tuning shared by head-direction and grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VonMises {
    r_max: f64,
    kappa: f64,
    preferred: Vec<f64>,
    peak_normalized: bool,
}

impl VonMises {
    fn validate(&self) -> Result<()> {
        ensure_finite("r_max", self.r_max)?;
        ensure_finite("kappa", self.kappa)?;
        if self.preferred.len() < 2 {
            return Err(Error::Parameter("a tuned population needs at least 2 cells".into()));
        }
        if self.r_max < 0.0 || self.kappa <= 0.0 {
            return Err(Error::Parameter("r_max must be >= 0 and kappa > 0".into()));
        }
        if self.preferred.iter().any(|p| !(0.0..TAU).contains(p)) {
            return Err(Error::Parameter("preferred angles must lie in [0, 2π)".into()));
        }
        Ok(())
    }

    /// Rate in Hz at angular distance `delta` from the preferred angle.
    fn rate(&self, delta: f64) -> f64 {
        if self.peak_normalized {
            self.r_max * (self.kappa * (delta.cos() - 1.0)).exp()
        } else {
            self.r_max * (self.kappa * delta.cos()).exp() / (TAU * bessel_i0(self.kappa))
        }
    }

    fn simulate(&self, angles: &[f64], dt: f64, seed: u64, domain: Domain, labels: Vec<String>, traj: &Trajectory) -> Result<SpikeRaster> {
        self.validate()?;
        let rows = self
            .preferred
            .par_iter()
            .enumerate()
            .map(|(n, &pref)| {
                let mut rng = rng::stream(seed, domain, n as u64);
                threshold_row(angles.len(), &mut rng, |k| self.rate(angles[k] - pref) * dt)
            })
            .collect::<Result<Vec<_>>>()?;
        SpikeRaster::from_row_words(labels, traj.clock, rows)
    }
}

fn evenly_spaced(n: usize) -> Vec<f64> {
    // cell i (0-based) prefers 2π(i+1)/N, matching the 1-based fixed read-out weights
    (0..n).map(|i| ((i + 1) as f64 * TAU / n as f64) % TAU).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdPopulationSpec {
    /// Scale of the Von Mises rate, Hz. Used literally as the coefficient of
    /// the normalised density unless `peak_normalized` is set.
    pub r_max: f64,
    pub kappa: f64,
    /// Preferred directions, radians.
    pub preferred: Vec<f64>,
    /// When set, `r_max` is the realised peak rate instead.
    #[serde(default)]
    pub peak_normalized: bool,
}

impl HdPopulationSpec {
    pub fn evenly_spaced(n: usize, r_max: f64, kappa: f64) -> Self {
        Self { r_max, kappa, preferred: evenly_spaced(n), peak_normalized: false }
    }

    pub fn n_cells(&self) -> usize {
        self.preferred.len()
    }

    /// Expected rate (Hz) of a cell when the head points at angle `q`.
    pub fn rate(&self, cell: usize, q: f64) -> f64 {
        self.tuning().rate(q - self.preferred[cell])
    }

    fn tuning(&self) -> VonMises {
        VonMises { r_max: self.r_max, kappa: self.kappa, preferred: self.preferred.clone(), peak_normalized: self.peak_normalized }
    }
}

impl Default for HdPopulationSpec {
    fn default() -> Self {
        Self::evenly_spaced(12, 100.0, 0.5)
    }
}

pub fn simulate_hd_cells(traj: &Trajectory, spec: &HdPopulationSpec, seed: u64) -> Result<SpikeRaster> {
    if traj.kind != TrajectoryKind::AngularHd {
        return Err(Error::Parameter("head-direction cells need an angular head trajectory".into()));
    }
    let labels = (0..spec.n_cells()).map(|n| format!("hd{n:02}")).collect();
    spec.tuning().simulate(&traj.q, traj.clock.dt, seed, Domain::HdCells, labels, traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPopulationSpec {
    pub r_max: f64,
    pub kappa: f64,
    /// Vertex spacing along the track, cm.
    pub spacing_cm: f64,
    /// Spatial phase of each cell, cm within `[0, spacing_cm)`.
    pub phases_cm: Vec<f64>,
    #[serde(default)]
    pub peak_normalized: bool,
}

impl GridPopulationSpec {
    pub fn evenly_spaced(n: usize, r_max: f64, kappa: f64, spacing_cm: f64) -> Self {
        let phases_cm = evenly_spaced(n).into_iter().map(|a| a / TAU * spacing_cm).collect();
        Self { r_max, kappa, spacing_cm, phases_cm, peak_normalized: false }
    }

    pub fn n_cells(&self) -> usize {
        self.phases_cm.len()
    }

    fn tuning(&self) -> VonMises {
        let preferred = self.phases_cm.iter().map(|p| (TAU * p / self.spacing_cm) % TAU).collect();
        VonMises { r_max: self.r_max, kappa: self.kappa, preferred, peak_normalized: self.peak_normalized }
    }
}

impl Default for GridPopulationSpec {
    /// Twelve cells with three fields per lap of the 471 cm track.
    fn default() -> Self {
        Self::evenly_spaced(12, 100.0, 0.25, crate::trajectory::TRACK_CIRCUMFERENCE_CM / 3.0)
    }
}

/// Grid cells on the circular track. The within-period angle is
/// `2π·x/Λ mod 2π`, so `Λ = C/3` yields three fields per lap.
pub fn simulate_grid_cells(traj: &Trajectory, spec: &GridPopulationSpec, seed: u64) -> Result<SpikeRaster> {
    if !matches!(traj.kind, TrajectoryKind::CircularTrack { .. }) {
        return Err(Error::Parameter("grid cells need a circular-track trajectory".into()));
    }
    ensure_finite("spacing_cm", spec.spacing_cm)?;
    if spec.spacing_cm <= 0.0 || spec.phases_cm.iter().any(|p| !(0.0..spec.spacing_cm).contains(p)) {
        return Err(Error::Parameter("grid spacing must be positive and phases within [0, spacing)".into()));
    }
    let angles = traj.phase_within(spec.spacing_cm)?;
    let labels = (0..spec.n_cells()).map(|n| format!("grid{n:02}")).collect();
    spec.tuning().simulate(&angles, traj.clock.dt, seed, Domain::GridCells, labels, traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{gen_track_run, wrap_angle, SampleClock, TrackRunParams};

    fn fixed_angle(q: f64, seconds: f64) -> Trajectory {
        let clock = SampleClock::khz(seconds).unwrap();
        Trajectory { kind: TrajectoryKind::AngularHd, q: vec![q; clock.len], x: None, v: vec![0.0; clock.len], clock }
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(0.5) - 1.063_483_370_741_323_6).abs() < 1e-14);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(10.0) - 2815.716_628_466_254).abs() < 1e-8);
    }

    #[test]
    fn preferred_directions_thirty_degrees_apart() {
        let spec = HdPopulationSpec::default();
        for w in spec.preferred.windows(2) {
            assert!((wrap_angle(w[1] - w[0]) - TAU / 12.0).abs() < 1e-12);
        }
        // each tuning curve peaks at its own preferred direction
        for n in 0..12 {
            let peak = spec.rate(n, spec.preferred[n]);
            for m in 0..12 {
                assert!(spec.rate(n, spec.preferred[m]) <= peak);
            }
        }
    }

    #[test]
    fn zero_rate_gives_empty_raster() {
        let traj = fixed_angle(1.0, 2.0);
        let spec = HdPopulationSpec::evenly_spaced(12, 0.0, 0.5);
        assert_eq!(simulate_hd_cells(&traj, &spec, 1).unwrap().total_spikes(), 0);
    }

    #[test]
    fn probability_overflow_is_config_error() {
        let traj = fixed_angle(0.0, 0.1);
        let spec = HdPopulationSpec::evenly_spaced(4, 1.0e5, 0.5);
        assert!(matches!(simulate_hd_cells(&traj, &spec, 1), Err(Error::Config(_))));
    }

    #[test]
    fn rate_at_preferred_matches_binomial_mean() {
        let spec = HdPopulationSpec::default();
        let pref = spec.preferred[4];
        let traj = fixed_angle(pref, 100.0);
        let raster = simulate_hd_cells(&traj, &spec, 21).unwrap();
        let p = 100.0 * 0.5f64.exp() / (TAU * bessel_i0(0.5)) * 0.001;
        let k = traj.len() as f64;
        let mean = k * p;
        let se = (k * p * (1.0 - p)).sqrt();
        let got = raster.spike_count(4) as f64;
        assert!((got - mean).abs() < 3.0 * se, "{got} vs {mean} ± {se}");
    }

    #[test]
    fn wrong_trajectory_kind_rejected() {
        let track = gen_track_run(1, &TrackRunParams { duration_s: 1.0, ..Default::default() }).unwrap();
        assert!(simulate_hd_cells(&track, &HdPopulationSpec::default(), 1).is_err());
        let hd = fixed_angle(0.0, 1.0);
        assert!(simulate_grid_cells(&hd, &GridPopulationSpec::default(), 1).is_err());
    }

    #[test]
    fn grid_fields_repeat_three_times_per_lap() {
        // constant speed, three full laps; count spikes in 60 position bins
        let lap_s = 471.0 / 40.0;
        let traj = gen_track_run(3, &TrackRunParams::constant(lap_s * 30.0, 40.0)).unwrap();
        let spec = GridPopulationSpec::evenly_spaced(12, 100.0, 2.0, 157.0);
        let raster = simulate_grid_cells(&traj, &spec, 8).unwrap();
        let bins = 60;
        let mut counts = vec![0.0; bins];
        for k in raster.spike_indices(0) {
            counts[((traj.q[k] / TAU) * bins as f64) as usize % bins] += 1.0;
        }
        // circular Fourier power peaks at three cycles per lap
        let power = |h: f64| {
            let (mut c, mut s) = (0.0, 0.0);
            for (b, &n) in counts.iter().enumerate() {
                let a = h * TAU * (b as f64 + 0.5) / bins as f64;
                c += n * a.cos();
                s += n * a.sin();
            }
            c * c + s * s
        };
        let p3 = power(3.0);
        for h in [1.0, 2.0, 4.0, 5.0] {
            assert!(p3 > 20.0 * power(h), "harmonic {h}");
        }
    }

    #[test]
    fn stationary_in_trough_is_nearly_silent() {
        let clock = SampleClock::khz(20.0).unwrap();
        let spec = GridPopulationSpec::evenly_spaced(12, 100.0, 8.0, 157.0);
        // opposite cell 0's phase within the period
        let x0 = spec.phases_cm[0] + 157.0 / 2.0;
        let traj = Trajectory {
            kind: TrajectoryKind::CircularTrack { circumference_cm: 471.0 },
            q: vec![wrap_angle(TAU * x0 / 471.0); clock.len],
            x: Some(vec![x0; clock.len]),
            v: vec![0.0; clock.len],
            clock,
        };
        let raster = simulate_grid_cells(&traj, &spec, 2).unwrap();
        let expected = 100.0 * (-8.0f64).exp() / (TAU * bessel_i0(8.0)) * 20.0;
        assert!(expected < 0.01);
        assert!(raster.spike_count(0) <= 1);
    }

    #[test]
    fn grid_spike_total_within_binomial_band() {
        let traj = gen_track_run(6, &TrackRunParams { duration_s: 120.0, ..Default::default() }).unwrap();
        let spec = GridPopulationSpec::default();
        let raster = simulate_grid_cells(&traj, &spec, 4).unwrap();
        let angles = traj.phase_within(spec.spacing_cm).unwrap();
        let tuning = spec.tuning();
        for n in 0..spec.n_cells() {
            let (mut mean, mut var) = (0.0, 0.0);
            for &a in &angles {
                let p = tuning.rate(a - tuning.preferred[n]) * 0.001;
                mean += p;
                var += p * (1.0 - p);
            }
            let got = raster.spike_count(n) as f64;
            assert!((got - mean).abs() < 3.0 * var.sqrt(), "cell {n}: {got} vs {mean}");
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let traj = fixed_angle(2.0, 3.0);
        let spec = HdPopulationSpec::default();
        assert_eq!(simulate_hd_cells(&traj, &spec, 5).unwrap(), simulate_hd_cells(&traj, &spec, 5).unwrap());
        assert_ne!(simulate_hd_cells(&traj, &spec, 5).unwrap(), simulate_hd_cells(&traj, &spec, 6).unwrap());
    }
}
