use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::trajectory::wrap_diff;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Data("cannot score an empty series".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Mean of squared errors wrapped into `[-π, π)`, rad².
pub fn circular_mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| wrap_diff(p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Error of a series against itself after a circular shift of `shift` samples.
pub fn shifted_mse(target: &[f64], shift: usize, circular: bool) -> Result<f64> {
    let n = target.len();
    if n == 0 {
        return Err(Error::Data("cannot score an empty series".into()));
    }
    let err = |k: usize| {
        let d = target[(k + shift) % n] - target[k];
        if circular {
            wrap_diff(d).powi(2)
        } else {
            d * d
        }
    };
    Ok((0..n).map(err).sum::<f64>() / n as f64)
}

/// Mean error of the target against circularly shifted copies of itself,
/// with shifts drawn uniformly from `[min_shift, len − min_shift]`.
pub fn chance_baseline(target: &[f64], circular: bool, min_shift: usize, n_shuffles: usize, seed: u64) -> Result<f64> {
    let n = target.len();
    if n_shuffles == 0 {
        return Err(Error::Parameter("chance baseline needs at least one shuffle".into()));
    }
    if min_shift == 0 || n < 2 * min_shift {
        return Err(Error::Data(format!("series of {n} samples is too short for shifts of at least {min_shift}")));
    }
    let mut rng = rng::stream(seed, Domain::Shuffle, 0);
    let mut total = 0.0;
    for _ in 0..n_shuffles {
        let shift = rng.random_range(min_shift..=n - min_shift);
        total += shifted_mse(target, shift, circular)?;
    }
    Ok(total / n_shuffles as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCurve {
    pub centers: Vec<f64>,
    /// Mean of the row within each bin; NaN where the bin is empty.
    pub mean: Vec<f64>,
    pub occupancy: Vec<usize>,
    /// Bins holding fewer than [`MIN_OCCUPANCY`] samples.
    pub sparse: Vec<bool>,
}

pub const MIN_OCCUPANCY: usize = 100;

impl TuningCurve {
    /// Bin index of the largest well-sampled mean.
    pub fn argmax(&self) -> Option<usize> {
        (0..self.mean.len()).filter(|&b| !self.sparse[b]).max_by(|&a, &b| self.mean[a].total_cmp(&self.mean[b]))
    }
}

/// Occupancy-normalised mean of `row` in `bins` equal bins of the covariate
/// over `[lo, hi)`. Samples outside the range are ignored.
pub fn tuning_curve(row: &[f64], covariate: &[f64], lo: f64, hi: f64, bins: usize) -> Result<TuningCurve> {
    check_pair(row, covariate)?;
    if bins == 0 || !(hi > lo) {
        return Err(Error::Parameter("tuning curve needs bins >= 1 and hi > lo".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut sum = vec![0.0; bins];
    let mut occupancy = vec![0usize; bins];
    for (&v, &x) in row.iter().zip(covariate) {
        if x >= lo && x < hi {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            sum[b] += v;
            occupancy[b] += 1;
        }
    }
    Ok(TuningCurve {
        centers: (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect(),
        mean: sum.iter().zip(&occupancy).map(|(s, &o)| if o == 0 { f64::NAN } else { s / o as f64 }).collect(),
        sparse: occupancy.iter().map(|&o| o < MIN_OCCUPANCY).collect(),
        occupancy,
    })
}

/// Counts of positive spike-pair lags; bin `i` covers `(i·bin, (i+1)·bin]`.
pub fn autocorrelogram(spike_times: &[f64], max_lag: f64, bin: f64) -> Result<Vec<u64>> {
    if !(bin > 0.0 && max_lag >= bin) {
        return Err(Error::Parameter("autocorrelogram needs 0 < bin <= max_lag".into()));
    }
    let bins = (max_lag / bin).round() as usize;
    let mut hist = vec![0u64; bins];
    for (a, &ta) in spike_times.iter().enumerate() {
        for &tb in &spike_times[a + 1..] {
            let d = tb - ta;
            if d > max_lag {
                break;
            }
            if d > 0.0 {
                let i = ((d / bin).ceil() as usize).saturating_sub(1);
                if i < bins {
                    hist[i] += 1;
                }
            }
        }
    }
    Ok(hist)
}

/// Lag of the tallest autocorrelogram bin after `min_lag`, seconds (bin centre).
pub fn first_peak(hist: &[u64], bin: f64, min_lag: f64) -> Option<f64> {
    let start = (min_lag / bin) as usize;
    (start..hist.len()).max_by_key(|&i| (hist[i], std::cmp::Reverse(i))).map(|i| (i as f64 + 0.5) * bin)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn regression_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("regressor has zero variance".into()));
    }
    Ok(sxy / sxx)
}

pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn circular_mse_basics() {
        let t = vec![0.1, 3.0, 6.2];
        assert_eq!(circular_mse(&t, &t).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|a| (a + PI) % TAU).collect();
        assert!((circular_mse(&shifted, &t).unwrap() - PI * PI).abs() < 1e-12);
        assert!(circular_mse(&[], &[]).is_err());
    }

    #[test]
    fn uniform_prediction_error_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let pred: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
        let truth = vec![1.0; n];
        let got = circular_mse(&pred, &truth).unwrap();
        let analytic = PI * PI / 3.0;
        assert!((got - analytic).abs() < 0.02 * analytic, "{got}");
    }

    #[test]
    fn chance_baseline_cases() {
        assert_eq!(chance_baseline(&vec![2.0; 1000], false, 100, 5, 1).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let var = 1.0 / 3.0;
        let base = chance_baseline(&noise, false, 30_000, 10, 2).unwrap();
        assert!((base - 2.0 * var).abs() < 0.02 * 2.0 * var, "{base}");
        // a single shuffle reproduces the single-shift error
        let mut shift_rng = rng::stream(9, Domain::Shuffle, 0);
        let shift = shift_rng.random_range(30_000..=200_000 - 30_000);
        assert_eq!(chance_baseline(&noise, false, 30_000, 1, 9).unwrap(), shifted_mse(&noise, shift, false).unwrap());
    }

    #[test]
    fn tuning_curve_of_constant_row() {
        let cov: Vec<f64> = (0..10_000).map(|i| (i % 100) as f64).collect();
        let curve = tuning_curve(&vec![3.5; 10_000], &cov, 0.0, 100.0, 10).unwrap();
        assert!(curve.mean.iter().all(|&m| m == 3.5));
        assert!(curve.occupancy.iter().all(|&o| o == 1000));
        assert!(curve.sparse.iter().all(|&s| !s));
    }

    #[test]
    fn periodic_train_autocorrelogram() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.125).collect();
        let hist = autocorrelogram(&times, 0.5, 0.005).unwrap();
        let peak = first_peak(&hist, 0.005, 0.0).unwrap();
        assert!((peak - 0.125).abs() <= 0.005);
        let nonzero: Vec<usize> = (0..hist.len()).filter(|&i| hist[i] > 0).collect();
        assert_eq!(nonzero.len(), 4);
    }

    #[test]
    fn poisson_autocorrelogram_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rate = 20.0;
        let dur = 2000.0;
        let mut t = 0.0;
        let mut times = Vec::new();
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / rate;
            if t > dur {
                break;
            }
            times.push(t);
        }
        let bin = 0.01;
        let hist = autocorrelogram(&times, 0.5, bin).unwrap();
        // expected count per bin: N · rate · bin
        let expect = times.len() as f64 * rate * bin;
        for (i, &h) in hist.iter().enumerate().skip(1) {
            assert!((h as f64 - expect).abs() < 5.0 * expect.sqrt(), "bin {i}: {h} vs {expect}");
        }
    }

    #[test]
    fn slope_and_correlation() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        assert!((regression_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!((correlation(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }
}
