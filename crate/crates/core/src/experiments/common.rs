//! Plumbing shared by the scenarios.

use super::config::ScenarioConfig;
use super::report::{Cell, Table};
use crate::decoder::{lag_grid, Dataset, Design, FeatureKind, LagSweep, Target};
use crate::error::{Error, Result};
use crate::rates::FeatureMatrix;
use crate::rng::derive_seed;
use crate::trajectory::DEFAULT_DT;

/// Seeds of repetition `r`; repetition 0 uses the configured seeds.
pub(crate) fn rep_seeds(cfg: &ScenarioConfig, r: usize) -> (u64, u64) {
    if r == 0 {
        (cfg.train_seed, cfg.test_seed)
    } else {
        (derive_seed(cfg.train_seed, r as u64), derive_seed(cfg.test_seed, r as u64))
    }
}

/// Values at the feature columns `0, stride, 2·stride, …`.
pub(crate) fn subsample(x: &[f64], stride: usize) -> Vec<f64> {
    x.iter().step_by(stride).copied().collect()
}

pub(crate) fn seconds(samples: usize) -> f64 {
    samples as f64 * DEFAULT_DT
}

/// Which lags a sweep visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LagSearch {
    /// Every lag step up to the span.
    Full,
    /// Quarter-τ grid, then every lag step around its optimum.
    Refined,
}

/// Train features with a prepared design, plus the matching test features.
pub(crate) struct Channels {
    pub design: Design,
    pub train: Dataset,
    pub test: Dataset,
    pub tau: f64,
}

impl Channels {
    pub fn new(cfg: &ScenarioConfig, tau: f64, train: FeatureMatrix, test: FeatureMatrix, seeds: (u64, u64)) -> Result<Self> {
        let train_cols = train.cols;
        let train = Dataset::new(train, Target::Scalar(vec![0.0; train_cols]), FeatureKind::Combined, seeds.0)?;
        let test_cols = test.cols;
        let test = Dataset::new(test, Target::Scalar(vec![0.0; test_cols]), FeatureKind::Combined, seeds.1)?;
        let design = Design::new(&train, cfg.max_lag(tau), cfg.ridge)?;
        Ok(Self { design, train, test, tau })
    }

    /// Fits `rows` to the training target and scores on the test target.
    pub fn sweep(
        &self,
        cfg: &ScenarioConfig,
        rows: &[usize],
        kind: FeatureKind,
        train_target: Target,
        test_target: Target,
        search: LagSearch,
    ) -> Result<LagSweep> {
        let test = self.test.with_target(test_target)?;
        let sweep = match search {
            LagSearch::Full => {
                let lags = lag_grid(self.design.max_lag(), cfg.lag_step());
                self.design.sweep(rows, &train_target, &test, &lags, kind)?
            }
            LagSearch::Refined => {
                self.design.sweep_refined(rows, &train_target, &test, cfg.coarse_step(self.tau), cfg.lag_step(), kind)?
            }
        };
        if !sweep.result.mse.is_finite() || !sweep.result.chance_mse.is_finite() || sweep.result.chance_mse <= 0.0 {
            return Err(Error::Data(format!("degenerate decoding result: mse {} against chance {}", sweep.result.mse, sweep.result.chance_mse)));
        }
        Ok(sweep)
    }
}

/// Standard decoding-table layout shared by several scenarios.
pub(crate) fn decoding_table(name: &str) -> Table {
    Table::new(name, &["repetition", "tau_s", "target", "channel", "lag_s", "mse", "chance_mse", "relative"])
}

pub(crate) fn decoding_row(rep: usize, tau: f64, target: &str, channel: &str, s: &LagSweep) -> Vec<Cell> {
    vec![
        rep.into(),
        tau.into(),
        target.into(),
        channel.into(),
        seconds(s.best_lag).into(),
        s.result.mse.into(),
        s.result.chance_mse.into(),
        s.result.relative().into(),
    ]
}

/// Mean of a non-empty slice.
pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

pub(crate) fn fmt_list(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

/// First `secs` seconds of an aligned decoding result, as plot series.
pub(crate) fn trace(s: &LagSweep, stride: usize, secs: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let step = stride as f64 * DEFAULT_DT;
    let n = ((secs / step) as usize).min(s.result.predicted.len());
    let t = (0..n).map(|i| i as f64 * step).collect();
    (t, s.result.target[..n].to_vec(), s.result.predicted[..n].to_vec())
}
