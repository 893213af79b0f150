use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoders::{GridPopulationSpec, HdPopulationSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::trajectory::{HeadAngleParams, TrackRunParams, DEFAULT_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5, Self::E6, Self::E7];

    pub fn description(self) -> &'static str {
        match self {
            Self::E1 => "head angle from head-direction firing rates; accuracy-latency sweep",
            Self::E2 => "angular velocity from head-direction co-firing rates; latency doubling",
            Self::E3 => "conjugacy swap tests and combined read-outs for head-direction cells",
            Self::E4 => "grid-cell position from firing rates and speed from co-firing rates",
            Self::E5 => "complementary theta ring pairs: position from co-firing, speed from firing",
            Self::E6 => "non-complementary theta rings: speed from both channels",
            Self::E7 => "conversion of speed cells into grid cells and channel redistribution",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scenario id {s:?}; expected one of E1..E7")))
    }
}

/// Shared shape of every theta ring in a scenario; only the phase slope varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaTemplate {
    pub p: usize,
    pub omega0: f64,
    pub sigma_s: f64,
    pub r_max: f64,
}

impl Default for ThetaTemplate {
    fn default() -> Self {
        let spec = crate::encoders::ThetaRingSpec::new(1.0);
        Self { p: spec.p, omega0: spec.omega0, sigma_s: spec.sigma_s, r_max: spec.r_max }
    }
}

impl ThetaTemplate {
    pub fn ring(&self, lambda_cm: f64) -> crate::encoders::ThetaRingSpec {
        crate::encoders::ThetaRingSpec { p: self.p, lambda_cm, omega0: self.omega0, sigma_s: self.sigma_s, r_max: self.r_max }
    }
}

/// Everything needed to reproduce one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub train_seed: u64,
    pub test_seed: u64,
    pub train_s: f64,
    pub test_s: f64,
    /// Integration time constants, seconds.
    pub taus: Vec<f64>,
    /// Time constant used where a scenario reports a single condition.
    pub reference_tau: f64,
    pub repetitions: usize,
    /// Feature columns are kept every `stride` samples.
    pub stride: usize,
    pub lag_step_s: f64,
    /// Lags are swept from 0 to `lag_span · τ`.
    pub lag_span: f64,
    pub ridge: f64,
    pub head: HeadAngleParams,
    pub track: TrackRunParams,
    pub hd: HdPopulationSpec,
    pub grid: GridPopulationSpec,
    pub theta: ThetaTemplate,
    /// Signed phase slopes of the theta rings, cm.
    pub lambdas_cm: Vec<f64>,
    /// Runs used to regress theta-cell rate on speed.
    pub tuning_runs: usize,
    pub tuning_run_s: f64,
    /// Runs used to calibrate the conversion coefficient.
    pub calibration_runs: usize,
}

pub const TAU_GRID: [f64; 6] = [0.4, 0.2, 0.1, 0.05, 0.025, 0.01];

impl ScenarioConfig {
    pub fn defaults(id: ScenarioId) -> Self {
        let mut cfg = Self {
            id,
            train_seed: 1,
            test_seed: 2,
            train_s: 600.0,
            test_s: 300.0,
            taus: TAU_GRID.to_vec(),
            reference_tau: 0.2,
            repetitions: 1,
            stride: 10,
            lag_step_s: 0.01,
            lag_span: 3.0,
            ridge: crate::decoder::DEFAULT_RIDGE,
            head: HeadAngleParams::default(),
            track: TrackRunParams::default(),
            hd: HdPopulationSpec::default(),
            grid: GridPopulationSpec::default(),
            theta: ThetaTemplate::default(),
            lambdas_cm: Vec::new(),
            tuning_runs: 0,
            tuning_run_s: 1000.0,
            calibration_runs: 0,
        };
        match id {
            ScenarioId::E1 | ScenarioId::E2 => {}
            ScenarioId::E3 => cfg.repetitions = 10,
            ScenarioId::E4 => cfg.taus = vec![0.4, 0.2, 0.1],
            ScenarioId::E5 => {
                cfg.lambdas_cm = vec![314.0, -314.0, 188.0, -188.0, 72.0, -72.0, 41.0, -41.0];
                cfg.reference_tau = 0.1;
                cfg.repetitions = 10;
                cfg.tuning_runs = 10;
            }
            ScenarioId::E6 | ScenarioId::E7 => {
                cfg.lambdas_cm = vec![314.0, 188.0, 55.0, 39.0];
                cfg.taus = vec![0.1];
                cfg.reference_tau = 0.1;
                cfg.repetitions = 10;
                if id == ScenarioId::E7 {
                    cfg.calibration_runs = 10;
                }
            }
        }
        cfg
    }

    /// Parses a config object, filling absent fields from the defaults of
    /// its scenario. Unknown fields are rejected.
    pub fn from_value(mut value: Value) -> Result<Self> {
        // a run manifest embeds its config under "config"
        if let Some(inner) = value.get("config").filter(|_| value.get("outputs").is_some()) {
            value = inner.clone();
        }
        let id: ScenarioId = match value.get("id") {
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(Error::Config(format!("scenario id must be a string, got {other}"))),
            None => return Err(Error::Config("config lacks a scenario id".into())),
        };
        let mut merged = serde_json::to_value(Self::defaults(id))?;
        merge(&mut merged, value);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.train_seed == self.test_seed {
            return fail(format!("train and test seeds must differ (both {})", self.train_seed));
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        for (name, v) in [
            ("train_s", self.train_s),
            ("test_s", self.test_s),
            ("reference_tau", self.reference_tau),
            ("lag_step_s", self.lag_step_s),
            ("lag_span", self.lag_span),
            ("ridge", self.ridge),
            ("tuning_run_s", self.tuning_run_s),
        ] {
            ensure_finite(name, v).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.train_s <= 0.0 || self.test_s <= 0.0 || self.tuning_run_s <= 0.0 {
            return fail("durations must be positive".into());
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) || self.reference_tau <= 0.0 {
            return fail("time constants must be positive and at least one is required".into());
        }
        if !self.taus.iter().any(|t| (t - self.reference_tau).abs() < 1e-12) {
            return fail(format!("reference tau {} must be one of the taus", self.reference_tau));
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        let step = (self.lag_step_s / DEFAULT_DT).round() as usize;
        if step == 0 || step % self.stride != 0 {
            return fail(format!("lag step of {step} samples must be a positive multiple of the stride {}", self.stride));
        }
        if self.lag_span < 0.0 || self.ridge < 0.0 {
            return fail("lag_span and ridge must be non-negative".into());
        }
        let needs_rings = matches!(self.id, ScenarioId::E5 | ScenarioId::E6 | ScenarioId::E7);
        if needs_rings && self.lambdas_cm.len() < 2 {
            return fail("theta scenarios need at least two rings".into());
        }
        if self.id == ScenarioId::E5 && self.lambdas_cm.len() % 2 != 0 {
            return fail("complementary ring pairs need an even number of rings".into());
        }
        if self.lambdas_cm.iter().any(|l| !l.is_finite() || *l == 0.0) {
            return fail("phase slopes must be finite and non-zero".into());
        }
        if self.id == ScenarioId::E7 && self.calibration_runs == 0 {
            return fail("the conversion scenario needs at least one calibration run".into());
        }
        Ok(())
    }

    /// Lag step in samples.
    pub fn lag_step(&self) -> usize {
        (self.lag_step_s / DEFAULT_DT).round() as usize
    }

    /// Largest swept lag for time constant `tau`, in samples, rounded up to
    /// a whole lag step.
    pub fn max_lag(&self, tau: f64) -> usize {
        let step = self.lag_step();
        ((self.lag_span * tau / DEFAULT_DT) / step as f64 - 1e-9).ceil() as usize * step
    }

    /// Coarse step for refined sweeps: about a quarter of `tau`.
    pub fn coarse_step(&self, tau: f64) -> usize {
        let step = self.lag_step();
        (((tau / 4.0 / DEFAULT_DT) / step as f64 + 1e-9).floor() as usize).max(1) * step
    }
}

/// Overlays `patch` onto `base`, recursing into objects present in both.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for id in ScenarioId::ALL {
            let cfg = ScenarioConfig::defaults(id);
            cfg.validate().unwrap();
            assert_eq!(ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"id": "E6", "train_s": 60, "track": {"mean_speed": 20}}"#).unwrap();
        assert_eq!(cfg.train_s, 60.0);
        assert_eq!(cfg.track.mean_speed, 20.0);
        assert_eq!(cfg.track.speed_sd, TrackRunParams::default().speed_sd);
        assert_eq!(cfg.lambdas_cm, vec![314.0, 188.0, 55.0, 39.0]);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            r#"{"id": "E9"}"#,
            r#"{"id": "E1", "bogus": 1}"#,
            r#"{"id": "E1", "train_seed": 5, "test_seed": 5}"#,
            r#"{"id": "E1", "repetitions": 0}"#,
            r#"{"id": "E1", "lag_step_s": 0.015}"#,
            r#"{"id": "E4", "reference_tau": 0.3}"#,
            r#"{"train_s": 10}"#,
            "not json",
        ] {
            assert!(matches!(ScenarioConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn lag_grid_bounds() {
        let cfg = ScenarioConfig::defaults(ScenarioId::E1);
        assert_eq!(cfg.max_lag(0.2), 600);
        assert_eq!(cfg.max_lag(0.01), 30);
        assert_eq!(cfg.coarse_step(0.2), 50);
        assert_eq!(cfg.coarse_step(0.01), 10);
    }
}
