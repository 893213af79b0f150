//! Behavioural trajectories on the shared 1 kHz sample clock.
//!
//! Two kinds of behaviour are modelled: head azimuth in an open arena
//! ([`TrajectoryKind::AngularHd`]) and running laps on a circular track
//! ([`TrajectoryKind::CircularTrack`]). Both carry a wrapped angle `q`, a
//! velocity series `v`, and for the track the cumulative distance `x`.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, Domain};

/// Default sampling interval (1 kHz).
pub const DEFAULT_DT: f64 = 0.001;

/// Track circumference used throughout the circular-track simulations.
pub const TRACK_CIRCUMFERENCE_CM: f64 = 471.0;

/// Default width of the velocity smoothing boxcar, in samples.
pub const DEFAULT_VELOCITY_WINDOW: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleClock {
    pub dt: f64,
    pub len: usize,
}

// dt is validated finite and positive on construction
impl Eq for SampleClock {}

impl SampleClock {
    pub fn new(dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        if len == 0 {
            return Err(Error::Parameter("sample clock needs at least one sample".into()));
        }
        Ok(Self { dt, len })
    }

    /// 1 kHz clock covering `duration` seconds.
    pub fn khz(duration: f64) -> Result<Self> {
        ensure_finite("duration", duration)?;
        if duration <= 0.0 {
            return Err(Error::Parameter(format!("duration must be positive, got {duration}")));
        }
        Self::new(DEFAULT_DT, (duration / DEFAULT_DT).round() as usize)
    }

    pub fn fs(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.len as f64 * self.dt
    }

    /// Number of samples spanning `seconds`, rounded to the nearest sample.
    pub fn samples(&self, seconds: f64) -> usize {
        (seconds / self.dt).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    AngularHd,
    CircularTrack { circumference_cm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    /// Wrapped angle in `[0, 2π)`.
    pub q: Vec<f64>,
    /// Cumulative travelled distance in cm (circular track only).
    pub x: Option<Vec<f64>>,
    /// rad/s for head angle, cm/s for the track.
    pub v: Vec<f64>,
    pub clock: SampleClock,
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle difference into `[-π, π)`.
pub fn wrap_diff(d: f64) -> f64 {
    let w = (d + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// Removes 2π jumps so consecutive samples differ by less than π.
pub fn unwrap_angles(q: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(q.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &a in q {
        if let Some(p) = prev {
            let d = a - p;
            if d > std::f64::consts::PI {
                offset -= TAU;
            } else if d < -std::f64::consts::PI {
                offset += TAU;
            }
        }
        out.push(a + offset);
        prev = Some(a);
    }
    out
}

/// Centered moving average; the window shrinks at the edges. `window` must be odd.
pub fn boxcar(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Parameter(format!("boxcar window must be odd and positive, got {window}")));
    }
    if window == 1 {
        return Ok(values.to_vec());
    }
    let half = window / 2;
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in values {
        acc += v;
        prefix.push(acc);
    }
    Ok((0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn circumference(&self) -> Option<f64> {
        match self.kind {
            TrajectoryKind::CircularTrack { circumference_cm } => Some(circumference_cm),
            TrajectoryKind::AngularHd => None,
        }
    }

    /// Cumulative distance; errors for head-angle trajectories.
    pub fn distance(&self) -> Result<&[f64]> {
        self.x
            .as_deref()
            .ok_or_else(|| Error::Parameter("trajectory has no travelled distance (not a circular track)".into()))
    }

    /// The continuous (unwrapped) variable that `v` is the derivative of.
    pub fn unwrapped(&self) -> Vec<f64> {
        match &self.x {
            Some(x) => x.clone(),
            None => unwrap_angles(&self.q),
        }
    }

    /// Angle of the animal within a spatial period `lambda_cm` of the track.
    pub fn phase_within(&self, lambda_cm: f64) -> Result<Vec<f64>> {
        if !(lambda_cm > 0.0) {
            return Err(Error::Parameter(format!("spatial period must be positive, got {lambda_cm}")));
        }
        Ok(self.distance()?.iter().map(|&x| wrap_angle(TAU * x / lambda_cm)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.clock.len;
        if self.q.len() != k || self.v.len() != k {
            return Err(Error::Shape(format!(
                "trajectory series lengths (q {}, v {}) differ from clock length {k}",
                self.q.len(),
                self.v.len()
            )));
        }
        if self.q.iter().any(|&a| !(0.0..TAU).contains(&a)) {
            return Err(Error::Data("angle outside [0, 2π)".into()));
        }
        if self.v.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite velocity".into()));
        }
        if let TrajectoryKind::CircularTrack { .. } = self.kind {
            let x = self.distance()?;
            if x.len() != k {
                return Err(Error::Shape("distance series length differs from clock".into()));
            }
            if x.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Data("travelled distance decreases".into()));
            }
            if self.v.iter().any(|&v| v < 0.0) {
                return Err(Error::Data("negative running speed on circular track".into()));
            }
        }
        Ok(())
    }

    /// Replaces `v` with the smoothed finite-difference estimate.
    pub fn with_velocity(mut self, window: usize) -> Result<Self> {
        let mut v = differentiate(&self, window)?;
        if matches!(self.kind, TrajectoryKind::CircularTrack { .. }) {
            for s in &mut v {
                *s = s.max(0.0);
            }
        }
        self.v = v;
        Ok(self)
    }

    /// Writes `t_s,q_rad,x_cm,v`; `x_cm` is empty for head-angle data.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "q_rad", "x_cm", "v"])?;
        for k in 0..self.len() {
            let x = self.x.as_ref().map(|x| x[k].to_string()).unwrap_or_default();
            w.write_record([
                self.clock.time(k).to_string(),
                self.q[k].to_string(),
                x,
                self.v[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the export written by [`Trajectory::write_csv`]. A track
    /// circumference is required when the `x_cm` column is populated.
    pub fn read_csv<R: Read>(input: R, circumference_cm: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let (mut t, mut q, mut x, mut v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut has_x = None;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != 4 {
                return Err(Error::Parse { line, message: format!("expected 4 fields, got {}", rec.len()) });
            }
            let field = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| Error::Parse { line, message: format!("field {i}: {e}") })
            };
            t.push(field(0)?);
            q.push(field(1)?);
            let this_has_x = !rec[2].trim().is_empty();
            if *has_x.get_or_insert(this_has_x) != this_has_x {
                return Err(Error::Parse { line, message: "x_cm column partially populated".into() });
            }
            if this_has_x {
                x.push(field(2)?);
            }
            v.push(field(3)?);
        }
        if t.is_empty() {
            return Err(Error::Data("empty trajectory file".into()));
        }
        let dt = if t.len() > 1 { (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64 } else { DEFAULT_DT };
        let clock = SampleClock::new(dt, t.len())?;
        let kind = if has_x == Some(true) {
            TrajectoryKind::CircularTrack {
                circumference_cm: circumference_cm.unwrap_or(TRACK_CIRCUMFERENCE_CM),
            }
        } else {
            TrajectoryKind::AngularHd
        };
        let traj = Trajectory { kind, q, x: if x.is_empty() { None } else { Some(x) }, v, clock };
        traj.validate()?;
        Ok(traj)
    }
}

/// Ornstein-Uhlenbeck head-turning model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadAngleParams {
    pub duration_s: f64,
    /// Noise amplitude of the angular velocity, rad/s per √s.
    pub volatility: f64,
    /// Mean-reversion rate of the angular velocity, 1/s.
    pub reversion: f64,
    /// Angular velocity is clipped to `[-v_max, v_max]`.
    pub v_max: f64,
    pub initial_velocity: f64,
}

impl Default for HeadAngleParams {
    fn default() -> Self {
        Self { duration_s: 600.0, volatility: 1.5, reversion: 0.5, v_max: 8.0, initial_velocity: 0.0 }
    }
}

/// Synthetic head-azimuth trajectory driven by a clipped OU angular velocity.
pub fn gen_head_angle(seed: u64, params: &HeadAngleParams) -> Result<Trajectory> {
    let HeadAngleParams { duration_s, volatility, reversion, v_max, initial_velocity } = *params;
    for (name, value) in [
        ("duration", duration_s),
        ("volatility", volatility),
        ("reversion", reversion),
        ("v_max", v_max),
        ("initial_velocity", initial_velocity),
    ] {
        ensure_finite(name, value)?;
    }
    if volatility < 0.0 || reversion < 0.0 || v_max <= 0.0 {
        return Err(Error::Parameter("volatility and reversion must be >= 0 and v_max > 0".into()));
    }
    let clock = SampleClock::khz(duration_s)?;
    let dt = clock.dt;
    let mut rng = rng::stream(seed, Domain::Trajectory, 0);
    let mut angle: f64 = rng.random::<f64>() * TAU;
    let mut vel = initial_velocity.clamp(-v_max, v_max);
    let noise = volatility * dt.sqrt();
    let mut q = Vec::with_capacity(clock.len);
    let mut v = Vec::with_capacity(clock.len);
    for _ in 0..clock.len {
        q.push(wrap_angle(angle));
        v.push(vel);
        angle += vel * dt;
        let xi: f64 = rng.sample(StandardNormal);
        vel = (vel - reversion * vel * dt + noise * xi).clamp(-v_max, v_max);
    }
    Ok(Trajectory { kind: TrajectoryKind::AngularHd, q, x: None, v, clock })
}

/// Paused, fluctuating-speed laps around a circular track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRunParams {
    pub duration_s: f64,
    /// Mean running speed while not paused, cm/s.
    pub mean_speed: f64,
    /// Stationary standard deviation of the running speed, cm/s.
    pub speed_sd: f64,
    /// Mean-reversion rate of the running speed, 1/s.
    pub speed_reversion: f64,
    /// Rate at which pauses begin while running, 1/s.
    pub pause_rate: f64,
    pub mean_pause_s: f64,
    /// Time constant of the stop/start transitions; 0 switches instantly.
    pub gate_tau_s: f64,
    pub circumference_cm: f64,
}

impl Default for TrackRunParams {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            mean_speed: 30.0,
            speed_sd: 12.0,
            speed_reversion: 0.5,
            pause_rate: 0.05,
            mean_pause_s: 3.0,
            gate_tau_s: 0.3,
            circumference_cm: TRACK_CIRCUMFERENCE_CM,
        }
    }
}

impl TrackRunParams {
    /// Constant speed, no pauses.
    pub fn constant(duration_s: f64, speed: f64) -> Self {
        Self { duration_s, mean_speed: speed, speed_sd: 0.0, pause_rate: 0.0, ..Self::default() }
    }
}

pub fn gen_track_run(seed: u64, params: &TrackRunParams) -> Result<Trajectory> {
    let p = *params;
    for (name, value) in [
        ("duration", p.duration_s),
        ("mean_speed", p.mean_speed),
        ("speed_sd", p.speed_sd),
        ("speed_reversion", p.speed_reversion),
        ("pause_rate", p.pause_rate),
        ("mean_pause_s", p.mean_pause_s),
        ("gate_tau_s", p.gate_tau_s),
        ("circumference_cm", p.circumference_cm),
    ] {
        ensure_finite(name, value)?;
    }
    if p.mean_speed <= 0.0 || p.circumference_cm <= 0.0 {
        return Err(Error::Parameter("mean_speed and circumference must be positive".into()));
    }
    if p.speed_sd < 0.0 || p.speed_reversion < 0.0 || p.pause_rate < 0.0 || p.mean_pause_s < 0.0 || p.gate_tau_s < 0.0 {
        return Err(Error::Parameter("track run rates and widths must be non-negative".into()));
    }
    let clock = SampleClock::khz(p.duration_s)?;
    let dt = clock.dt;
    let mut rng = rng::stream(seed, Domain::Trajectory, 1);
    let start: f64 = rng.random::<f64>() * p.circumference_cm;
    let noise = p.speed_sd * (2.0 * p.speed_reversion * dt).sqrt();
    let pause_prob = p.pause_rate * dt;
    let gate_step = if p.gate_tau_s > 0.0 { (dt / p.gate_tau_s).min(1.0) } else { 1.0 };

    let mut speed = p.mean_speed;
    let mut gate = 1.0_f64;
    let mut pause_left = 0.0_f64;
    let mut dist = start;
    let mut q = Vec::with_capacity(clock.len);
    let mut x = Vec::with_capacity(clock.len);
    let mut v = Vec::with_capacity(clock.len);
    for _ in 0..clock.len {
        let vel = speed * gate;
        x.push(dist);
        q.push(wrap_angle(TAU * dist / p.circumference_cm));
        v.push(vel);
        dist += vel * dt;

        if noise > 0.0 {
            let xi: f64 = rng.sample(StandardNormal);
            speed = (speed + p.speed_reversion * (p.mean_speed - speed) * dt + noise * xi).max(0.0);
        }
        if pause_left > 0.0 {
            pause_left -= dt;
        } else if pause_prob > 0.0 && rng.random::<f64>() < pause_prob {
            let u: f64 = rng.random::<f64>();
            pause_left = -p.mean_pause_s * (1.0 - u).ln();
        }
        let target = if pause_left > 0.0 { 0.0 } else { 1.0 };
        gate += (target - gate) * gate_step;
    }
    Ok(Trajectory {
        kind: TrajectoryKind::CircularTrack { circumference_cm: p.circumference_cm },
        q,
        x: Some(x),
        v,
        clock,
    })
}

/// Smoothed central-difference velocity of the unwrapped angle (or of the
/// travelled distance on the track).
pub fn differentiate(traj: &Trajectory, window: usize) -> Result<Vec<f64>> {
    let k = traj.len();
    if window == 0 || window % 2 == 0 {
        return Err(Error::Parameter(format!("window must be odd and positive, got {window}")));
    }
    if window >= k {
        return Err(Error::Parameter(format!("window {window} must be shorter than the series ({k} samples)")));
    }
    let u = traj.unwrapped();
    let dt = traj.clock.dt;
    let mut d = vec![0.0; k];
    d[0] = (u[1] - u[0]) / dt;
    d[k - 1] = (u[k - 1] - u[k - 2]) / dt;
    for i in 1..k - 1 {
        d[i] = (u[i + 1] - u[i - 1]) / (2.0 * dt);
    }
    boxcar(&d, window)
}

/// Unwrap-interpolate-rewrap onto a 1 kHz grid spanning the first to last
/// timestamp inclusive. Returns the unwrapped angles.
pub(crate) fn resample_unwrapped(samples: &[(f64, f64)]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::Data("resampling needs at least two samples".into()));
    }
    if samples.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
        return Err(Error::Data("non-finite sample".into()));
    }
    if let Some(i) = samples.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(Error::Data(format!("timestamps not strictly increasing at sample {}", i + 1)));
    }
    let angles: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let unwrapped = unwrap_angles(&angles);
    let t0 = samples[0].0;
    let span = samples[samples.len() - 1].0 - t0;
    let n = (span / DEFAULT_DT).round() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let t = t0 + k as f64 * DEFAULT_DT;
        while seg + 2 < samples.len() && samples[seg + 1].0 <= t {
            seg += 1;
        }
        let (ta, tb) = (samples[seg].0, samples[seg + 1].0);
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(unwrapped[seg] + frac * (unwrapped[seg + 1] - unwrapped[seg]));
    }
    Ok(out)
}

/// Resamples `(t, angle)` pairs to 1 kHz as a head-angle trajectory.
pub fn resample_1khz(samples: &[(f64, f64)]) -> Result<Trajectory> {
    let unwrapped = resample_unwrapped(samples)?;
    let clock = SampleClock::new(DEFAULT_DT, unwrapped.len())?;
    let q: Vec<f64> = unwrapped.iter().map(|&a| wrap_angle(a)).collect();
    let traj = Trajectory { kind: TrajectoryKind::AngularHd, q, x: None, v: vec![0.0; clock.len], clock };
    if clock.len < 2 {
        return Ok(traj);
    }
    let window = velocity_window_for(clock.len);
    traj.with_velocity(window)
}

fn velocity_window_for(len: usize) -> usize {
    let mut w = DEFAULT_VELOCITY_WINDOW.min(len - 1);
    if w % 2 == 0 {
        w -= 1;
    }
    w.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingFormat {
    /// `t_s,xr,yr,xg,yg`: red and green head LEDs in cm.
    TwoLed,
    /// `t_s,phi_rad`: boom-arm angle on the circular track.
    BoomAngle,
}

impl std::str::FromStr for TrackingFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_led" => Ok(Self::TwoLed),
            "boom_angle" => Ok(Self::BoomAngle),
            other => Err(Error::Config(format!("unknown tracking format '{other}'"))),
        }
    }
}

pub fn ingest_tracking_csv(path: &Path, format: TrackingFormat, smooth_window: usize) -> Result<Trajectory> {
    ingest_tracking(std::fs::File::open(path)?, format, smooth_window)
}

/// Parses tracking rows, smooths LED coordinates, derives heading and
/// resamples to 1 kHz. Boom-arm data becomes a circular-track trajectory.
pub fn ingest_tracking<R: Read>(input: R, format: TrackingFormat, smooth_window: usize) -> Result<Trajectory> {
    let width = match format {
        TrackingFormat::TwoLed => 5,
        TrackingFormat::BoomAngle => 2,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::Parse { line, message: format!("expected {width} fields, got {}", rec.len()) });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("field {i} ('{f}') is not a finite number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if let Some(i) = rows.windows(2).position(|w| w[1][0] <= w[0][0]) {
        return Err(Error::Data(format!("timestamps not strictly increasing at data row {}", i + 2)));
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    match format {
        TrackingFormat::TwoLed => {
            let col = |c: usize| -> Result<Vec<f64>> {
                boxcar(&rows.iter().map(|r| r[c]).collect::<Vec<_>>(), smooth_window)
            };
            let (xr, yr, xg, yg) = (col(1)?, col(2)?, col(3)?, col(4)?);
            let samples: Vec<(f64, f64)> = (0..rows.len())
                .map(|i| (times[i], wrap_angle((yr[i] - yg[i]).atan2(xr[i] - xg[i]))))
                .collect();
            resample_1khz(&samples)
        }
        TrackingFormat::BoomAngle => {
            let samples: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            let unwrapped = resample_unwrapped(&samples)?;
            let c = TRACK_CIRCUMFERENCE_CM;
            let mut dist = f64::NEG_INFINITY;
            // laps are counted forward; backward jitter of the encoder is clamped
            let x: Vec<f64> = unwrapped
                .iter()
                .map(|&a| {
                    dist = dist.max(c * a / TAU);
                    dist
                })
                .collect();
            let q = x.iter().map(|&d| wrap_angle(TAU * d / c)).collect();
            let clock = SampleClock::new(DEFAULT_DT, x.len())?;
            let traj = Trajectory {
                kind: TrajectoryKind::CircularTrack { circumference_cm: c },
                q,
                x: Some(x),
                v: vec![0.0; clock.len],
                clock,
            };
            if clock.len < 2 {
                return Ok(traj);
            }
            traj.with_velocity(velocity_window_for(clock.len))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_volatility_holds_still() {
        let p = HeadAngleParams { duration_s: 2.0, volatility: 0.0, ..Default::default() };
        let t = gen_head_angle(3, &p).unwrap();
        assert!(t.v.iter().all(|&v| v == 0.0));
        assert!(t.q.iter().all(|&q| q == t.q[0]));
    }

    #[test]
    fn ten_seconds_is_ten_thousand_samples() {
        let p = HeadAngleParams { duration_s: 10.0, ..Default::default() };
        assert_eq!(gen_head_angle(1, &p).unwrap().len(), 10_000);
    }

    #[test]
    fn head_angle_rejects_nan() {
        let p = HeadAngleParams { volatility: f64::NAN, ..Default::default() };
        assert!(matches!(gen_head_angle(1, &p), Err(Error::Parameter(_))));
    }

    #[test]
    fn generators_are_deterministic() {
        let p = HeadAngleParams { duration_s: 5.0, ..Default::default() };
        assert_eq!(gen_head_angle(11, &p).unwrap(), gen_head_angle(11, &p).unwrap());
        let r = TrackRunParams { duration_s: 5.0, ..Default::default() };
        assert_eq!(gen_track_run(11, &r).unwrap(), gen_track_run(11, &r).unwrap());
        assert_ne!(gen_track_run(11, &r).unwrap(), gen_track_run(12, &r).unwrap());
    }

    #[test]
    fn constant_speed_distance_is_linear() {
        let t = gen_track_run(5, &TrackRunParams::constant(4.0, 25.0)).unwrap();
        let x = t.distance().unwrap();
        for k in 0..t.len() {
            assert!((x[k] - x[0] - 25.0 * k as f64 * 0.001).abs() < 1e-9);
        }
    }

    #[test]
    fn two_thirds_lap_in_fifteen_seconds() {
        let t = gen_track_run(2, &TrackRunParams::constant(15.0, 314.0 / 15.0)).unwrap();
        let x = t.distance().unwrap();
        let covered = x[x.len() - 1] - x[0];
        assert!((covered - 314.0).abs() < 0.1, "covered {covered}");
        assert!((covered / TRACK_CIRCUMFERENCE_CM - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn mean_speed_matches_distance_over_span() {
        let t = gen_track_run(9, &TrackRunParams { duration_s: 60.0, ..Default::default() }).unwrap();
        let x = t.distance().unwrap();
        let n = t.len();
        // v[k] drives x[k] -> x[k+1]
        let mean_v: f64 = t.v[..n - 1].iter().sum::<f64>() / (n - 1) as f64;
        let span = (n - 1) as f64 * t.clock.dt;
        assert!((mean_v - (x[n - 1] - x[0]) / span).abs() < 1e-9);
    }

    #[test]
    fn track_invariants_hold() {
        let t = gen_track_run(4, &TrackRunParams { duration_s: 120.0, pause_rate: 0.2, ..Default::default() }).unwrap();
        t.validate().unwrap();
        let x = t.distance().unwrap();
        for k in 0..t.len() {
            let expect = wrap_angle(TAU * x[k] / TRACK_CIRCUMFERENCE_CM);
            assert!(wrap_diff(t.q[k] - expect).abs() < 1e-9);
        }
        assert!(t.v.iter().any(|&v| v < 1.0), "pauses should bring the animal to a stop");
    }

    #[test]
    fn resample_identity_at_1khz() {
        let samples: Vec<(f64, f64)> = (0..500).map(|k| (k as f64 * 0.001, (k as f64 * 0.01) % TAU)).collect();
        let t = resample_1khz(&samples).unwrap();
        assert_eq!(t.len(), 500);
        for (k, s) in samples.iter().enumerate() {
            assert!(wrap_diff(t.q[k] - s.1).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_midpoint() {
        let t = resample_1khz(&[(0.0, 0.0), (1.0, 0.1)]).unwrap();
        assert_eq!(t.len(), 1001);
        assert!((t.q[500] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn resample_single_sample_is_data_error() {
        assert!(matches!(resample_1khz(&[(0.0, 1.0)]), Err(Error::Data(_))));
        assert!(matches!(resample_1khz(&[(0.0, 1.0), (0.0, 2.0)]), Err(Error::Data(_))));
    }

    #[test]
    fn resample_through_seam_matches_unwrapped_oracle() {
        // 6.2 rad -> 0.1 rad crosses 2π; interpolation must not sweep through π
        let t = resample_1khz(&[(0.0, 6.2), (0.1, 0.1)]).unwrap();
        let total = 0.1 + TAU - 6.2;
        for (k, &q) in t.q.iter().enumerate() {
            let oracle = wrap_angle(6.2 + total * (k as f64 / 100.0));
            assert!(wrap_diff(q - oracle).abs() < 1e-12);
            assert!(wrap_diff(q - PI).abs() > 2.0);
        }
    }

    #[test]
    fn differentiate_constant_and_ramp() {
        let clock = SampleClock::new(0.001, 2000).unwrap();
        let flat = Trajectory { kind: TrajectoryKind::AngularHd, q: vec![1.0; 2000], x: None, v: vec![0.0; 2000], clock };
        assert!(differentiate(&flat, 11).unwrap().iter().all(|&v| v == 0.0));

        let a = 3.0;
        let ramp_q: Vec<f64> = (0..2000).map(|k| wrap_angle(5.0 + a * k as f64 * 0.001)).collect();
        let ramp = Trajectory { q: ramp_q, ..flat };
        let v = differentiate(&ramp, 11).unwrap();
        // the ramp wraps past 2π around k ≈ 428
        for &vk in &v[10..1990] {
            assert!((vk - a).abs() < 1e-6, "{vk}");
        }
    }

    #[test]
    fn differentiate_rejects_bad_windows() {
        let t = gen_head_angle(1, &HeadAngleParams { duration_s: 0.05, ..Default::default() }).unwrap();
        assert!(differentiate(&t, 4).is_err());
        assert!(differentiate(&t, 51).is_err());
        assert!(differentiate(&t, 49).is_ok());
    }

    #[test]
    fn differentiate_then_integrate_recovers_angle() {
        let n = 20_000;
        let dt = 0.001;
        let u: Vec<f64> = (0..n).map(|k| {
            let t = k as f64 * dt;
            2.0 + 0.8 * t + 0.5 * (0.7 * t).sin()
        }).collect();
        let q = u.iter().map(|&a| wrap_angle(a)).collect();
        let traj = Trajectory {
            kind: TrajectoryKind::AngularHd,
            q,
            x: None,
            v: vec![0.0; n],
            clock: SampleClock::new(dt, n).unwrap(),
        };
        let v = differentiate(&traj, 1).unwrap();
        let mut acc = u[0];
        let mut worst: f64 = 0.0;
        for k in 1..n {
            acc += 0.5 * (v[k - 1] + v[k]) * dt;
            if k > 1 && k < n - 1 {
                worst = worst.max((acc - u[k]).abs());
            }
        }
        assert!(worst < 1e-6, "max integration error {worst}");
    }

    #[test]
    fn led_heading_due_north() {
        let mut csv = String::from("t_s,xr,yr,xg,yg\n");
        for i in 0..30 {
            csv.push_str(&format!("{},{},{},{},{}\n", i as f64 / 30.0, 10.0 + i as f64, 25.0, 10.0 + i as f64, 14.0));
        }
        let t = ingest_tracking(csv.as_bytes(), TrackingFormat::TwoLed, 15).unwrap();
        assert!(t.q.iter().all(|&q| (q - PI / 2.0).abs() < 1e-9));
        let span = 29.0 / 30.0;
        assert_eq!(t.len(), (span * 1000.0_f64).round() as usize + 1);
    }

    #[test]
    fn led_window_one_is_raw_arctangent() {
        let mut csv = String::from("t_s,xr,yr,xg,yg\n");
        let mut raw = Vec::new();
        for i in 0..10 {
            let a = 0.3 * i as f64;
            let (xr, yr) = (a.cos(), a.sin());
            raw.push(wrap_angle(yr.atan2(xr)));
            csv.push_str(&format!("{},{xr},{yr},0,0\n", i as f64 * 0.001));
        }
        let t = ingest_tracking(csv.as_bytes(), TrackingFormat::TwoLed, 1).unwrap();
        for (k, &r) in raw.iter().enumerate() {
            assert!(wrap_diff(t.q[k] - r).abs() < 1e-9);
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "t_s,phi_rad\n0.0,0.1\n0.01,abc\n";
        match ingest_tracking(csv.as_bytes(), TrackingFormat::BoomAngle, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let backwards = "t_s,phi_rad\n0.0,0.1\n0.01,0.2\n0.005,0.3\n";
        assert!(matches!(ingest_tracking(backwards.as_bytes(), TrackingFormat::BoomAngle, 1), Err(Error::Data(_))));
    }

    #[test]
    fn boom_angle_becomes_track() {
        let mut csv = String::from("t_s,phi_rad\n");
        for i in 0..=200 {
            csv.push_str(&format!("{},{}\n", i as f64 * 0.01, wrap_angle(0.5 * i as f64 * 0.01)));
        }
        let t = ingest_tracking(csv.as_bytes(), TrackingFormat::BoomAngle, 1).unwrap();
        t.validate().unwrap();
        let expected_speed = 0.5 * TRACK_CIRCUMFERENCE_CM / TAU;
        assert!((t.v[1000] - expected_speed).abs() < 1e-6);
    }

    #[test]
    fn csv_export_round_trips() {
        let t = gen_track_run(3, &TrackRunParams { duration_s: 0.5, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice(), Some(TRACK_CIRCUMFERENCE_CM)).unwrap();
        assert_eq!(back.q, t.q);
        assert_eq!(back.x, t.x);
        assert_eq!(back.v, t.v);
    }
}
