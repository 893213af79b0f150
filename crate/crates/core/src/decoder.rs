//! Linear read-outs of firing-rate and co-firing-rate features.
//!
//! Features are standardised per row before solving, a bias is always
//! appended, and the normal equations are solved through an eigen
//! decomposition so the same factorisation serves every lag of a sweep.
//! Zero-variance rows receive zero weight; with `ridge = 0` the solve is the
//! minimum-norm least-squares solution in standardised coordinates.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::metrics::{chance_baseline, circular_mse, mse};
use crate::rates::FeatureMatrix;
use crate::trajectory::wrap_angle;

/// Default ridge, relative to the mean eigenvalue of the standardised Gram matrix.
pub const DEFAULT_RIDGE: f64 = 1e-8;
/// Decoded `(sin, cos)` magnitudes below this are flagged low-confidence.
pub const LOW_CONFIDENCE: f64 = 0.05;
/// Chance baselines use circular shifts of at least this many seconds.
pub const MIN_SHIFT_S: f64 = 30.0;
pub const CHANCE_SHUFFLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Firing,
    Cofiring,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    AngleSincos,
    Scalar,
}

/// A target series aligned with the feature columns.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Angles in radians; fitted through their sine and cosine.
    Angle(Vec<f64>),
    Scalar(Vec<f64>),
}

impl Target {
    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Angle(_) => TargetKind::AngleSincos,
            Target::Scalar(_) => TargetKind::Scalar,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Target::Angle(v) | Target::Scalar(v) => v,
        }
    }

    /// Series fitted by the linear read-out.
    fn components(&self) -> Vec<Vec<f64>> {
        match self {
            Target::Angle(a) => vec![a.iter().map(|x| x.sin()).collect(), a.iter().map(|x| x.cos()).collect()],
            Target::Scalar(v) => vec![v.clone()],
        }
    }

    fn is_circular(&self) -> bool {
        matches!(self, Target::Angle(_))
    }
}

/// Features and target from one simulated trajectory. The seed identifies
/// the trajectory so fits and evaluations can be kept apart.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Arc<FeatureMatrix>,
    pub target: Target,
    pub kind: FeatureKind,
    pub seed: u64,
}

impl Dataset {
    pub fn new(features: impl Into<Arc<FeatureMatrix>>, target: Target, kind: FeatureKind, seed: u64) -> Result<Self> {
        let features = features.into();
        if features.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in decoder features".into()));
        }
        Self { features, target: Target::Scalar(Vec::new()), kind, seed }.with_target(target)
    }

    /// Same features with another target; the feature matrix is shared.
    pub fn with_target(&self, target: Target) -> Result<Self> {
        if target.values().len() != self.features.cols {
            return Err(Error::Shape(format!("target of {} samples for {} feature columns", target.values().len(), self.features.cols)));
        }
        if target.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in decoder target".into()));
        }
        Ok(Self { features: self.features.clone(), target, kind: self.kind, seed: self.seed })
    }

    /// Rows of `self` followed by rows of `other`, which must come from the
    /// same trajectory.
    pub fn combine(&self, other: &Dataset) -> Result<Self> {
        if self.seed != other.seed || self.target != other.target {
            return Err(Error::Shape("combined channels must share trajectory and target".into()));
        }
        let features = FeatureMatrix::stack(&[&self.features, &other.features])?;
        Ok(Self { features: Arc::new(features), target: self.target.clone(), kind: FeatureKind::Combined, seed: self.seed })
    }
}

/// Fitted read-out. Output `o` at feature column `c` estimates the target
/// at column `c − lag/stride`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderWeights {
    pub feature_kind: FeatureKind,
    pub target_kind: TargetKind,
    /// Lag in samples.
    pub lag: usize,
    pub stride: usize,
    pub labels: Vec<String>,
    /// One vector per output: `[sin, cos]` for angles, `[value]` for scalars.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub ridge: f64,
    /// Ratio of extreme eigenvalues of the standardised Gram matrix; absent
    /// when it is singular.
    pub condition_number: Option<f64>,
}

impl DecoderWeights {
    pub fn lag_columns(&self) -> usize {
        self.lag / self.stride
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: DecoderWeights = serde_json::from_str(text)?;
        if w.weights.iter().flatten().chain(&w.bias).any(|v| !v.is_finite()) || w.stride == 0 {
            return Err(Error::Data("weights file holds non-finite values or zero stride".into()));
        }
        Ok(w)
    }
}

/// Analytic population-vector weights `sin(2πn/N)`, `cos(2πn/N)`, `n = 1..N`.
pub fn fixed_hd_weights(n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = |i: usize| TAU * (i + 1) as f64 / n as f64;
    ((0..n).map(|i| a(i).sin()).collect(), (0..n).map(|i| a(i).cos()).collect())
}

/// Wraps fixed sine/cosine weights as a zero-bias angle decoder.
pub fn fixed_hd_decoder(labels: Vec<String>, lag: usize, stride: usize) -> DecoderWeights {
    let (s, c) = fixed_hd_weights(labels.len());
    DecoderWeights {
        feature_kind: FeatureKind::Firing,
        target_kind: TargetKind::AngleSincos,
        lag,
        stride,
        labels,
        weights: vec![s, c],
        bias: vec![0.0, 0.0],
        ridge: 0.0,
        condition_number: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSeries {
    pub angles: Vec<f64>,
    pub low_confidence: Vec<bool>,
}

pub fn angle_from_components(y_sin: &[f64], y_cos: &[f64]) -> AngleSeries {
    let angles = y_sin.iter().zip(y_cos).map(|(s, c)| wrap_angle(s.atan2(*c))).collect();
    let low_confidence = y_sin.iter().zip(y_cos).map(|(s, c)| s.hypot(*c) < LOW_CONFIDENCE).collect();
    AngleSeries { angles, low_confidence }
}

/// `atan2` of the sine and cosine read-outs at every feature column.
pub fn decode_angle(features: &FeatureMatrix, weights: &DecoderWeights) -> Result<AngleSeries> {
    if weights.target_kind != TargetKind::AngleSincos {
        return Err(Error::Shape("angle decoding needs sine and cosine weights".into()));
    }
    let (angles, low_confidence) = predict(weights, features, &all_rows(features))?;
    Ok(AngleSeries { angles, low_confidence })
}

pub fn decode_scalar(features: &FeatureMatrix, weights: &DecoderWeights) -> Result<Vec<f64>> {
    if weights.target_kind != TargetKind::Scalar {
        return Err(Error::Shape("scalar decoding needs a single weight vector".into()));
    }
    Ok(predict(weights, features, &all_rows(features))?.0)
}

/// Standardised second moments of a training feature matrix over columns
/// `start..`, shared by every target, lag and row subset fitted on it.
pub struct Design {
    features: Arc<FeatureMatrix>,
    seed: u64,
    start: usize,
    mean: Vec<f64>,
    /// Standard deviation of each row; zero marks a constant row.
    sd: Vec<f64>,
    gram: DMatrix<f64>,
    ridge: f64,
}

impl Design {
    /// Prepares fits whose lags do not exceed `max_lag` samples.
    pub fn new(train: &Dataset, max_lag: usize, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::Parameter(format!("ridge {ridge} must be finite and >= 0")));
        }
        let features = train.features.clone();
        check_lag(max_lag, features.stride)?;
        let start = max_lag / features.stride;
        let n = features.cols.saturating_sub(start);
        if n <= features.rows + 1 {
            return Err(Error::Shape(format!("{n} usable samples for {} features", features.rows)));
        }
        let mut mean = vec![0.0; features.rows];
        let mut sd = vec![0.0; features.rows];
        for m in 0..features.rows {
            let row = &features.row(m)[start..];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            mean[m] = mu;
            if var > 0.0 && var.sqrt() > 1e-12 * mu.abs() {
                sd[m] = var.sqrt();
            }
        }
        let rows = features.rows;
        // standardised rows, row-major; constant rows stay zero
        let mut z = vec![0.0; rows * n];
        for (m, zm) in z.chunks_exact_mut(n).enumerate() {
            if sd[m] > 0.0 {
                for (v, &x) in zm.iter_mut().zip(&features.row(m)[start..]) {
                    *v = (x - mean[m]) / sd[m];
                }
            }
        }
        // column-major view of z as an n x rows matrix Zᵀ
        let zt = DMatrixView::from_slice(&z, n, rows);
        let mut gram = DMatrix::zeros(rows, rows);
        if rows > 5 {
            let zv = DMatrixView::from_slice_with_strides(&z, rows, n, n, 1);
            gram.gemm(1.0 / n as f64, &zv, &zt, 0.0);
        } else {
            // nalgebra's small-matrix gemm path mishandles strided views
            for i in 0..rows {
                for j in i..rows {
                    let g = dot(zt.column(i).as_slice(), zt.column(j).as_slice()) / n as f64;
                    gram[(i, j)] = g;
                    gram[(j, i)] = g;
                }
            }
        }
        let gram = (&gram + gram.transpose()) * 0.5;
        Ok(Self { features, seed: train.seed, start, mean, sd, gram, ridge })
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows
    }

    pub fn max_lag(&self) -> usize {
        self.start * self.features.stride
    }

    fn solver(&self, rows: &[usize]) -> Result<Solver> {
        if rows.iter().any(|&r| r >= self.features.rows) {
            return Err(Error::Shape("row subset outside the design".into()));
        }
        let active: Vec<usize> = (0..rows.len()).filter(|&i| self.sd[rows[i]] > 0.0).collect();
        let a = active.len();
        let gram = DMatrix::from_fn(a, a, |i, j| self.gram[(rows[active[i]], rows[active[j]])]);
        let ridge_abs = if a > 0 { self.ridge * gram.trace() / a as f64 } else { 0.0 };
        let eigen = (a > 0).then(|| SymmetricEigen::new(gram));
        Ok(Solver { rows: rows.to_vec(), active, eigen, ridge_abs })
    }

    /// `Σ (x − x̄)·(y − ȳ) / (n·sd)` for every active row and every lag, as
    /// `[lag][active row]`. Each row is read once for all lags.
    fn cross_moments(&self, solver: &Solver, y: &[f64], lag_cols: &[usize]) -> Vec<Vec<f64>> {
        let f = &self.features;
        let n = (f.cols - self.start) as f64;
        // centring y by a constant leaves the moments unchanged but keeps the sums small
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let per_row: Vec<Vec<f64>> = solver
            .active
            .par_iter()
            .map(|&i| {
                let m = solver.rows[i];
                let xc: Vec<f64> = f.row(m)[self.start..].iter().map(|v| v - self.mean[m]).collect();
                lag_cols.iter().map(|&l| dot(&xc, &yc[self.start - l..f.cols - l]) / (n * self.sd[m])).collect()
            })
            .collect();
        (0..lag_cols.len()).map(|li| per_row.iter().map(|r| r[li]).collect()).collect()
    }

    /// Weights for every lag, sharing one pass over the training features.
    fn weights_many(&self, solver: &Solver, target: &Target, lags: &[usize], kind: FeatureKind) -> Vec<DecoderWeights> {
        let f = &self.features;
        let stride = f.stride;
        let n = (f.cols - self.start) as f64;
        let lag_cols: Vec<usize> = lags.iter().map(|l| l / stride).collect();
        let fits: Vec<Vec<(Vec<f64>, f64)>> = target
            .components()
            .iter()
            .map(|y| {
                let moments = self.cross_moments(solver, y, &lag_cols);
                lag_cols
                    .iter()
                    .zip(&moments)
                    .map(|(&l, rhs)| {
                        let ybar = y[self.start - l..f.cols - l].iter().sum::<f64>() / n;
                        solver.solve(self, rhs, ybar)
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<String> = solver.rows.iter().map(|&r| f.labels[r].clone()).collect();
        lags.iter()
            .enumerate()
            .map(|(li, &lag)| {
                let (weights, bias) = fits.iter().map(|per_lag| per_lag[li].clone()).unzip();
                DecoderWeights {
                    feature_kind: kind,
                    target_kind: target.kind(),
                    lag,
                    stride,
                    labels: labels.clone(),
                    weights,
                    bias,
                    ridge: self.ridge,
                    condition_number: solver.condition_number(),
                }
            })
            .collect()
    }

    fn check_target(&self, target: &Target) -> Result<()> {
        if target.values().len() != self.features.cols {
            return Err(Error::Shape("training target does not match the design".into()));
        }
        Ok(())
    }

    fn check_lags(&self, lags: &[usize]) -> Result<()> {
        for &l in lags {
            check_lag(l, self.features.stride)?;
            if l > self.max_lag() {
                return Err(Error::Parameter(format!("lag {l} exceeds the design's maximum {}", self.max_lag())));
            }
        }
        Ok(())
    }

    fn check_test(&self, rows: &[usize], test: &Dataset) -> Result<()> {
        if test.seed == self.seed {
            return Err(Error::Config(format!("train and test data share seed {}", self.seed)));
        }
        if test.features.rows != self.features.rows || test.features.stride != self.features.stride {
            return Err(Error::Shape("train and test features differ in layout".into()));
        }
        if rows.is_empty() {
            return Err(Error::Shape("empty feature subset".into()));
        }
        Ok(())
    }

    /// Least-squares read-out of `target` (aligned with the training
    /// features) from the listed rows at one lag.
    pub fn fit(&self, rows: &[usize], target: &Target, lag: usize, kind: FeatureKind) -> Result<DecoderWeights> {
        self.check_target(target)?;
        self.check_lags(&[lag])?;
        Ok(self.weights_many(&self.solver(rows)?, target, &[lag], kind).remove(0))
    }

    /// Fits `rows` at every lag and scores each on `test`. All lags are
    /// trained and tested on the columns at or beyond the design's maximum
    /// lag, so their errors are directly comparable.
    pub fn sweep(&self, rows: &[usize], train_target: &Target, test: &Dataset, lags: &[usize], kind: FeatureKind) -> Result<LagSweep> {
        self.check_target(train_target)?;
        self.check_test(rows, test)?;
        if train_target.kind() != test.target.kind() {
            return Err(Error::Shape("train and test targets differ in kind".into()));
        }
        if lags.is_empty() {
            return Err(Error::Parameter("lag sweep needs at least one lag".into()));
        }
        self.check_lags(lags)?;
        let solver = self.solver(rows)?;
        let mut fitted = self.weights_many(&solver, train_target, lags, kind);
        let predictions = predict_many(&fitted, &test.features, rows)?;
        let mse = fitted
            .iter()
            .zip(&predictions)
            .map(|(w, (pred, _))| {
                let (p, t) = aligned(w, pred, test, self.start);
                if test.target.is_circular() {
                    circular_mse(p, t)
                } else {
                    mse(p, t)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let best_idx = (0..mse.len()).min_by(|&a, &b| mse[a].total_cmp(&mse[b])).unwrap_or(0);
        let best = fitted.swap_remove(best_idx);
        let result = score(&best, rows, test, self.start)?;
        Ok(LagSweep { lags: lags.to_vec(), mse, chance_mse: result.chance_mse, best_lag: best.lag, best, rows: rows.to_vec(), result })
    }

    /// Coarse grid of step `coarse` up to the design's maximum lag, then a
    /// grid of step `fine` within one coarse step of the coarse optimum. The
    /// returned curve holds both grids.
    pub fn sweep_refined(
        &self,
        rows: &[usize],
        train_target: &Target,
        test: &Dataset,
        coarse: usize,
        fine: usize,
        kind: FeatureKind,
    ) -> Result<LagSweep> {
        let coarse_lags = lag_grid(self.max_lag(), coarse);
        let first = self.sweep(rows, train_target, test, &coarse_lags, kind)?;
        let lo = first.best_lag.saturating_sub(coarse);
        let hi = (first.best_lag + coarse).min(self.max_lag());
        let fine_lags: Vec<usize> = (lo.div_ceil(fine)..=hi / fine).map(|i| i * fine).filter(|l| !coarse_lags.contains(l)).collect();
        if fine_lags.is_empty() {
            return Ok(first);
        }
        let second = self.sweep(rows, train_target, test, &fine_lags, kind)?;
        let mut curve: Vec<(usize, f64)> =
            first.lags.iter().copied().zip(first.mse.iter().copied()).chain(second.lags.iter().copied().zip(second.mse.iter().copied())).collect();
        curve.sort_by_key(|p| p.0);
        let winner = if second.best_mse() < first.best_mse() { second } else { first };
        Ok(LagSweep { lags: curve.iter().map(|p| p.0).collect(), mse: curve.iter().map(|p| p.1).collect(), ..winner })
    }
}

struct Solver {
    rows: Vec<usize>,
    /// Positions within `rows` of non-constant rows.
    active: Vec<usize>,
    eigen: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
    ridge_abs: f64,
}

impl Solver {
    fn condition_number(&self) -> Option<f64> {
        let e = &self.eigen.as_ref()?.eigenvalues;
        let (lo, hi) = (e.min() + self.ridge_abs, e.max() + self.ridge_abs);
        (lo > 0.0).then(|| hi / lo)
    }

    /// Weights in raw feature units, ordered as `rows`, plus bias, from the
    /// scaled cross-moments of the active rows and the target mean.
    fn solve(&self, d: &Design, moments: &[f64], ybar: f64) -> (Vec<f64>, f64) {
        let mut w = vec![0.0; self.rows.len()];
        let mut bias = ybar;
        if let Some(eig) = &self.eigen {
            let rhs = DVector::from_column_slice(moments);
            let emax = eig.eigenvalues.max().max(0.0);
            let proj = eig.eigenvectors.transpose() * rhs;
            let scaled = DVector::from_iterator(
                proj.len(),
                proj.iter().zip(eig.eigenvalues.iter()).map(|(p, &e)| {
                    let denom = e + self.ridge_abs;
                    // pseudo-inverse: directions with vanishing curvature get no weight
                    if denom > 1e-13 * emax && denom > 0.0 {
                        p / denom
                    } else {
                        0.0
                    }
                }),
            );
            let w_std = &eig.eigenvectors * scaled;
            for (k, &i) in self.active.iter().enumerate() {
                let m = self.rows[i];
                w[i] = w_std[k] / d.sd[m];
                bias -= w[i] * d.mean[m];
            }
        }
        (w, bias)
    }
}

/// Dot product with independent partial sums, which lets the compiler
/// vectorise the loop.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn check_lag(lag: usize, stride: usize) -> Result<()> {
    if lag % stride != 0 {
        return Err(Error::Parameter(format!("lag {lag} is not a multiple of the feature stride {stride}")));
    }
    Ok(())
}

fn all_rows(f: &FeatureMatrix) -> Vec<usize> {
    (0..f.rows).collect()
}

/// Least-squares read-out of `train.target` delayed by `lag` samples.
pub fn fit_weights(train: &Dataset, lag: usize, ridge: f64) -> Result<DecoderWeights> {
    let design = Design::new(train, lag, ridge)?;
    design.fit(&all_rows(&train.features), &train.target, lag, train.kind)
}

/// Test-set predictions aligned with their targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub predicted: Vec<f64>,
    pub target: Vec<f64>,
    pub mse: f64,
    pub chance_mse: f64,
    /// Lag in samples.
    pub lag: usize,
    pub circular: bool,
    /// Number of aligned samples whose angle estimate had low confidence.
    pub low_confidence: usize,
}

impl DecodeResult {
    pub fn relative(&self) -> f64 {
        self.mse / self.chance_mse
    }
}

/// Predictions from the listed rows of `features` at every column.
fn predict(weights: &DecoderWeights, features: &FeatureMatrix, rows: &[usize]) -> Result<(Vec<f64>, Vec<bool>)> {
    Ok(predict_many(std::slice::from_ref(weights), features, rows)?.remove(0))
}

/// Columns per block when predicting many read-outs at once.
const BLOCK_COLS: usize = 2048;

/// Predictions of several read-outs over the same rows. Columns are
/// processed in blocks so every feature row is read once for all read-outs.
fn predict_many(all: &[DecoderWeights], features: &FeatureMatrix, rows: &[usize]) -> Result<Vec<(Vec<f64>, Vec<bool>)>> {
    for w in all {
        if w.weights.iter().any(|o| o.len() != rows.len()) || rows.iter().any(|&r| r >= features.rows) {
            return Err(Error::Shape(format!("{} weights for {} selected of {} feature rows", w.weights[0].len(), rows.len(), features.rows)));
        }
    }
    let cols = features.cols;
    let coefs: Vec<(&[f64], f64)> = all.iter().flat_map(|w| w.weights.iter().map(|o| o.as_slice()).zip(w.bias.iter().copied())).collect();
    let blocks: Vec<Vec<Vec<f64>>> = (0..cols.div_ceil(BLOCK_COLS))
        .into_par_iter()
        .map(|b| {
            let (c0, c1) = (b * BLOCK_COLS, ((b + 1) * BLOCK_COLS).min(cols));
            let mut out: Vec<Vec<f64>> = coefs.iter().map(|&(_, bias)| vec![bias; c1 - c0]).collect();
            for (ri, &r) in rows.iter().enumerate() {
                let x = &features.row(r)[c0..c1];
                for (o, &(w, _)) in out.iter_mut().zip(&coefs) {
                    let wi = w[ri];
                    if wi != 0.0 {
                        for (y, &f) in o.iter_mut().zip(x) {
                            *y += wi * f;
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut outputs: Vec<Vec<f64>> = coefs.iter().map(|_| Vec::with_capacity(cols)).collect();
    for block in blocks {
        for (o, part) in outputs.iter_mut().zip(block) {
            o.extend(part);
        }
    }
    let mut outputs = outputs.into_iter();
    Ok(all
        .iter()
        .map(|w| match w.target_kind {
            TargetKind::AngleSincos => {
                let (s, c) = (outputs.next().unwrap_or_default(), outputs.next().unwrap_or_default());
                let a = angle_from_components(&s, &c);
                (a.angles, a.low_confidence)
            }
            TargetKind::Scalar => (outputs.next().unwrap_or_default(), vec![false; cols]),
        })
        .collect())
}

fn aligned<'a>(weights: &DecoderWeights, pred: &'a [f64], test: &'a Dataset, start: usize) -> (&'a [f64], &'a [f64]) {
    let l = weights.lag_columns();
    (&pred[start..], &test.target.values()[start - l..test.features.cols - l])
}

/// Scores `weights` on columns `start..` of `test`, where `start` is at
/// least the weights' lag in columns.
fn score(weights: &DecoderWeights, rows: &[usize], test: &Dataset, start: usize) -> Result<DecodeResult> {
    let (pred, low) = predict(weights, &test.features, rows)?;
    let (p, t) = aligned(weights, &pred, test, start);
    let circular = test.target.is_circular();
    let err = if circular { circular_mse(p, t)? } else { mse(p, t)? };
    let min_shift = (MIN_SHIFT_S / (test.features.dt * test.features.stride as f64)).round() as usize;
    let chance_mse = chance_baseline(t, circular, min_shift, CHANCE_SHUFFLES, test.seed)?;
    if !err.is_finite() || !chance_mse.is_finite() {
        return Err(Error::Data(format!("non-finite decoding error {err} (chance {chance_mse})")));
    }
    Ok(DecodeResult {
        predicted: p.to_vec(),
        target: t.to_vec(),
        mse: err,
        chance_mse,
        lag: weights.lag,
        circular,
        low_confidence: low[start..].iter().filter(|&&b| b).count(),
    })
}

/// Evaluates fitted weights, which must cover every feature row, on held-out data.
pub fn evaluate(weights: &DecoderWeights, test: &Dataset) -> Result<DecodeResult> {
    if weights.target_kind != test.target.kind() {
        return Err(Error::Shape("weights and test target differ in kind".into()));
    }
    score(weights, &all_rows(&test.features), test, weights.lag_columns())
}

/// Fits on `train` and scores on `test` at one lag.
pub fn fit_and_evaluate(train: &Dataset, test: &Dataset, lag: usize, ridge: f64) -> Result<(DecoderWeights, DecodeResult)> {
    let design = Design::new(train, lag, ridge)?;
    let rows = all_rows(&train.features);
    design.check_test(&rows, test)?;
    let w = design.fit(&rows, &train.target, lag, train.kind)?;
    let r = evaluate(&w, test)?;
    Ok((w, r))
}

/// One least-squares fit over stacked firing and co-firing features.
pub fn combined_decode(
    train_firing: &Dataset,
    train_cofiring: &Dataset,
    test_firing: &Dataset,
    test_cofiring: &Dataset,
    lag: usize,
    ridge: f64,
) -> Result<DecodeResult> {
    let train = train_firing.combine(train_cofiring)?;
    let test = test_firing.combine(test_cofiring)?;
    Ok(fit_and_evaluate(&train, &test, lag, ridge)?.1)
}

#[derive(Debug, Clone)]
pub struct LagSweep {
    /// Lags in samples.
    pub lags: Vec<usize>,
    pub mse: Vec<f64>,
    pub chance_mse: f64,
    pub best_lag: usize,
    pub best: DecoderWeights,
    /// Feature rows used.
    pub rows: Vec<usize>,
    /// Test-set result at the best lag.
    pub result: DecodeResult,
}

impl LagSweep {
    pub fn best_mse(&self) -> f64 {
        self.result.mse
    }

    pub fn best_relative(&self) -> f64 {
        self.result.relative()
    }
}

/// Sweeps every lag over all feature rows.
pub fn lag_sweep(train: &Dataset, test: &Dataset, lags: &[usize], ridge: f64) -> Result<LagSweep> {
    let &max_lag = lags.iter().max().ok_or_else(|| Error::Parameter("lag sweep needs at least one lag".into()))?;
    let design = Design::new(train, max_lag, ridge)?;
    design.sweep(&all_rows(&train.features), &train.target, test, lags, train.kind)
}

/// Lags `0, step, …` up to `max` samples inclusive.
pub fn lag_grid(max: usize, step: usize) -> Vec<usize> {
    (0..=max / step.max(1)).map(|i| i * step.max(1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{bessel_i0, HdPopulationSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: Vec<Vec<f64>>, stride: usize) -> FeatureMatrix {
        let labels = (0..rows.len()).map(|i| format!("f{i}")).collect();
        FeatureMatrix::from_rows(labels, rows, stride, 0.05).unwrap()
    }

    fn random_features(m: usize, k: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        matrix((0..m).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect(), 1)
    }

    fn scalar(features: FeatureMatrix, y: Vec<f64>, seed: u64) -> Dataset {
        Dataset::new(features, Target::Scalar(y), FeatureKind::Firing, seed).unwrap()
    }

    #[test]
    fn exact_linear_target_fits_exactly() {
        let f = random_features(5, 2000, 1);
        let y: Vec<f64> = (0..2000).map(|c| 0.3 + 2.0 * f.get(0, c) - f.get(3, c) + 0.5 * f.get(4, c)).collect();
        let d = scalar(f.clone(), y.clone(), 1);
        let w = fit_weights(&d, 0, 0.0).unwrap();
        let pred = decode_scalar(&f, &w).unwrap();
        assert!(mse(&pred, &y).unwrap() < 1e-16);
        assert!((w.weights[0][0] - 2.0).abs() < 1e-8 && (w.bias[0] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn ridge_barely_moves_well_conditioned_solution() {
        let f = random_features(6, 3000, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..3000).map(|c| f.get(1, c) - f.get(2, c) + 0.1 * rng.random::<f64>()).collect();
        let d = scalar(f, y, 2);
        let a = fit_weights(&d, 0, 0.0).unwrap();
        let b = fit_weights(&d, 0, 1e-6).unwrap();
        let diff: f64 = a.weights[0].iter().zip(&b.weights[0]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(diff < 1e-4, "{diff}");
    }

    #[test]
    fn zero_block_is_inert_in_combined_fit() {
        let f = random_features(4, 1500, 4);
        let y: Vec<f64> = (0..1500).map(|c| f.get(0, c) * 3.0 + (c as f64 * 0.01).sin()).collect();
        let zeros = matrix(vec![vec![0.0; 1500]; 3], 1);
        let (tf, ty) = (random_features(4, 1500, 5), (0..1500).map(|c| (c as f64 * 0.013).cos()).collect::<Vec<_>>());
        let train = scalar(f, y, 1);
        let test = scalar(tf, ty, 2);
        let train_z = Dataset { kind: FeatureKind::Cofiring, ..scalar(zeros.clone(), train.target.values().to_vec(), 1) };
        let test_z = Dataset { kind: FeatureKind::Cofiring, ..scalar(zeros, test.target.values().to_vec(), 2) };
        let alone = fit_and_evaluate(&train, &test, 0, DEFAULT_RIDGE).unwrap().1;
        let both = combined_decode(&train, &train_z, &test, &test_z, 0, DEFAULT_RIDGE).unwrap();
        assert!((alone.mse - both.mse).abs() < 1e-6);
    }

    #[test]
    fn fixed_weight_values() {
        let (s, c) = fixed_hd_weights(4);
        for (got, want) in s.iter().zip([1.0, 0.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((fixed_hd_weights(12).0[2] - 1.0).abs() < 1e-15);
        for n in 2..20 {
            let (s, c) = fixed_hd_weights(n);
            assert!(s.iter().sum::<f64>().abs() < 1e-12 && c.iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(c[3].abs() < 1e-12 || c[3] == 1.0);
    }

    #[test]
    fn atan2_convention() {
        let a = angle_from_components(&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.001]);
        assert_eq!(a.angles[0], 0.0);
        assert!((a.angles[1] - TAU / 4.0).abs() < 1e-15);
        assert_eq!(a.low_confidence, vec![false, false, true]);
    }

    #[test]
    fn noiseless_tuning_decodes_exactly() {
        let spec = HdPopulationSpec::default();
        let grid: Vec<f64> = (0..720).map(|i| i as f64 * TAU / 720.0).collect();
        let rows = (0..12).map(|n| grid.iter().map(|&a| spec.rate(n, a)).collect()).collect();
        let f = matrix(rows, 1);
        let w = fixed_hd_decoder(f.labels.clone(), 0, 1);
        let dec = decode_angle(&f, &w).unwrap();
        for (got, want) in dec.angles.iter().zip(&grid) {
            assert!(crate::trajectory::wrap_diff(got - want).abs() < 1e-6);
        }
        assert!(bessel_i0(0.5) > 1.0);
    }

    #[test]
    fn sweep_recovers_constructed_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k: usize = 120_000;
        let make = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut x = 0.0;
            (0..k).map(|_| {
                x = 0.99 * x + rng.random::<f64>() - 0.5;
                x
            }).collect()
        };
        let shift: usize = 37;
        // features lagging the target by `shift` columns
        let (a, b) = (make(&mut rng), make(&mut rng));
        let ya = a.clone();
        let fa: Vec<f64> = (0..k).map(|c| a[c.saturating_sub(shift)]).collect();
        let fb: Vec<f64> = (0..k).map(|c| b[c.saturating_sub(shift)]).collect();
        let train = scalar(matrix(vec![fa], 1), ya, 1);
        let test = scalar(matrix(vec![fb], 1), b.clone(), 2);
        let sweep = lag_sweep(&train, &test, &lag_grid(60, 1), 0.0).unwrap();
        assert_eq!(sweep.best_lag, shift);
        assert!(sweep.best_mse() < 1e-12);

        let refined = Design::new(&train, 60, 0.0).unwrap().sweep_refined(&[0], &train.target, &test, 10, 1, FeatureKind::Firing).unwrap();
        assert_eq!(refined.best_lag, shift);
        assert!(refined.lags.windows(2).all(|w| w[0] < w[1]));
        assert!(refined.lags.len() < 61);
    }

    #[test]
    fn subset_fit_matches_dedicated_design() {
        let f = random_features(6, 3000, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..3000).map(|c| f.get(1, c) - 2.0 * f.get(3, c) + 0.2 * rng.random::<f64>()).collect();
        let rows = [1, 3, 4];
        let shared = Design::new(&scalar(f.clone(), y.clone(), 1), 5, 0.0).unwrap();
        let target = Target::Scalar(y.clone());
        let a = shared.fit(&rows, &target, 5, FeatureKind::Firing).unwrap();
        let own = Design::new(&scalar(f.select(&rows), y, 1), 5, 0.0).unwrap();
        let b = own.fit(&[0, 1, 2], &target, 5, FeatureKind::Firing).unwrap();
        for (x, y) in a.weights[0].iter().zip(&b.weights[0]).chain(a.bias.iter().zip(&b.bias)) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn shared_seed_is_rejected() {
        let d = scalar(random_features(2, 100_000, 1), vec![0.0; 100_000], 7);
        assert!(matches!(lag_sweep(&d, &d, &[0], 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn nan_input_is_data_error() {
        let f = random_features(2, 10, 1);
        let mut y = vec![0.0; 10];
        y[3] = f64::NAN;
        assert!(matches!(Dataset::new(f, Target::Scalar(y), FeatureKind::Firing, 0), Err(Error::Data(_))));
    }

    #[test]
    fn weights_json_round_trip() {
        let f = random_features(3, 500, 9);
        let y: Vec<f64> = (0..500).map(|c| f.get(2, c) / 3.0 + 1e-17 * c as f64).collect();
        let w = fit_weights(&scalar(f, y, 1), 0, DEFAULT_RIDGE).unwrap();
        assert_eq!(DecoderWeights::from_json(&w.to_json().unwrap()).unwrap(), w);
    }
}
