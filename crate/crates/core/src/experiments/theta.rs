//! Theta-ring scenarios: complementary and non-complementary ring pairs, and
//! the conversion of speed cells into grid cells.

use super::common::{decoding_row, decoding_table, fmt_list, mean, rep_seeds, Channels, LagSearch};
use super::config::ScenarioConfig;
use super::grid::{position, speed, track};
use super::hd::{ACCURATE, AT_CHANCE};
use super::metrics::{autocorrelogram, regression_slope, tuning_curve};
use super::report::{Plot, ScenarioReport, Table};
use crate::decoder::{FeatureKind, LagSweep, Target};
use crate::encoders::{calibrate_conversion_coef, convert_speed_to_grid, simulate_theta_population, GridConversion, SpikeRaster, ThetaRingSpec};
use crate::error::{Error, Result};
use crate::rates::{firing_rates_strided, multi_ring_cofiring, FeatureMatrix, IntegratorConfig};
use crate::rng::derive_seed;
use crate::trajectory::Trajectory;

/// Seed salts for runs that are neither fitting nor test runs.
const TUNING_SALT: u64 = 0x7475_6e65;
const CALIBRATION_SALT: u64 = 0x6361_6c69;

/// Spatial period of the phase difference between two rings, cm.
pub fn pair_scale(lambda_a: f64, lambda_b: f64) -> f64 {
    1.0 / (1.0 / lambda_a - 1.0 / lambda_b).abs()
}

struct ThetaRun {
    traj: Trajectory,
    raster: SpikeRaster,
}

fn specs(cfg: &ScenarioConfig) -> Vec<ThetaRingSpec> {
    cfg.lambdas_cm.iter().map(|&l| cfg.theta.ring(l)).collect()
}

fn theta_run(cfg: &ScenarioConfig, seed: u64, duration_s: f64) -> Result<ThetaRun> {
    let traj = track(cfg, seed, duration_s)?;
    let rings = simulate_theta_population(&traj, &specs(cfg), seed)?;
    let raster = SpikeRaster::stack(&rings.iter().collect::<Vec<_>>())?;
    Ok(ThetaRun { traj, raster })
}

/// Firing rates of every cell followed by one co-firing block of `p` bands
/// per ring pair.
fn features(cfg: &ScenarioConfig, raster: &SpikeRaster, pairs: &[(usize, usize)], tau: f64) -> Result<FeatureMatrix> {
    let p = cfg.theta.p;
    let icfg = IntegratorConfig::new(tau)?;
    let rings = (0..raster.n_cells() / p).map(|r| raster.select_cells(r * p..(r + 1) * p)).collect::<Result<Vec<_>>>()?;
    let firing = firing_rates_strided(raster, &icfg, cfg.stride)?;
    let co = multi_ring_cofiring(&rings.iter().collect::<Vec<_>>(), pairs, &icfg, cfg.stride)?;
    FeatureMatrix::stack(&[&firing, &co])
}

/// Row layout of [`features`].
struct Layout {
    cells: usize,
    p: usize,
}

impl Layout {
    fn firing(&self) -> Vec<usize> {
        (0..self.cells).collect()
    }

    fn ring_pair_firing(&self, a: usize, b: usize) -> Vec<usize> {
        (a * self.p..(a + 1) * self.p).chain(b * self.p..(b + 1) * self.p).collect()
    }

    fn block(&self, j: usize) -> Vec<usize> {
        (self.cells + j * self.p..self.cells + (j + 1) * self.p).collect()
    }

    fn all_cofiring(&self, pairs: usize) -> Vec<usize> {
        (self.cells..self.cells + pairs * self.p).collect()
    }

    fn everything(&self, pairs: usize) -> Vec<usize> {
        (0..self.cells + pairs * self.p).collect()
    }
}

/// Decodes one target from one row subset and logs the result.
struct Decoding<'a> {
    cfg: &'a ScenarioConfig,
    ch: &'a Channels,
    table: &'a mut Table,
    rep: usize,
}

impl Decoding<'_> {
    fn run(&mut self, target: &str, channel: &str, rows: &[usize], kind: FeatureKind, tr: &Target, te: &Target) -> Result<LagSweep> {
        let s = self.ch.sweep(self.cfg, rows, kind, tr.clone(), te.clone(), LagSearch::Refined)?;
        self.table.push(decoding_row(self.rep, self.ch.tau, target, channel, &s))?;
        Ok(s)
    }
}

fn min(x: &[f64]) -> f64 {
    x.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn max(x: &[f64]) -> f64 {
    x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Relative MSE improvement of the combined read-out over the better channel.
fn gain(a: &LagSweep, b: &LagSweep, combined: &LagSweep) -> f64 {
    let best = a.result.mse.min(b.result.mse);
    (best - combined.result.mse) / best
}

/// Counts rises along `mse`; passes with at most one rise of at most `tol`.
fn nearly_non_increasing(mse: &[f64], tol: f64) -> bool {
    let rises: Vec<f64> = mse.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= tol)
}

fn scale_label(scale: f64) -> String {
    format!("position {scale:.1} cm")
}

fn pair_label(a: usize, b: usize) -> String {
    format!("cofiring r{a}r{b}")
}

fn index_axis(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

/// Per-cell regression of 1 s spike counts on mean speed, pooled over
/// dedicated runs.
fn speed_tuning(cfg: &ScenarioConfig, report: &mut ScenarioReport) -> Result<(Vec<f64>, Table, Plot)> {
    let base = derive_seed(cfg.train_seed, TUNING_SALT);
    let cells = cfg.lambdas_cm.len() * cfg.theta.p;
    let mut speeds = Vec::new();
    let mut counts = vec![Vec::new(); cells];
    for j in 0..cfg.tuning_runs {
        let seed = derive_seed(base, j as u64);
        report.seed("tuning", j, seed);
        let run = theta_run(cfg, seed, cfg.tuning_run_s)?;
        let bin = run.raster.clock().samples(1.0);
        let bins = run.traj.len() / bin;
        speeds.extend((0..bins).map(|b| mean(&run.traj.v[b * bin..(b + 1) * bin])));
        for (n, row) in counts.iter_mut().enumerate() {
            let mut c = vec![0.0; bins];
            for k in run.raster.spike_indices(n) {
                if k / bin < bins {
                    c[k / bin] += 1.0;
                }
            }
            row.extend(c);
        }
    }
    if speeds.len() < 2 {
        return Err(Error::Config("speed tuning needs at least two one-second bins".into()));
    }
    let mut table = Table::new("e5_speed_tuning", &["cell", "ring", "lambda_cm", "mean_rate_hz", "slope_hz_per_cm_s"]);
    let mut fig = Plot::line("fig9a", "Theta-cell firing rate against running speed", "speed (cm/s)", "mean rate (Hz)");
    let mut slopes = Vec::with_capacity(cells);
    let p = cfg.theta.p;
    for (n, row) in counts.iter().enumerate() {
        let slope = regression_slope(&speeds, row)?;
        slopes.push(slope);
        table.push(vec![n.into(), (n / p).into(), cfg.lambdas_cm[n / p].into(), mean(row).into(), slope.into()])?;
    }
    for (r, &lambda) in cfg.lambdas_cm.iter().enumerate() {
        let ring_mean: Vec<f64> = (0..speeds.len()).map(|b| mean(&(r * p..(r + 1) * p).map(|n| counts[n][b]).collect::<Vec<_>>())).collect();
        let curve = tuning_curve(&ring_mean, &speeds, 0.0, 60.0, 12)?;
        let keep: Vec<usize> = (0..12).filter(|&b| curve.occupancy[b] >= 10).collect();
        fig = fig.with(
            &format!("lambda {lambda} cm"),
            keep.iter().map(|&b| curve.centers[b]).collect(),
            keep.iter().map(|&b| curve.mean[b]).collect(),
        );
    }
    Ok((slopes, table, fig))
}

pub(crate) fn run_e5(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let rings = cfg.lambdas_cm.len();
    let pairs: Vec<(usize, usize)> = (0..rings / 2).map(|j| (2 * j, 2 * j + 1)).collect();
    let scales: Vec<f64> = pairs.iter().map(|&(a, b)| pair_scale(cfg.lambdas_cm[a], cfg.lambdas_cm[b])).collect();
    let slope_mag: Vec<f64> = pairs.iter().map(|&(a, _)| cfg.lambdas_cm[a].abs()).collect();
    let layout = Layout { cells: rings * cfg.theta.p, p: cfg.theta.p };
    let fine = scales.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).expect("at least one pair");
    // pairs from the flattest to the steepest phase slope
    let mut by_slope: Vec<usize> = (0..pairs.len()).collect();
    by_slope.sort_by(|&a, &b| slope_mag[b].total_cmp(&slope_mag[a]));
    let mut table = decoding_table("e5_decoding");
    // [rep][pair] at the reference tau
    let mut pos_co = Vec::new();
    let mut speed_subset = Vec::new();
    let (mut pos_firing, mut speed_co, mut pos_gain, mut speed_gain) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut autocorr = Table::new("e5_autocorrelograms", &["ring", "lambda_cm", "lag_s", "count"]);
    let mut fig9b = Plot::line("fig9b", "Theta-cell autocorrelograms", "lag (s)", "spike pairs");
    for r in 0..cfg.repetitions {
        let seeds = rep_seeds(cfg, r);
        report.seed("train", r, seeds.0);
        report.seed("test", r, seeds.1);
        let (train, test) = (theta_run(cfg, seeds.0, cfg.train_s)?, theta_run(cfg, seeds.1, cfg.test_s)?);
        if r == 0 {
            for (ring, &lambda) in cfg.lambdas_cm.iter().enumerate() {
                let hist = autocorrelogram(&test.raster.spike_times(ring * cfg.theta.p), 0.5, 0.005)?;
                let lags: Vec<f64> = (0..hist.len()).map(|i| (i as f64 + 0.5) * 0.005).collect();
                for (l, &h) in lags.iter().zip(&hist) {
                    autocorr.push(vec![ring.into(), lambda.into(), (*l).into(), (h as f64).into()])?;
                }
                fig9b = fig9b.with(&format!("lambda {lambda} cm"), lags, hist.iter().map(|&h| h as f64).collect());
            }
        }
        let pos_targets: Vec<(Target, Target)> =
            scales.iter().map(|&s| Ok((position(&train.traj, s, cfg.stride)?, position(&test.traj, s, cfg.stride)?))).collect::<Result<_>>()?;
        let (sp_tr, sp_te) = (speed(&train.traj, cfg.stride), speed(&test.traj, cfg.stride));
        for &tau in &cfg.taus {
            let reference = (tau - cfg.reference_tau).abs() < 1e-12;
            let ch = Channels::new(cfg, tau, features(cfg, &train.raster, &pairs, tau)?, features(cfg, &test.raster, &pairs, tau)?, seeds)?;
            let mut d = Decoding { cfg, ch: &ch, table: &mut table, rep: r };
            let mut co_rel = Vec::new();
            for (j, &(a, b)) in pairs.iter().enumerate() {
                let (tr, te) = &pos_targets[j];
                let label = scale_label(scales[j]);
                let co = d.run(&label, &pair_label(a, b), &layout.block(j), FeatureKind::Cofiring, tr, te)?;
                let fi = d.run(&label, "firing", &layout.firing(), FeatureKind::Firing, tr, te)?;
                let rows: Vec<usize> = layout.firing().into_iter().chain(layout.block(j)).collect();
                let both = d.run(&label, "combined", &rows, FeatureKind::Combined, tr, te)?;
                co_rel.push(co.best_relative());
                pos_firing.push(fi.best_relative());
                pos_gain.push(gain(&co, &fi, &both));
            }
            let fi = d.run("speed", "firing", &layout.firing(), FeatureKind::Firing, &sp_tr, &sp_te)?;
            let co = d.run("speed", "cofiring", &layout.all_cofiring(pairs.len()), FeatureKind::Cofiring, &sp_tr, &sp_te)?;
            let both = d.run("speed", "combined", &layout.everything(pairs.len()), FeatureKind::Combined, &sp_tr, &sp_te)?;
            speed_co.push(co.best_relative());
            speed_gain.push(gain(&fi, &co, &both));
            if reference {
                let mut subset = Vec::new();
                for &(a, b) in &pairs {
                    let label = format!("firing |lambda| {} cm", cfg.lambdas_cm[a].abs());
                    subset.push(d.run("speed", &label, &layout.ring_pair_firing(a, b), FeatureKind::Firing, &sp_tr, &sp_te)?);
                }
                speed_subset.push(subset);
                pos_co.push(co_rel);
            }
        }
    }
    let (slopes, tuning, fig9a) = speed_tuning(cfg, &mut report)?;
    let p = cfg.theta.p;
    let wrong: Vec<usize> = (0..slopes.len()).filter(|&n| slopes[n].signum() != cfg.lambdas_cm[n / p].signum()).collect();
    report.check(
        "firing-rate slope against speed has the sign of the phase slope for every cell",
        true,
        wrong.is_empty(),
        format!("{} of {} cells disagree {:?}", wrong.len(), slopes.len(), wrong),
    );
    let fine_rel: Vec<f64> = pos_co.iter().map(|v: &Vec<f64>| v[fine]).collect();
    report.check(
        &format!("position at {:.1} cm from co-firing rates below 0.15 of chance in every repetition", scales[fine]),
        true,
        fine_rel.iter().all(|&x| x < ACCURATE),
        format!("relative MSE per repetition {}", fmt_list(&fine_rel)),
    );
    let all_scales: Vec<f64> = pos_co.iter().flatten().copied().collect();
    report.check(
        "position at every pair scale from that pair's co-firing rates below 0.15 of chance",
        false,
        all_scales.iter().all(|&x| x < ACCURATE),
        format!("largest relative MSE {:.3}", max(&all_scales)),
    );
    let mse_by_slope = |s: &[LagSweep], order: &[usize]| order.iter().map(|&j| s[j].result.mse).collect::<Vec<f64>>();
    let (flattest, steepest) = (by_slope[0], by_slope[by_slope.len() - 1]);
    let better: Vec<bool> = speed_subset.iter().map(|s| s[steepest].result.mse < s[flattest].result.mse).collect();
    report.check(
        &format!("speed from firing rates better at |lambda| {} cm than at {} cm in every repetition", slope_mag[steepest], slope_mag[flattest]),
        true,
        better.iter().all(|&b| b),
        format!(
            "relative MSE per repetition at {} cm {} and at {} cm {}",
            slope_mag[steepest],
            fmt_list(&speed_subset.iter().map(|s| s[steepest].best_relative()).collect::<Vec<_>>()),
            slope_mag[flattest],
            fmt_list(&speed_subset.iter().map(|s| s[flattest].best_relative()).collect::<Vec<_>>()),
        ),
    );
    let monotone: Vec<bool> = speed_subset.iter().map(|s| nearly_non_increasing(&mse_by_slope(s, &by_slope), 0.05)).collect();
    report.check(
        "speed error from firing rates falls as |lambda| shrinks, allowing one rise of at most 5%, in every repetition",
        true,
        monotone.iter().all(|&b| b),
        format!("{} of {} repetitions monotone", monotone.iter().filter(|&&b| b).count(), monotone.len()),
    );
    report.check(
        "position from firing rates at or above 0.8 of chance at every scale, tau and repetition",
        true,
        pos_firing.iter().all(|&x| x >= AT_CHANCE),
        format!("minimum relative MSE {:.3}", min(&pos_firing)),
    );
    report.check(
        "speed from co-firing rates at or above 0.8 of chance at every tau and repetition",
        true,
        speed_co.iter().all(|&x| x >= AT_CHANCE),
        format!("minimum relative MSE {:.3}", min(&speed_co)),
    );
    report.check(
        "combined position read-out improves on the better channel by less than 5%",
        true,
        pos_gain.iter().all(|&g| g < 0.05),
        format!("largest gain {:.4}", max(&pos_gain)),
    );
    report.check(
        "combined speed read-out improves on the better channel by less than 5%",
        true,
        speed_gain.iter().all(|&g| g < 0.05),
        format!("largest gain {:.4}", max(&speed_gain)),
    );
    let reps = speed_subset.len() as f64;
    let fig9c = Plot::line("fig9c", "Speed from firing rates against phase slope", "|lambda| (cm)", "mean MSE / chance").with(
        "firing",
        by_slope.iter().map(|&j| slope_mag[j]).collect(),
        by_slope.iter().map(|&j| speed_subset.iter().map(|s| s[j].best_relative()).sum::<f64>() / reps).collect(),
    );
    let cats: Vec<String> = scales.iter().map(|s| format!("{s:.1} cm")).collect();
    let mut fig10 = Plot::bar("fig10", "Position at each pair scale (reference tau)", "mean MSE / chance", cats);
    let per_scale = |channel: &str| -> Vec<f64> {
        scales
            .iter()
            .map(|&s| {
                let rows: Vec<f64> = table_rel(&table, cfg.reference_tau, &scale_label(s), channel);
                mean(&rows)
            })
            .collect()
    };
    let co_channel: Vec<f64> = (0..pairs.len()).map(|j| mean(&pos_co.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
    fig10 = fig10.with("cofiring", index_axis(scales.len()), co_channel).with("firing", index_axis(scales.len()), per_scale("firing")).with(
        "combined",
        index_axis(scales.len()),
        per_scale("combined"),
    );
    report.tables.extend([table, tuning, autocorr]);
    report.plots.extend([fig9a, fig9b, fig9c, fig10]);
    Ok(report)
}

/// Relative errors of the rows of a decoding table matching `tau`, target
/// and channel.
fn table_rel(table: &Table, tau: f64, target: &str, channel: &str) -> Vec<f64> {
    use super::report::Cell;
    let col = |name: &str| table.columns.iter().position(|c| c == name).expect("decoding table column");
    let (t, g, c, rel) = (col("tau_s"), col("target"), col("channel"), col("relative"));
    table
        .rows
        .iter()
        .filter(|row| {
            matches!(row[t], Cell::Num(v) if (v - tau).abs() < 1e-12)
                && matches!(&row[g], Cell::Text(s) if s == target)
                && matches!(&row[c], Cell::Text(s) if s == channel)
        })
        .filter_map(|row| if let Cell::Num(v) = row[rel] { Some(v) } else { None })
        .collect()
}

fn all_pairs(rings: usize) -> Vec<(usize, usize)> {
    (0..rings).flat_map(|a| (a + 1..rings).map(move |b| (a, b))).collect()
}

/// Scales quoted for the non-complementary rings in the original figure;
/// they are half of the phase-difference periods of the same ring pairs.
pub const QUOTED_SCALES_CM: [f64; 6] = [22.5, 25.0, 34.0, 39.0, 67.0, 235.5];

pub(crate) fn run_e6(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let rings = cfg.lambdas_cm.len();
    let pairs = all_pairs(rings);
    let scales: Vec<f64> = pairs.iter().map(|&(a, b)| pair_scale(cfg.lambdas_cm[a], cfg.lambdas_cm[b])).collect();
    if scales.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("rings with equal phase slopes encode no position in their co-firing".into()));
    }
    let layout = Layout { cells: rings * cfg.theta.p, p: cfg.theta.p };
    let mut table = decoding_table("e6_decoding");
    let tau = cfg.reference_tau;
    let (mut speed_rel, mut combined_wins) = (Vec::new(), Vec::new());
    let (mut pos_co, mut pos_fi) = (vec![Vec::new(); pairs.len()], vec![Vec::new(); pairs.len()]);
    let mut quoted = vec![Vec::new(); QUOTED_SCALES_CM.len()];
    for r in 0..cfg.repetitions {
        let seeds = rep_seeds(cfg, r);
        report.seed("train", r, seeds.0);
        report.seed("test", r, seeds.1);
        let (train, test) = (theta_run(cfg, seeds.0, cfg.train_s)?, theta_run(cfg, seeds.1, cfg.test_s)?);
        let ch = Channels::new(cfg, tau, features(cfg, &train.raster, &pairs, tau)?, features(cfg, &test.raster, &pairs, tau)?, seeds)?;
        let mut d = Decoding { cfg, ch: &ch, table: &mut table, rep: r };
        let (sp_tr, sp_te) = (speed(&train.traj, cfg.stride), speed(&test.traj, cfg.stride));
        let fi = d.run("speed", "firing", &layout.firing(), FeatureKind::Firing, &sp_tr, &sp_te)?;
        let co = d.run("speed", "cofiring", &layout.all_cofiring(pairs.len()), FeatureKind::Cofiring, &sp_tr, &sp_te)?;
        let both = d.run("speed", "combined", &layout.everything(pairs.len()), FeatureKind::Combined, &sp_tr, &sp_te)?;
        speed_rel.push([fi.best_relative(), co.best_relative(), both.best_relative()]);
        combined_wins.push(both.result.mse < fi.result.mse.min(co.result.mse));
        for (j, &(a, b)) in pairs.iter().enumerate() {
            let (tr, te) = (position(&train.traj, scales[j], cfg.stride)?, position(&test.traj, scales[j], cfg.stride)?);
            let label = scale_label(scales[j]);
            pos_co[j].push(d.run(&label, &pair_label(a, b), &layout.block(j), FeatureKind::Cofiring, &tr, &te)?.best_relative());
            pos_fi[j].push(d.run(&label, "firing", &layout.firing(), FeatureKind::Firing, &tr, &te)?.best_relative());
        }
        for (i, &s) in QUOTED_SCALES_CM.iter().enumerate() {
            let (tr, te) = (position(&train.traj, s, cfg.stride)?, position(&test.traj, s, cfg.stride)?);
            quoted[i].push(d.run(&scale_label(s), "cofiring", &layout.all_cofiring(pairs.len()), FeatureKind::Cofiring, &tr, &te)?.best_relative());
        }
    }
    let channel = |c: usize| speed_rel.iter().map(|v| v[c]).collect::<Vec<f64>>();
    for (c, name) in ["firing", "co-firing"].into_iter().enumerate() {
        let x = channel(c);
        report.check(
            &format!("speed from {name} rates below 0.8 of chance in every repetition"),
            true,
            x.iter().all(|&v| v < AT_CHANCE),
            format!("relative MSE per repetition {}", fmt_list(&x)),
        );
    }
    report.check(
        "combined speed read-out strictly better than either channel in every repetition",
        true,
        combined_wins.iter().all(|&w| w),
        format!("{} of {} repetitions; combined relative MSE {}", combined_wins.iter().filter(|&&w| w).count(), combined_wins.len(), fmt_list(&channel(2))),
    );
    let co_all: Vec<f64> = pos_co.iter().flatten().copied().collect();
    let fi_all: Vec<f64> = pos_fi.iter().flatten().copied().collect();
    report.check(
        "position at every pair scale from that pair's co-firing rates below 0.8 of chance in every repetition",
        true,
        co_all.iter().all(|&v| v < AT_CHANCE),
        format!("scales {} cm; largest relative MSE {:.3}", fmt_list(&scales), max(&co_all)),
    );
    report.check(
        "position at every pair scale from co-firing rates below 0.15 of chance",
        false,
        co_all.iter().all(|&v| v < ACCURATE),
        format!("largest relative MSE {:.3}", max(&co_all)),
    );
    report.check(
        "position at every pair scale from firing rates at or above 0.8 of chance in every repetition",
        true,
        fi_all.iter().all(|&v| v >= AT_CHANCE),
        format!("smallest relative MSE {:.3}", min(&fi_all)),
    );
    let quoted_mean: Vec<f64> = quoted.iter().map(|v| mean(v)).collect();
    report.check(
        "position at the quoted scales from all co-firing rates",
        false,
        quoted_mean.iter().all(|&v| v < AT_CHANCE),
        format!("scales {} cm; mean relative MSE {}", fmt_list(&QUOTED_SCALES_CM), fmt_list(&quoted_mean)),
    );
    let mut scale_table = Table::new("e6_pair_scales", &["ring_a", "ring_b", "lambda_a_cm", "lambda_b_cm", "scale_cm", "quoted_scale_cm"]);
    let mut quoted_sorted = QUOTED_SCALES_CM.to_vec();
    quoted_sorted.sort_by(f64::total_cmp);
    for (j, &(a, b)) in pairs.iter().enumerate() {
        // the quoted value closest to half the period
        let q = quoted_sorted.iter().copied().min_by(|x, y| (x - scales[j] / 2.0).abs().total_cmp(&(y - scales[j] / 2.0).abs())).unwrap_or(f64::NAN);
        scale_table.push(vec![a.into(), b.into(), cfg.lambdas_cm[a].into(), cfg.lambdas_cm[b].into(), scales[j].into(), q.into()])?;
    }
    let speed_means: Vec<f64> = (0..3).map(|c| mean(&channel(c))).collect();
    let fig11b = Plot::bar("fig11b", "Speed: MSE / chance by channel", "mean MSE / chance", vec!["speed".into()])
        .with("firing", vec![0.0], vec![speed_means[0]])
        .with("cofiring", vec![0.0], vec![speed_means[1]])
        .with("combined", vec![0.0], vec![speed_means[2]]);
    let cats: Vec<String> = scales.iter().map(|s| format!("{s:.1} cm")).collect();
    let fig11c = Plot::bar("fig11c", "Position at each pair scale", "mean MSE / chance", cats)
        .with("cofiring", index_axis(scales.len()), pos_co.iter().map(|v| mean(v)).collect())
        .with("firing", index_axis(scales.len()), pos_fi.iter().map(|v| mean(v)).collect());
    report.tables.extend([table, scale_table]);
    report.plots.extend([fig11b, fig11c]);
    Ok(report)
}

/// Position and speed read-outs of one population at the reference tau.
struct ChannelErrors {
    grid_firing: f64,
    grid_cofiring: f64,
    pair_cofiring: Vec<f64>,
    pair_cofiring_rel: Vec<f64>,
    pair_firing: Vec<f64>,
    pair_combined: Vec<f64>,
    speed: [f64; 3],
    speed_mse: [f64; 3],
}

#[allow(clippy::too_many_arguments)]
fn channel_errors(
    cfg: &ScenarioConfig,
    d: &mut Decoding,
    layout: &Layout,
    pairs: &[(usize, usize)],
    scales: &[f64],
    train: &Trajectory,
    test: &Trajectory,
    grid_scale: f64,
) -> Result<ChannelErrors> {
    let n_pairs = pairs.len();
    let (tr, te) = (position(train, grid_scale, cfg.stride)?, position(test, grid_scale, cfg.stride)?);
    let label = scale_label(grid_scale);
    let grid_firing = d.run(&label, "firing", &layout.firing(), FeatureKind::Firing, &tr, &te)?.best_relative();
    let grid_cofiring = d.run(&label, "cofiring", &layout.all_cofiring(n_pairs), FeatureKind::Cofiring, &tr, &te)?.best_relative();
    let mut e = ChannelErrors {
        grid_firing,
        grid_cofiring,
        pair_cofiring: Vec::new(),
        pair_cofiring_rel: Vec::new(),
        pair_firing: Vec::new(),
        pair_combined: Vec::new(),
        speed: [0.0; 3],
        speed_mse: [0.0; 3],
    };
    for (j, &(a, b)) in pairs.iter().enumerate() {
        let (tr, te) = (position(train, scales[j], cfg.stride)?, position(test, scales[j], cfg.stride)?);
        let label = scale_label(scales[j]);
        let co = d.run(&label, &pair_label(a, b), &layout.block(j), FeatureKind::Cofiring, &tr, &te)?;
        e.pair_cofiring.push(co.result.mse);
        e.pair_cofiring_rel.push(co.best_relative());
        e.pair_firing.push(d.run(&label, "firing", &layout.firing(), FeatureKind::Firing, &tr, &te)?.best_relative());
        let rows: Vec<usize> = layout.firing().into_iter().chain(layout.block(j)).collect();
        e.pair_combined.push(d.run(&label, "combined", &rows, FeatureKind::Combined, &tr, &te)?.best_relative());
    }
    let (sp_tr, sp_te) = (speed(train, cfg.stride), speed(test, cfg.stride));
    let subsets = [
        ("firing", FeatureKind::Firing, layout.firing()),
        ("cofiring", FeatureKind::Cofiring, layout.all_cofiring(n_pairs)),
        ("combined", FeatureKind::Combined, layout.everything(n_pairs)),
    ];
    for (c, (name, kind, rows)) in subsets.iter().enumerate() {
        let s = d.run("speed", name, rows, *kind, &sp_tr, &sp_te)?;
        e.speed[c] = s.best_relative();
        e.speed_mse[c] = s.result.mse;
    }
    Ok(e)
}

/// Grid period imposed by the conversion: three fields per lap.
fn conversion_scale(cfg: &ScenarioConfig) -> f64 {
    cfg.track.circumference_cm / 3.0
}

pub(crate) fn run_e7(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let rings = cfg.lambdas_cm.len();
    let p = cfg.theta.p;
    let pairs = all_pairs(rings);
    let scales: Vec<f64> = pairs.iter().map(|&(a, b)| pair_scale(cfg.lambdas_cm[a], cfg.lambdas_cm[b])).collect();
    if scales.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("rings with equal phase slopes encode no position in their co-firing".into()));
    }
    let layout = Layout { cells: rings * p, p };
    let grid_scale = conversion_scale(cfg);
    let tau = cfg.reference_tau;

    let cal_base = derive_seed(cfg.train_seed, CALIBRATION_SALT);
    let cal_runs = (0..cfg.calibration_runs)
        .map(|j| {
            let seed = derive_seed(cal_base, j as u64);
            report.seed("calibration", j, seed);
            theta_run(cfg, seed, cfg.train_s)
        })
        .collect::<Result<Vec<_>>>()?;
    let layout_conv = GridConversion::ring_layout(rings, p, 0.0);
    let refs: Vec<(&SpikeRaster, &Trajectory)> = cal_runs.iter().map(|r| (&r.raster, &r.traj)).collect();
    let coef = calibrate_conversion_coef(&refs, &layout_conv.phase_index, cal_base)?;
    drop(cal_runs);
    let conv = GridConversion { coef, ..layout_conv };

    let mut table = decoding_table("e7_decoding");
    let mut counts = Table::new("e7_spike_counts", &["repetition", "cell", "before", "after"]);
    let (mut before_total, mut after_total) = (vec![0.0; rings * p], vec![0.0; rings * p]);
    let mut errors: Vec<[ChannelErrors; 2]> = Vec::new();
    for r in 0..cfg.repetitions {
        let seeds = rep_seeds(cfg, r);
        report.seed("train", r, seeds.0);
        report.seed("test", r, seeds.1);
        let (train, test) = (theta_run(cfg, seeds.0, cfg.train_s)?, theta_run(cfg, seeds.1, cfg.test_s)?);
        let train_g = convert_speed_to_grid(&train.raster, &train.traj, &conv, seeds.0)?;
        let test_g = convert_speed_to_grid(&test.raster, &test.traj, &conv, seeds.1)?;
        for n in 0..rings * p {
            let (b, a) = (train.raster.spike_count(n) + test.raster.spike_count(n), train_g.spike_count(n) + test_g.spike_count(n));
            counts.push(vec![r.into(), n.into(), b.into(), a.into()])?;
            before_total[n] += b as f64;
            after_total[n] += a as f64;
        }
        let mut pair = Vec::new();
        for (stage, (tr, te)) in [("speed cells", (&train.raster, &test.raster)), ("grid cells", (&train_g, &test_g))] {
            let ch = Channels::new(cfg, tau, features(cfg, tr, &pairs, tau)?, features(cfg, te, &pairs, tau)?, seeds)?;
            let mut stage_table = decoding_table("stage");
            let mut d = Decoding { cfg, ch: &ch, table: &mut stage_table, rep: r };
            pair.push(channel_errors(cfg, &mut d, &layout, &pairs, &scales, &train.traj, &test.traj, grid_scale)?);
            for mut row in stage_table.rows {
                // channel column gains the population stage
                if let super::report::Cell::Text(c) = &row[3] {
                    row[3] = format!("{stage}: {c}").into();
                }
                table.push(row)?;
            }
        }
        let after = pair.pop().expect("two stages");
        let before = pair.pop().expect("two stages");
        errors.push([before, after]);
    }
    let drift: Vec<f64> = before_total.iter().zip(&after_total).map(|(b, a)| (a - b).abs() / b.max(1.0)).collect();
    report.check(
        "per-cell spike count changes by less than 1% after conversion, summed over repetitions",
        true,
        drift.iter().all(|&x| x < 0.01),
        format!("largest relative change {:.5}; coefficient {:.5} (quoted value 0.0475)", max(&drift), coef),
    );
    let (sum_b, sum_a) = (before_total.iter().sum::<f64>(), after_total.iter().sum::<f64>());
    report.check(
        "population spike count changes by less than 1% after conversion, summed over repetitions",
        false,
        ((sum_a - sum_b) / sum_b).abs() < 0.01,
        format!("relative change {:+.5}", (sum_a - sum_b) / sum_b),
    );
    let ring_change: Vec<f64> = (0..rings)
        .map(|r| {
            let b: f64 = before_total[r * p..(r + 1) * p].iter().sum();
            (after_total[r * p..(r + 1) * p].iter().sum::<f64>() - b) / b
        })
        .collect();
    report.check(
        "spike count of every ring changes by less than 1% after conversion, summed over repetitions",
        false,
        ring_change.iter().all(|c| c.abs() < 0.01),
        format!("relative change per ring {}", fmt_list(&ring_change)),
    );
    let before_f: Vec<f64> = errors.iter().map(|e| e[0].grid_firing).collect();
    let after_f: Vec<f64> = errors.iter().map(|e| e[1].grid_firing).collect();
    report.check(
        &format!("position at {grid_scale} cm from firing rates at or above 0.8 of chance before conversion in every repetition"),
        true,
        before_f.iter().all(|&x| x >= AT_CHANCE),
        format!("relative MSE per repetition {}", fmt_list(&before_f)),
    );
    report.check(
        &format!("position at {grid_scale} cm from firing rates below 0.15 of chance after conversion in every repetition"),
        true,
        after_f.iter().all(|&x| x < ACCURATE),
        format!("relative MSE per repetition {}", fmt_list(&after_f)),
    );
    let rises: Vec<bool> = errors.iter().flat_map(|e| e[0].pair_cofiring.iter().zip(&e[1].pair_cofiring).map(|(b, a)| a > b)).collect();
    report.check(
        "position error from co-firing rates rises at every pair scale in every repetition",
        true,
        rises.iter().all(|&b| b),
        format!("{} of {} comparisons rise", rises.iter().filter(|&&b| b).count(), rises.len()),
    );
    let (sb, sa) = (mean(&errors.iter().map(|e| e[0].speed_mse[2]).collect::<Vec<_>>()), mean(&errors.iter().map(|e| e[1].speed_mse[2]).collect::<Vec<_>>()));
    report.check(
        "combined speed error after conversion within 20% of the error before",
        true,
        ((sa - sb) / sb).abs() < 0.2,
        format!("mean MSE before {sb:.3}, after {sa:.3}, change {:+.3}", (sa - sb) / sb),
    );
    let co157: Vec<f64> = errors.iter().flat_map(|e| [e[0].grid_cofiring, e[1].grid_cofiring]).collect();
    report.check(
        &format!("position at {grid_scale} cm from co-firing rates near chance for both populations"),
        false,
        co157.iter().all(|&x| x >= AT_CHANCE),
        format!("smallest relative MSE {:.3}", min(&co157)),
    );
    let avg = |f: &dyn Fn(&ChannelErrors) -> f64, s: usize| mean(&errors.iter().map(|e| f(&e[s])).collect::<Vec<_>>());
    let stages = ["speed cells", "grid cells"];
    let mut fig12c = Plot::bar("fig12c", &format!("Position at {grid_scale} cm"), "mean MSE / chance", stages.iter().map(|s| s.to_string()).collect());
    fig12c = fig12c
        .with("firing", vec![0.0, 1.0], (0..2).map(|s| avg(&|e| e.grid_firing, s)).collect())
        .with("cofiring", vec![0.0, 1.0], (0..2).map(|s| avg(&|e| e.grid_cofiring, s)).collect());
    let mut fig12d = Plot::bar("fig12d", "Speed", "mean MSE / chance", stages.iter().map(|s| s.to_string()).collect());
    for (c, name) in ["firing", "cofiring", "combined"].into_iter().enumerate() {
        fig12d = fig12d.with(name, vec![0.0, 1.0], (0..2).map(|s| avg(&|e| e.speed[c], s)).collect());
    }
    let cats: Vec<String> = scales.iter().map(|s| format!("{s:.1} cm")).collect();
    let mut fig12e = Plot::bar("fig12e", "Position at the pair scales", "mean MSE / chance", cats);
    for (s, stage) in stages.iter().enumerate() {
        for (name, pick) in [
            ("cofiring", &(|e: &ChannelErrors| e.pair_cofiring_rel.clone()) as &dyn Fn(&ChannelErrors) -> Vec<f64>),
            ("firing", &|e: &ChannelErrors| e.pair_firing.clone()),
            ("combined", &|e: &ChannelErrors| e.pair_combined.clone()),
        ] {
            let y = (0..scales.len()).map(|j| mean(&errors.iter().map(|e| pick(&e[s])[j]).collect::<Vec<_>>())).collect();
            fig12e = fig12e.with(&format!("{stage}, {name}"), index_axis(scales.len()), y);
        }
    }
    let mut cal = Table::new("e7_calibration", &["runs", "coefficient", "quoted_coefficient"]);
    cal.push(vec![cfg.calibration_runs.into(), coef.into(), 0.0475.into()])?;
    report.tables.extend([table, counts, cal]);
    report.plots.extend([fig12c, fig12d, fig12e]);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complementary_pair_scale_is_half_the_slope() {
        for l in [314.0, 188.0, 72.0, 41.0] {
            assert!((pair_scale(l, -l) - l / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_complementary_pair_scales() {
        let l = [314.0, 188.0, 55.0, 39.0];
        let scales: Vec<f64> = all_pairs(4).iter().map(|&(a, b)| pair_scale(l[a], l[b])).collect();
        let expected = [59032.0 / 126.0, 17270.0 / 259.0, 12246.0 / 275.0, 10340.0 / 133.0, 7332.0 / 149.0, 2145.0 / 16.0];
        for (s, e) in scales.iter().zip(expected) {
            assert!((s - e).abs() < 1e-9, "{s} vs {e}");
        }
        // the quoted scales are half of these periods
        let mut halves: Vec<f64> = scales.iter().map(|s| s / 2.0).collect();
        halves.sort_by(f64::total_cmp);
        for (h, q) in halves.iter().zip(QUOTED_SCALES_CM) {
            assert!((h - q).abs() < 1.3, "{h} vs {q}");
        }
    }

    #[test]
    fn monotone_with_one_small_rise() {
        assert!(nearly_non_increasing(&[4.0, 3.0, 2.0, 1.0], 0.05));
        assert!(nearly_non_increasing(&[4.0, 4.1, 2.0, 1.0], 0.05));
        assert!(!nearly_non_increasing(&[4.0, 4.5, 2.0, 1.0], 0.05));
        assert!(!nearly_non_increasing(&[4.0, 4.1, 2.0, 2.05], 0.05));
    }
}
