//! Head-direction scenarios: sigma decoding of angle, sigma-chi decoding of
//! angular velocity, and the swap tests between the two channels.

use std::f64::consts::TAU;

use super::common::{decoding_row, decoding_table, fmt_list, mean, rep_seeds, seconds, subsample, trace, Channels, LagSearch};
use super::config::ScenarioConfig;
use super::metrics::tuning_curve;
use super::report::{Plot, ScenarioReport, Table};
use crate::decoder::{evaluate, fixed_hd_decoder, FeatureKind, Target};
use crate::encoders::{simulate_hd_cells, SpikeRaster};
use crate::error::Result;
use crate::rates::{cofiring_strided, firing_rates_strided, FeatureMatrix, IntegratorConfig, PairingSpec};
use crate::trajectory::{gen_head_angle, wrap_diff, HeadAngleParams, Trajectory};

/// Accurate read-outs stay below this fraction of chance.
pub const ACCURATE: f64 = 0.15;
/// Read-outs at or above this fraction of chance count as uninformative.
pub const AT_CHANCE: f64 = 0.8;
/// Threshold for decoding velocity from co-firing rates.
pub const VELOCITY_DECODES: f64 = 0.5;

pub(crate) struct HdRun {
    pub traj: Trajectory,
    pub raster: SpikeRaster,
}

pub(crate) fn hd_run(cfg: &ScenarioConfig, seed: u64, duration_s: f64) -> Result<HdRun> {
    let traj = gen_head_angle(seed, &HeadAngleParams { duration_s, ..cfg.head })?;
    let raster = simulate_hd_cells(&traj, &cfg.hd, seed)?;
    Ok(HdRun { traj, raster })
}

struct HdFeatures {
    firing: FeatureMatrix,
    cofiring: FeatureMatrix,
}

fn features(cfg: &ScenarioConfig, run: &HdRun, tau: f64) -> Result<HdFeatures> {
    let icfg = IntegratorConfig::new(tau)?;
    let pairing = PairingSpec::HdRing { n: run.raster.n_cells() };
    Ok(HdFeatures {
        firing: firing_rates_strided(&run.raster, &icfg, cfg.stride)?,
        cofiring: cofiring_strided(&run.raster, &pairing, &icfg, cfg.stride)?,
    })
}

fn angle(run: &HdRun, stride: usize) -> Target {
    Target::Angle(subsample(&run.traj.q, stride))
}

fn velocity(run: &HdRun, stride: usize) -> Target {
    Target::Scalar(subsample(&run.traj.v, stride))
}

fn reference_taus(cfg: &ScenarioConfig) -> Vec<f64> {
    cfg.taus.iter().copied().filter(|t| [0.1, 0.2, 0.4].iter().any(|r| (t - r).abs() < 1e-12)).collect()
}

fn lag_curve(curves: &mut Table, tau: f64, sweep: &crate::decoder::LagSweep) -> Result<()> {
    for (l, m) in sweep.lags.iter().zip(&sweep.mse) {
        curves.push(vec![tau.into(), seconds(*l).into(), (*m).into(), (m / sweep.chance_mse).into()])?;
    }
    Ok(())
}

fn curve_series(sweep: &crate::decoder::LagSweep) -> (Vec<f64>, Vec<f64>) {
    (sweep.lags.iter().map(|&l| seconds(l)).collect(), sweep.mse.iter().map(|m| m / sweep.chance_mse).collect())
}

/// Circular mean of each cell's occupancy-normalised tuning curve,
/// compared with its preferred direction.
fn tuning_recovery(run: &HdRun, cfg: &ScenarioConfig) -> Result<Table> {
    let mut t = Table::new("e1_tuning", &["cell", "preferred_deg", "recovered_deg", "error_deg", "peak_bin_deg"]);
    for n in 0..run.raster.n_cells() {
        let curve = tuning_curve(&run.raster.row_f64(n), &run.traj.q, 0.0, TAU, 72)?;
        let (mut s, mut c) = (0.0, 0.0);
        for b in (0..curve.mean.len()).filter(|&b| !curve.sparse[b]) {
            s += curve.mean[b] * curve.centers[b].sin();
            c += curve.mean[b] * curve.centers[b].cos();
        }
        let rec = s.atan2(c).rem_euclid(TAU);
        let pref = cfg.hd.preferred[n];
        let peak = curve.argmax().map_or(-1.0, |b| curve.centers[b]);
        t.push(vec![
            n.into(),
            pref.to_degrees().into(),
            rec.to_degrees().into(),
            wrap_diff(rec - pref).to_degrees().abs().into(),
            peak.to_degrees().into(),
        ])?;
    }
    Ok(t)
}

pub(crate) fn run_e1(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let seeds = rep_seeds(cfg, 0);
    report.seed("train", 0, seeds.0);
    report.seed("test", 0, seeds.1);
    let train = hd_run(cfg, seeds.0, cfg.train_s)?;
    let test = hd_run(cfg, seeds.1, cfg.test_s)?;
    let mut table = Table::new(
        "e1_decoding",
        &["tau_s", "best_lag_s", "lag_over_tau", "mse", "chance_mse", "relative", "fixed_mse", "fixed_relative", "condition_number"],
    );
    let mut curves = Table::new("e1_lag_curves", &["tau_s", "lag_s", "mse", "relative"]);
    let mut fig2a = Plot::line("fig2a", "Accuracy-latency trade-off, head angle from firing rates", "lag (s)", "MSE / chance");
    let mut fig1e = Plot::line("fig1e", "Head angle decoded from firing rates", "time (s)", "angle (rad)");
    let mut relative = Vec::new();
    let mut fitted_beats_fixed = true;
    for &tau in &cfg.taus {
        let (tr, te) = (features(cfg, &train, tau)?, features(cfg, &test, tau)?);
        let ch = Channels::new(cfg, tau, tr.firing, te.firing, seeds)?;
        let rows: Vec<usize> = (0..ch.train.features.rows).collect();
        let sweep = ch.sweep(cfg, &rows, FeatureKind::Firing, angle(&train, cfg.stride), angle(&test, cfg.stride), LagSearch::Full)?;
        let fixed = fixed_hd_decoder(ch.test.features.labels.clone(), sweep.best_lag, cfg.stride);
        let fixed_res = evaluate(&fixed, &ch.test.with_target(angle(&test, cfg.stride))?)?;
        fitted_beats_fixed &= sweep.result.mse <= fixed_res.mse;
        table.push(vec![
            tau.into(),
            seconds(sweep.best_lag).into(),
            (seconds(sweep.best_lag) / tau).into(),
            sweep.result.mse.into(),
            sweep.result.chance_mse.into(),
            sweep.best_relative().into(),
            fixed_res.mse.into(),
            fixed_res.relative().into(),
            sweep.best.condition_number.unwrap_or(0.0).into(),
        ])?;
        lag_curve(&mut curves, tau, &sweep)?;
        let (x, y) = curve_series(&sweep);
        fig2a = fig2a.with(&format!("tau {tau} s"), x, y);
        if (tau - cfg.reference_tau).abs() < 1e-12 {
            let (t, truth, pred) = trace(&sweep, cfg.stride, 10.0);
            fig1e = fig1e.with("q", t.clone(), truth).with("decoded", t, pred);
        }
        relative.push(sweep.best_relative());
    }
    let lags = table.column("lag_over_tau").unwrap_or_default();
    let taus = table.column("tau_s").unwrap_or_default();
    report.check(
        "head angle decoded from firing rates below 0.15 of chance at every tau",
        true,
        relative.iter().all(|&r| r < ACCURATE),
        format!("relative MSE per tau {}: {}", fmt_list(&taus), fmt_list(&relative)),
    );
    let refs = reference_taus(cfg);
    let lag_ok: Vec<f64> = taus.iter().zip(&lags).filter(|(t, _)| refs.iter().any(|r| (*t - r).abs() < 1e-12)).map(|(_, l)| *l).collect();
    report.check(
        "best lag within 30% of tau for tau in {0.1, 0.2, 0.4} s",
        true,
        !lag_ok.is_empty() && lag_ok.iter().all(|l| (l - 1.0).abs() <= 0.3),
        format!("best lag / tau: {}", fmt_list(&lag_ok)),
    );
    report.check("fitted weights at least as accurate as fixed sine/cosine weights", false, fitted_beats_fixed, "per tau in e1_decoding".into());
    let tuning = tuning_recovery(&train, cfg)?;
    let errs = tuning.column("error_deg").unwrap_or_default();
    report.check(
        "spike-weighted mean direction within 5 degrees of each preferred direction",
        false,
        errs.iter().all(|e| *e < 5.0),
        format!("max error {:.2} deg", errs.iter().cloned().fold(0.0, f64::max)),
    );
    report.tables.extend([table, curves, tuning]);
    report.plots.extend([fig1e, fig2a]);
    Ok(report)
}

/// Even symmetry of a band's velocity tuning: largest mismatch between
/// mirrored well-sampled bins, as a fraction of the curve's range.
fn symmetry_mismatch(row: &[f64], v: &[f64], lag_cols: usize, v_max: f64, bins: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (r, cov) = (&row[lag_cols..], &v[..v.len() - lag_cols]);
    let curve = tuning_curve(r, cov, -v_max, v_max, bins)?;
    let ok: Vec<usize> = (0..bins).filter(|&b| !curve.sparse[b] && !curve.sparse[bins - 1 - b]).collect();
    let vals: Vec<f64> = ok.iter().map(|&b| curve.mean[b]).collect();
    let range = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let worst = ok.iter().map(|&b| (curve.mean[b] - curve.mean[bins - 1 - b]).abs()).fold(0.0, f64::max);
    let x = ok.iter().map(|&b| curve.centers[b]).collect();
    Ok((if range > 0.0 { worst / range } else { 0.0 }, x, vals))
}

pub(crate) fn run_e2(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let seeds = rep_seeds(cfg, 0);
    report.seed("train", 0, seeds.0);
    report.seed("test", 0, seeds.1);
    let train = hd_run(cfg, seeds.0, cfg.train_s)?;
    let test = hd_run(cfg, seeds.1, cfg.test_s)?;
    let mut table = Table::new(
        "e2_decoding",
        &["tau_s", "cofiring_lag_s", "mse", "chance_mse", "relative", "firing_lag_s", "lag_ratio"],
    );
    let mut curves = Table::new("e2_lag_curves", &["tau_s", "lag_s", "mse", "relative"]);
    let mut fig2b = Plot::line("fig2b", "Angular velocity from co-firing rates: accuracy-latency", "lag (s)", "MSE / chance");
    let mut fig5 = Plot::line("fig5", "Angular velocity decoded from co-firing rates", "time (s)", "velocity (rad/s)");
    let mut fig4c = Plot::line("fig4c", "Velocity tuning of the opposite-direction co-firing band", "velocity (rad/s)", "co-firing rate");
    let mut symmetry = None;
    let mut decodes = Vec::new();
    let mut ratio_at_ref = None;
    for &tau in &cfg.taus {
        let (tr, te) = (features(cfg, &train, tau)?, features(cfg, &test, tau)?);
        let n = tr.firing.rows;
        let train_m = FeatureMatrix::stack(&[&tr.firing, &tr.cofiring])?;
        let test_m = FeatureMatrix::stack(&[&te.firing, &te.cofiring])?;
        let ch = Channels::new(cfg, tau, train_m, test_m, seeds)?;
        let firing: Vec<usize> = (0..n).collect();
        let co: Vec<usize> = (n..2 * n).collect();
        let chi = ch.sweep(cfg, &co, FeatureKind::Cofiring, velocity(&train, cfg.stride), velocity(&test, cfg.stride), LagSearch::Full)?;
        let sig = ch.sweep(cfg, &firing, FeatureKind::Firing, angle(&train, cfg.stride), angle(&test, cfg.stride), LagSearch::Full)?;
        let ratio = if sig.best_lag > 0 { chi.best_lag as f64 / sig.best_lag as f64 } else { f64::INFINITY };
        table.push(vec![
            tau.into(),
            seconds(chi.best_lag).into(),
            chi.result.mse.into(),
            chi.result.chance_mse.into(),
            chi.best_relative().into(),
            seconds(sig.best_lag).into(),
            (if ratio.is_finite() { ratio } else { -1.0 }).into(),
        ])?;
        lag_curve(&mut curves, tau, &chi)?;
        let (x, y) = curve_series(&chi);
        fig2b = fig2b.with(&format!("tau {tau} s"), x, y);
        if tau >= 0.1 - 1e-12 {
            decodes.push(chi.best_relative());
        }
        if (tau - cfg.reference_tau).abs() < 1e-12 {
            ratio_at_ref = Some(ratio);
            let (t, truth, pred) = trace(&chi, cfg.stride, 10.0);
            fig5 = fig5.with("velocity", t.clone(), truth).with("decoded", t, pred);
            let band = n / 2;
            let v = subsample(&train.traj.v, cfg.stride);
            let (mismatch, x, y) = symmetry_mismatch(tr.cofiring.row(band), &v, chi.best_lag / cfg.stride, 3.0, 24)?;
            fig4c = fig4c.with(&format!("band {band}"), x, y);
            symmetry = Some(mismatch);
        }
    }
    report.check(
        "angular velocity from co-firing rates below 0.5 of chance for tau >= 0.1 s",
        true,
        !decodes.is_empty() && decodes.iter().all(|&r| r < VELOCITY_DECODES),
        format!("relative MSE: {}", fmt_list(&decodes)),
    );
    let ratio = ratio_at_ref.unwrap_or(f64::NAN);
    report.check(
        "best co-firing lag / best firing lag within [1.5, 2.5] at the reference tau",
        true,
        (1.5..=2.5).contains(&ratio),
        format!("ratio {ratio:.3} at tau {} s", cfg.reference_tau),
    );
    let sym = symmetry.unwrap_or(f64::NAN);
    report.check(
        "opposite-direction band tuning is even in velocity within 15% of its range",
        false,
        sym < 0.15,
        format!("largest mirrored mismatch {:.3} of range", sym),
    );
    report.tables.extend([table, curves]);
    report.plots.extend([fig2b, fig5, fig4c]);
    Ok(report)
}

pub(crate) fn run_e3(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let mut table = decoding_table("e3_decoding");
    let mut by_condition = vec![vec![vec![Vec::new(); cfg.taus.len()]; 3]; 2];
    let mut summary = Table::new(
        "e3_summary",
        &["repetition", "tau_s", "angle_cofiring_relative", "velocity_firing_relative", "angle_combined_gain", "velocity_combined_gain"],
    );
    for r in 0..cfg.repetitions {
        let seeds = rep_seeds(cfg, r);
        report.seed("train", r, seeds.0);
        report.seed("test", r, seeds.1);
        let train = hd_run(cfg, seeds.0, cfg.train_s)?;
        let test = hd_run(cfg, seeds.1, cfg.test_s)?;
        for (ti, &tau) in cfg.taus.iter().enumerate() {
            let (tr, te) = (features(cfg, &train, tau)?, features(cfg, &test, tau)?);
            let n = tr.firing.rows;
            let ch = Channels::new(cfg, tau, FeatureMatrix::stack(&[&tr.firing, &tr.cofiring])?, FeatureMatrix::stack(&[&te.firing, &te.cofiring])?, seeds)?;
            let subsets: [(&str, FeatureKind, Vec<usize>); 3] = [
                ("firing", FeatureKind::Firing, (0..n).collect()),
                ("cofiring", FeatureKind::Cofiring, (n..2 * n).collect()),
                ("combined", FeatureKind::Combined, (0..2 * n).collect()),
            ];
            let mut mse = [[0.0; 3]; 2];
            let mut rel = [[0.0; 3]; 2];
            for (t, (name, tr_t, te_t)) in
                [("angle", angle(&train, cfg.stride), angle(&test, cfg.stride)), ("velocity", velocity(&train, cfg.stride), velocity(&test, cfg.stride))]
                    .into_iter()
                    .enumerate()
            {
                for (c, (cname, kind, rows)) in subsets.iter().enumerate() {
                    let s = ch.sweep(cfg, rows, *kind, tr_t.clone(), te_t.clone(), LagSearch::Refined)?;
                    table.push(decoding_row(r, tau, name, cname, &s))?;
                    mse[t][c] = s.result.mse;
                    rel[t][c] = s.best_relative();
                    by_condition[t][c][ti].push(rel[t][c]);
                }
            }
            let gain = |t: usize| {
                let best = mse[t][0].min(mse[t][1]);
                (best - mse[t][2]) / best
            };
            summary.push(vec![r.into(), tau.into(), rel[0][1].into(), rel[1][0].into(), gain(0).into(), gain(1).into()])?;
        }
    }
    let col = |name: &str| summary.column(name).unwrap_or_default();
    let (a, v, ga, gv) = (col("angle_cofiring_relative"), col("velocity_firing_relative"), col("angle_combined_gain"), col("velocity_combined_gain"));
    let reps = cfg.repetitions;
    let min = |x: &[f64]| x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |x: &[f64]| x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report.check(
        "head angle from co-firing rates at or above 0.8 of chance for every tau and repetition",
        true,
        a.iter().all(|&x| x >= AT_CHANCE),
        format!("minimum relative MSE {:.3} over {} repetitions", min(&a), reps),
    );
    report.check(
        "angular velocity from firing rates at or above 0.8 of chance for every tau and repetition",
        true,
        v.iter().all(|&x| x >= AT_CHANCE),
        format!("minimum relative MSE {:.3} over {} repetitions", min(&v), reps),
    );
    report.check(
        "combined angle read-out improves on the better channel by less than 5%",
        true,
        ga.iter().all(|&g| g < 0.05),
        format!("largest gain {:.4}", max(&ga)),
    );
    report.check(
        "combined velocity read-out improves on the better channel by less than 5%",
        true,
        gv.iter().all(|&g| g < 0.05),
        format!("largest gain {:.4}", max(&gv)),
    );
    let mut plots = Vec::new();
    let cats: Vec<String> = cfg.taus.iter().map(|t| format!("{t}")).collect();
    for (t, (fig, title)) in [("fig6b", "Head angle: MSE / chance by channel"), ("fig6c", "Angular velocity: MSE / chance by channel")].into_iter().enumerate() {
        let mut p = Plot::bar(fig, title, "mean MSE / chance", cats.clone());
        for (c, channel) in ["firing", "cofiring", "combined"].into_iter().enumerate() {
            let y = by_condition[t][c].iter().map(|v| mean(v)).collect();
            p = p.with(channel, (0..cfg.taus.len()).map(|i| i as f64).collect(), y);
        }
        plots.push(p);
    }
    report.tables.extend([table, summary]);
    report.plots.extend(plots);
    Ok(report)
}
