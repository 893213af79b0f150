//! Grid cells on the circular track: position from firing rates, speed from
//! co-firing rates, and the latency of speed-like co-firing tuning.

use super::common::{decoding_row, decoding_table, fmt_list, rep_seeds, subsample, trace, Channels, LagSearch};
use super::config::ScenarioConfig;
use super::hd::{ACCURATE, VELOCITY_DECODES};
use super::metrics::{correlation, tuning_curve};
use super::report::{Plot, ScenarioReport, Table};
use crate::decoder::{FeatureKind, Target};
use crate::encoders::simulate_grid_cells;
use crate::error::Result;
use crate::rates::{cofiring_strided, firing_rates_strided, FeatureMatrix, IntegratorConfig, PairingSpec};
use crate::trajectory::{gen_track_run, TrackRunParams, Trajectory};

pub(crate) fn track(cfg: &ScenarioConfig, seed: u64, duration_s: f64) -> Result<Trajectory> {
    gen_track_run(seed, &TrackRunParams { duration_s, ..cfg.track })
}

pub(crate) fn position(traj: &Trajectory, scale_cm: f64, stride: usize) -> Result<Target> {
    Ok(Target::Angle(subsample(&traj.phase_within(scale_cm)?, stride)))
}

pub(crate) fn speed(traj: &Trajectory, stride: usize) -> Target {
    Target::Scalar(subsample(&traj.v, stride))
}

/// Correlation of `row[c]` with `v[c − d]` for each offset `d` (columns).
fn lagged_correlations(row: &[f64], v: &[f64], max_d: usize) -> Result<Vec<f64>> {
    (0..=max_d).map(|d| correlation(&row[max_d..], &v[max_d - d..v.len() - d])).collect()
}

pub(crate) fn run_e4(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(cfg);
    let seeds = rep_seeds(cfg, 0);
    report.seed("train", 0, seeds.0);
    report.seed("test", 0, seeds.1);
    let (train, test) = (track(cfg, seeds.0, cfg.train_s)?, track(cfg, seeds.1, cfg.test_s)?);
    let (train_r, test_r) = (simulate_grid_cells(&train, &cfg.grid, seeds.0)?, simulate_grid_cells(&test, &cfg.grid, seeds.1)?);
    let n = train_r.n_cells();
    let pairing = PairingSpec::HdRing { n };
    let scale = cfg.grid.spacing_cm;
    let mut table = decoding_table("e4_decoding");
    let mut latency = Table::new("e4_speed_tuning_latency", &["tau_s", "band", "best_offset_s", "best_correlation"]);
    let mut corr_curves = Table::new("e4_speed_correlation", &["tau_s", "band", "offset_s", "correlation"]);
    let mut fig7f = Plot::line("fig7f", "Co-firing speed tuning against time offset", "offset (s)", "correlation with speed");
    let mut fig7e = Plot::line("fig7e", "Speed tuning of co-firing rates", "speed (cm/s)", "co-firing rate");
    let mut fig7d = Plot::line("fig7d", "Speed decoded from grid-cell co-firing rates", "time (s)", "speed (cm/s)");
    let (mut pos_rel, mut speed_rel, mut offsets) = (Vec::new(), Vec::new(), Vec::new());
    for &tau in &cfg.taus {
        let icfg = IntegratorConfig::new(tau)?;
        let tr = [firing_rates_strided(&train_r, &icfg, cfg.stride)?, cofiring_strided(&train_r, &pairing, &icfg, cfg.stride)?];
        let te = [firing_rates_strided(&test_r, &icfg, cfg.stride)?, cofiring_strided(&test_r, &pairing, &icfg, cfg.stride)?];
        let ch = Channels::new(cfg, tau, FeatureMatrix::stack(&[&tr[0], &tr[1]])?, FeatureMatrix::stack(&[&te[0], &te[1]])?, seeds)?;
        let firing: Vec<usize> = (0..n).collect();
        let co: Vec<usize> = (n..2 * n).collect();
        let (pos_tr, pos_te) = (position(&train, scale, cfg.stride)?, position(&test, scale, cfg.stride)?);
        let (sp_tr, sp_te) = (speed(&train, cfg.stride), speed(&test, cfg.stride));
        let pos = ch.sweep(cfg, &firing, FeatureKind::Firing, pos_tr.clone(), pos_te.clone(), LagSearch::Refined)?;
        let spd = ch.sweep(cfg, &co, FeatureKind::Cofiring, sp_tr.clone(), sp_te.clone(), LagSearch::Refined)?;
        let pos_c = ch.sweep(cfg, &co, FeatureKind::Cofiring, pos_tr, pos_te, LagSearch::Refined)?;
        let spd_f = ch.sweep(cfg, &firing, FeatureKind::Firing, sp_tr, sp_te, LagSearch::Refined)?;
        let label = format!("position {scale} cm");
        table.push(decoding_row(0, tau, &label, "firing", &pos))?;
        table.push(decoding_row(0, tau, &label, "cofiring", &pos_c))?;
        table.push(decoding_row(0, tau, "speed", "cofiring", &spd))?;
        table.push(decoding_row(0, tau, "speed", "firing", &spd_f))?;
        pos_rel.push(pos.best_relative());
        speed_rel.push(spd.best_relative());
        if (tau - cfg.reference_tau).abs() < 1e-12 {
            let (t, truth, pred) = trace(&spd, cfg.stride, 30.0);
            fig7d = fig7d.with("speed", t.clone(), truth).with("decoded", t, pred);
        }
        // co-firing band whose lagged correlation with speed peaks highest
        let v = subsample(&train.v, cfg.stride);
        let max_d = cfg.max_lag(tau) / cfg.stride;
        let mut best: Option<(usize, usize, f64, Vec<f64>)> = None;
        for b in 0..n {
            let c = lagged_correlations(tr[1].row(b), &v, max_d)?;
            let (d, &peak) = c.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty offsets");
            if best.as_ref().is_none_or(|x| peak > x.2) {
                best = Some((b, d, peak, c));
            }
        }
        let (band, d, peak, curve) = best.expect("at least one band");
        let step = cfg.stride as f64 * crate::trajectory::DEFAULT_DT;
        for (i, c) in curve.iter().enumerate() {
            corr_curves.push(vec![tau.into(), band.into(), (-(i as f64) * step).into(), (*c).into()])?;
        }
        let offset = -(d as f64) * step;
        latency.push(vec![tau.into(), band.into(), offset.into(), peak.into()])?;
        offsets.push(offset);
        fig7f = fig7f.with(&format!("tau {tau} s, band {band}"), (0..curve.len()).map(|i| -(i as f64) * step).collect(), curve);
        let tuning = tuning_curve(&tr[1].row(band)[d..], &v[..v.len() - d], 0.0, 60.0, 12)?;
        let keep: Vec<usize> = (0..12).filter(|&b| !tuning.sparse[b]).collect();
        fig7e = fig7e.with(
            &format!("tau {tau} s, band {band}"),
            keep.iter().map(|&b| tuning.centers[b]).collect(),
            keep.iter().map(|&b| tuning.mean[b]).collect(),
        );
    }
    let reference = cfg.taus.iter().position(|&t| (t - cfg.reference_tau).abs() < 1e-12);
    let at_ref = |x: &[f64]| reference.map_or(f64::NAN, |i| x[i]);
    report.check(
        "grid position decoded from firing rates below 0.15 of chance at the reference tau",
        true,
        at_ref(&pos_rel) < ACCURATE,
        format!("relative MSE {:.3} at tau {} s", at_ref(&pos_rel), cfg.reference_tau),
    );
    report.check(
        "grid position decoded from firing rates below 0.15 of chance at every tau",
        false,
        pos_rel.iter().all(|&r| r < ACCURATE),
        format!("relative MSE per tau {}: {}", fmt_list(&cfg.taus), fmt_list(&pos_rel)),
    );
    report.check(
        "speed decoded from co-firing rates below 0.5 of chance at the reference tau",
        true,
        at_ref(&speed_rel) < VELOCITY_DECODES,
        format!("relative MSE {:.3} at tau {} s", at_ref(&speed_rel), cfg.reference_tau),
    );
    report.check(
        "speed decoded from co-firing rates below 0.5 of chance at every tau",
        false,
        speed_rel.iter().all(|&r| r < VELOCITY_DECODES),
        format!("relative MSE per tau {}: {}", fmt_list(&cfg.taus), fmt_list(&speed_rel)),
    );
    let mut order: Vec<usize> = (0..cfg.taus.len()).collect();
    order.sort_by(|&a, &b| cfg.taus[a].total_cmp(&cfg.taus[b]));
    let growing = order.windows(2).all(|w| offsets[w[1]] < offsets[w[0]]);
    report.check(
        "speed tuning of co-firing rates peaks at a past offset that grows with tau",
        true,
        offsets.iter().all(|&o| o < 0.0) && growing,
        format!("best offsets (s) per tau {}: {}", fmt_list(&cfg.taus), fmt_list(&offsets)),
    );
    report.tables.extend([table, latency, corr_curves]);
    report.plots.extend([fig7d, fig7e, fig7f]);
    Ok(report)
}
