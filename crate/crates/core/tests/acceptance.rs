//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test --release --test acceptance`

use std::path::Path;
use std::time::Instant;

use conjucode::encoders::SpikeRaster;
use conjucode::experiments::{run_scenario, Manifest, ScenarioConfig, ScenarioId, ScenarioReport};
use conjucode::rates::{chi_pair, cofiring, firing_rates, IntegratorConfig, PairingSpec};
use conjucode::SampleClock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.001;
const TOL: f64 = 1e-8;

struct Outcome {
    passed: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, details: Vec::new() }
    }

    fn expect(&mut self, ok: bool, what: String) {
        self.passed &= ok;
        self.details.push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn random_raster(rng: &mut ChaCha8Rng, n: usize, k: usize, p: f64) -> SpikeRaster {
    let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..k).map(|_| rng.random_bool(p)).collect()).collect();
    let labels = (0..n).map(|i| format!("c{i}")).collect();
    SpikeRaster::from_rows(labels, SampleClock::new(DT, k).unwrap(), &rows).unwrap()
}

/// Direct kernel sum `r[k] = Σ_{a ≤ k} s[a]·e^{−(k−a)·dt/τ}`.
fn convolve(spikes: &[usize], k_len: usize, tau: f64) -> Vec<f64> {
    let kernel: Vec<f64> = (0..k_len).map(|m| (-(m as f64) * DT / tau).exp()).collect();
    (0..k_len).map(|k| spikes.iter().take_while(|&&a| a <= k).map(|&a| kernel[k - a]).sum()).collect()
}

/// `χ_{i,j}[k] = Σ_{a ∈ S_i, a ≤ k} e^{−(k−a)·dt/τ_v} Σ_{b ∈ S_j, b ≤ a} e^{−(a−b)·dt/τ_u}`.
fn chi_double_sum(si: &[usize], sj: &[usize], k_len: usize, tau_u: f64, tau_v: f64) -> Vec<f64> {
    let weight: Vec<f64> = si
        .iter()
        .map(|&a| sj.iter().take_while(|&&b| b <= a).map(|&b| (-((a - b) as f64) * DT / tau_u).exp()).sum())
        .collect();
    (0..k_len)
        .map(|k| {
            si.iter().zip(&weight).take_while(|(&a, _)| a <= k).map(|(&a, w)| w * (-((k - a) as f64) * DT / tau_v).exp()).sum()
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle_equivalence() -> Outcome {
    let mut out = Outcome::new();
    let k = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_rate: f64 = 0.0;
    let mut worst_cofiring: f64 = 0.0;
    let cases = [
        (PairingSpec::HdRing { n: 6 }, 0.1, 0.1),
        (PairingSpec::HdRing { n: 4 }, 0.025, 0.05),
        (PairingSpec::HdRing { n: 5 }, 0.4, 0.2),
        (PairingSpec::ThetaCrossRing { p: 3 }, 0.05, 0.05),
        (PairingSpec::ThetaCrossRing { p: 2 }, 0.2, 0.1),
    ];
    for (pairing, tau_u, tau_v) in cases {
        let n = pairing.n_cells();
        let p = rng.random_range(0.005..0.05);
        let raster = random_raster(&mut rng, n, k, p);
        let cfg = IntegratorConfig { tau_u, tau_v };
        let rates = firing_rates(&raster, &cfg).unwrap();
        let conv: Vec<Vec<f64>> = (0..n).map(|c| convolve(&raster.spike_indices(c), k, tau_u)).collect();
        for (c, row) in conv.iter().enumerate() {
            worst_rate = worst_rate.max(max_abs_diff(rates.row(c), row));
        }
        // materialise every chi rate, then pool the bands
        let spikes: Vec<Vec<f64>> = (0..n).map(|c| raster.row_f64(c)).collect();
        let tensor: Vec<Vec<Vec<f64>>> =
            (0..n).map(|i| (0..n).map(|j| chi_pair(&spikes[i], &conv[j], &cfg, DT).unwrap()).collect()).collect();
        let streamed = cofiring(&raster, &pairing, &cfg).unwrap();
        for (m, band) in pairing.bands().iter().enumerate() {
            let mut pooled = vec![0.0; k];
            for &(i, j) in band {
                for (acc, v) in pooled.iter_mut().zip(&tensor[i][j]) {
                    *acc += v;
                }
            }
            worst_cofiring = worst_cofiring.max(max_abs_diff(streamed.row(m), &pooled));
        }
    }
    out.expect(worst_rate < TOL, format!("recurrence vs direct convolution: max |diff| {worst_rate:.2e}"));
    out.expect(worst_cofiring < TOL, format!("streaming vs materialised tensor: max |diff| {worst_cofiring:.2e}"));
    out
}

fn chi_oracle() -> Outcome {
    let mut out = Outcome::new();
    let k = 2_000;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let tau_u = rng.random_range(0.01..0.4);
        let tau_v = rng.random_range(0.01..0.4);
        let cfg = IntegratorConfig { tau_u, tau_v };
        let p = rng.random_range(0.005..0.08);
        let raster = random_raster(&mut rng, 2, k, p);
        let (si, sj) = (raster.spike_indices(0), raster.spike_indices(1));
        let rj = firing_rates(&raster, &cfg).unwrap().row(1).to_vec();
        let chi = chi_pair(&raster.row_f64(0), &rj, &cfg, DT).unwrap();
        worst = worst.max(max_abs_diff(&chi, &chi_double_sum(&si, &sj, k, tau_u, tau_v)));
    }
    out.expect(worst < TOL, format!("100 random pairs vs double sum: max |diff| {worst:.2e}"));

    // j fires at 100 ms, i at 300 ms
    let (tj, ti) = (100, 300);
    let cfg = IntegratorConfig::new(0.1).unwrap();
    let raster = SpikeRaster::from_spike_indices(
        vec!["i".into(), "j".into()],
        SampleClock::new(DT, k).unwrap(),
        &[vec![ti], vec![tj]],
    )
    .unwrap();
    let rates = firing_rates(&raster, &cfg).unwrap();
    let chi_ij = chi_pair(&raster.row_f64(0), rates.row(1), &cfg, DT).unwrap();
    let chi_ji = chi_pair(&raster.row_f64(1), rates.row(0), &cfg, DT).unwrap();
    let expected: Vec<f64> = (0..k)
        .map(|t| if t < ti { 0.0 } else { (-((ti - tj) as f64) * DT / cfg.tau_u).exp() * (-((t - ti) as f64) * DT / cfg.tau_v).exp() })
        .collect();
    let diff = max_abs_diff(&chi_ij, &expected);
    out.expect(diff < 1e-12, format!("two-spike chi_ij follows the exponential decay: max |diff| {diff:.2e}"));
    out.expect(chi_ji.iter().all(|&v| v == 0.0), "two-spike chi_ji is identically zero".into());
    out
}

/// Every required check of the scenario must pass.
fn scenario_criterion(report: &ScenarioReport) -> Outcome {
    let mut out = Outcome::new();
    for c in report.checks.iter().filter(|c| c.required) {
        out.expect(c.passed, format!("{}: {}", c.name, c.detail));
    }
    for c in report.checks.iter().filter(|c| !c.required) {
        out.details.push(format!("info {}: {}", c.name, c.detail));
    }
    out
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Writes each report, re-runs its config from the written manifest on a
/// pool of a different size, and compares every output byte for byte.
fn determinism(reports: &[&ScenarioReport]) -> Outcome {
    let mut out = Outcome::new();
    let tmp = tempfile::tempdir().unwrap();
    for report in reports {
        let first = tmp.path().join(format!("{}-a", report.id));
        let second = tmp.path().join(format!("{}-b", report.id));
        report.write(&first, true, true, true).unwrap();
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let rerun = pool.install(|| run_scenario(&manifest.config)).unwrap();
        rerun.write(&second, true, true, true).unwrap();
        let (a, b) = (files_in(&first), files_in(&second));
        let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
        out.expect(a == b, format!("{} re-run from its manifest: {} files identical ({})", report.id, a.len(), names.join(", ")));
    }
    out
}

fn report(number: usize, title: &str, start: Instant, outcome: &Outcome) -> bool {
    let tag = if outcome.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {number:>2}: {title} ({:.1} s)", start.elapsed().as_secs_f64());
    for d in &outcome.details {
        println!("           {d}");
    }
    outcome.passed
}

fn main() {
    let mut results = Vec::new();

    let t = Instant::now();
    results.push(report(1, "rate recurrence and streaming co-firing match their oracles", t, &oracle_equivalence()));
    let t = Instant::now();
    results.push(report(2, "chi rate matches the spike-pair double sum and is ordered", t, &chi_oracle()));

    let mut kept = Vec::new();
    let titles = [
        (ScenarioId::E1, "head angle from firing rates, latency near tau"),
        (ScenarioId::E2, "angular velocity from co-firing rates, latency doubling"),
        (ScenarioId::E3, "swap tests at chance and combined gains below 5%"),
        (ScenarioId::E4, "grid position from rates, speed from co-firing, negative offset"),
        (ScenarioId::E5, "theta slope signs, fine-scale position, swap tests"),
        (ScenarioId::E6, "non-complementary rings: speed from both channels"),
        (ScenarioId::E7, "speed-to-grid conversion moves position into firing rates"),
    ];
    for (i, (id, title)) in titles.iter().enumerate() {
        let t = Instant::now();
        let rep = run_scenario(&ScenarioConfig::defaults(*id)).unwrap();
        let elapsed = t.elapsed().as_secs_f64();
        let mut outcome = scenario_criterion(&rep);
        outcome.expect(elapsed < 300.0, format!("runtime {elapsed:.1} s under 300 s"));
        results.push(report(i + 3, &format!("{id}: {title}"), t, &outcome));
        if matches!(id, ScenarioId::E1 | ScenarioId::E2 | ScenarioId::E4) {
            kept.push(rep);
        }
    }

    let t = Instant::now();
    let refs: Vec<&ScenarioReport> = kept.iter().collect();
    results.push(report(10, "re-runs from a manifest are byte-identical", t, &determinism(&refs)));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed} of {} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
