use std::path::Path;
use std::process::{Command, Output};

fn conjucode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conjucode")).args(args).env("CONJUCODE_THREADS", "1").output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    for args in [&["--help"][..], &["scenario", "--help"], &["decode", "--help"]] {
        let out = conjucode(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn unknown_flag_exits_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = conjucode(&["scenario", "--id", "E1", "--bogus", "--out", arg(&target)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn invalid_config_exits_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = conjucode(&["scenario", "--id", "E4", "--taus", "0.4", "--reference-tau", "0.2", "--out", arg(&target)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn simulate_rates_decode_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (seed, secs) in [("1", "120"), ("2", "90")] {
        let sim = d.join(format!("sim{seed}"));
        let out = conjucode(&["simulate", "--population", "hd", "--duration", secs, "--seed", seed, "--out", arg(&sim)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["trajectory.csv", "raster.csv", "manifest.json"] {
            assert!(sim.join(f).exists(), "{f}");
        }
        let rates = d.join(format!("rates{seed}"));
        let raster = sim.join("raster.csv");
        let out = conjucode(&["rates", "--raster", arg(&raster), "--tau", "0.2", "--stride", "10", "--binary", "--out", arg(&rates)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(rates.join("firing.bin").exists() && rates.join("cofiring.bin").exists());
    }
    let decoded = d.join("decoded");
    let (f1, f2) = (d.join("rates1/firing.bin"), d.join("rates2/firing.bin"));
    let (t1, t2) = (d.join("sim1/trajectory.csv"), d.join("sim2/trajectory.csv"));
    let out = conjucode(&[
        "decode",
        "--train-features",
        arg(&f1),
        "--test-features",
        arg(&f2),
        "--train-trajectory",
        arg(&t1),
        "--test-trajectory",
        arg(&t2),
        "--target",
        "angle",
        "--kind",
        "firing",
        "--max-lag-s",
        "0.5",
        "--out",
        arg(&decoded),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(decoded.join("summary.json")).unwrap()).unwrap();
    let relative = summary["relative"].as_f64().unwrap();
    assert!(relative < 0.5, "head angle from firing rates at {relative} of chance");
    assert!(decoded.join("weights.json").exists() && decoded.join("decoded.csv").exists());
}

#[test]
fn scenario_check_and_rerun_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let short = ["--train-s", "120", "--test-s", "90", "--taus", "0.4", "--reference-tau", "0.4", "--repetitions", "1"];
    let mut args = vec!["scenario", "--id", "E4", "--check", "--out", arg(&a)];
    args.extend(short);
    let out = conjucode(&args);
    let code = out.status.code();
    assert!(code == Some(0) || code == Some(4), "{code:?}: {}", String::from_utf8_lossy(&out.stderr));
    let manifest = a.join("E4/manifest.json");
    let out = conjucode(&["scenario", "--config", arg(&manifest), "--out", arg(&b)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "checks.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join("E4").join(f)).unwrap(), std::fs::read(b.join("E4").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_for_another_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"id": "E2"}"#).unwrap();
    let out = conjucode(&["scenario", "--id", "E1", "--config", arg(&cfg), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}
