//! Runs one scenario with its default configuration and prints the checks.
//!
//! `cargo run --release --example scenario_run -- E1 [out_dir]`

use std::time::Instant;

use conjucode::experiments::{run_scenario, ScenarioConfig, ScenarioId};

fn main() -> conjucode::Result<()> {
    let mut args = std::env::args().skip(1);
    let id: ScenarioId = args.next().unwrap_or_else(|| "E1".into()).parse()?;
    let cfg = ScenarioConfig::defaults(id);
    let start = Instant::now();
    let report = run_scenario(&cfg)?;
    println!("{id}: {} ({:.1} s)", id.description(), start.elapsed().as_secs_f64());
    for c in &report.checks {
        let tag = if c.passed { "pass" } else { "FAIL" };
        let req = if c.required { "required" } else { "informational" };
        println!("  [{tag}] ({req}) {}: {}", c.name, c.detail);
    }
    if let Some(dir) = args.next() {
        report.write(std::path::Path::new(&dir), true, true, true)?;
        println!("outputs written to {dir}");
    }
    Ok(())
}
