//! Ingests 30 Hz tracking rows and resamples them to a 1 kHz trajectory.
//!
//! `cargo run --release --example tracking_ingest [file.csv two_led|boom_angle]`

use std::f64::consts::TAU;
use std::fmt::Write;

use conjucode::trajectory::{ingest_tracking, ingest_tracking_csv, TrackingFormat};

/// Two head LEDs 4 cm apart, turning at 1 rad/s.
fn synthetic_two_led() -> String {
    let mut text = String::from("t_s,xr,yr,xg,yg\n");
    for i in 0..900 {
        let t = i as f64 / 30.0;
        let (s, c) = (t % TAU).sin_cos();
        writeln!(text, "{t:.6},{:.6},{:.6},{:.6},{:.6}", 50.0 + 2.0 * c, 50.0 + 2.0 * s, 50.0 - 2.0 * c, 50.0 - 2.0 * s).unwrap();
    }
    text
}

fn main() -> conjucode::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let traj = match args.as_slice() {
        [path, format] => ingest_tracking_csv(path.as_ref(), format.parse::<TrackingFormat>()?, 3)?,
        _ => ingest_tracking(synthetic_two_led().as_bytes(), TrackingFormat::TwoLed, 1)?,
    };
    let mean_v = traj.v.iter().sum::<f64>() / traj.len() as f64;
    println!("{} samples at {} Hz ({:.2} s), mean velocity {mean_v:.3}", traj.len(), traj.clock.fs(), traj.clock.duration());
    Ok(())
}
