//! Writes a raster as CSV spike times and as packed binary, then reads both
//! back and checks they match the original.
//!
//! `cargo run --release --example raster_io`

use conjucode::encoders::{simulate_hd_cells, HdPopulationSpec};
use conjucode::io::{read_raster_bin, read_raster_csv, write_raster_bin, write_raster_csv};
use conjucode::trajectory::{gen_head_angle, HeadAngleParams};

fn main() -> conjucode::Result<()> {
    let traj = gen_head_angle(3, &HeadAngleParams { duration_s: 20.0, ..HeadAngleParams::default() })?;
    let raster = simulate_hd_cells(&traj, &HdPopulationSpec::default(), 3)?;

    let mut csv = Vec::new();
    write_raster_csv(&raster, &mut csv)?;
    let mut bin = Vec::new();
    write_raster_bin(&raster, &mut bin)?;

    let from_csv = read_raster_csv(csv.as_slice())?;
    let from_bin = read_raster_bin(bin.as_slice())?;
    println!("{} cells, {} samples, {} spikes", raster.n_cells(), raster.len(), raster.total_spikes());
    println!("csv {} bytes, round trip exact: {}", csv.len(), from_csv == raster);
    println!("binary {} bytes, round trip exact: {}", bin.len(), from_bin == raster);
    Ok(())
}
