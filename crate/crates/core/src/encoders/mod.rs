//! Stochastic spike-train encoders.
//!
//! Every encoder computes a per-sample spike probability and thresholds an
//! independent uniform draw against it. Each cell owns its own random stream
//! keyed by `(seed, domain, cell index)`, so rasters do not depend on how
//! cells are scheduled across worker threads.

mod convert;
mod raster;
mod theta;
mod von_mises;

pub use convert::{calibrate_conversion_coef, convert_speed_to_grid, expected_conversion_change, GridConversion};
pub use raster::SpikeRaster;
pub use theta::{seed_spike_indices, simulate_theta_population, simulate_theta_ring, spike_probability, ThetaRingSpec};
pub use von_mises::{
    bessel_i0, simulate_grid_cells, simulate_hd_cells, GridPopulationSpec, HdPopulationSpec,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Draws one bit-packed row: bit `k` is set iff a uniform draw falls below
/// `prob(k)`. Exactly one draw is consumed per sample.
pub(crate) fn threshold_row(
    len: usize,
    rng: &mut ChaCha8Rng,
    mut prob: impl FnMut(usize) -> f64,
) -> Result<Vec<u64>> {
    let mut words = vec![0u64; len.div_ceil(64)];
    for k in 0..len {
        let p = prob(k);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("spike probability {p} at sample {k} lies outside [0, 1]")));
        }
        let u: f64 = rng.random();
        if u < p {
            words[k / 64] |= 1 << (k % 64);
        }
    }
    Ok(words)
}
