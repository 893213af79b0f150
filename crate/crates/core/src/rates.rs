//! Exponential integration of spike trains into firing rates, chi rates
//! and band-pooled co-firing rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::SpikeRaster;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Firing-rate decay constant, seconds.
    pub tau_u: f64,
    /// Chi-rate decay constant, seconds.
    pub tau_v: f64,
}

impl IntegratorConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let cfg = Self { tau_u: tau, tau_v: tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("tau_u", self.tau_u)?;
        ensure_finite("tau_v", self.tau_v)?;
        if self.tau_u <= 0.0 || self.tau_v <= 0.0 {
            return Err(Error::Parameter(format!("decay constants must be positive, got {} and {}", self.tau_u, self.tau_v)));
        }
        Ok(())
    }

    fn decays(&self, dt: f64) -> (f64, f64) {
        ((-dt / self.tau_u).exp(), (-dt / self.tau_v).exp())
    }
}

/// Row-major real matrix with one labelled row per feature. Column `c`
/// holds the value at sample `c·stride`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub labels: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    pub stride: usize,
    pub dt: f64,
    pub data: Vec<f64>,
}

/// Firing rates, one row per cell.
pub type RateMatrix = FeatureMatrix;
/// Co-firing rates, one row per band.
pub type CoFiringMatrix = FeatureMatrix;

impl FeatureMatrix {
    pub fn zeros(labels: Vec<String>, cols: usize, stride: usize, dt: f64) -> Self {
        let rows = labels.len();
        Self { labels, rows, cols, stride, dt, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<f64>>, stride: usize, dt: f64) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), rows.len())));
        }
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("feature rows differ in length".into()));
        }
        Ok(Self { rows: labels.len(), labels, cols, stride, dt, data: rows.concat() })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.cols..(m + 1) * self.cols]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.cols..(m + 1) * self.cols]
    }

    pub fn get(&self, m: usize, c: usize) -> f64 {
        self.data[m * self.cols + c]
    }

    /// Time in seconds of column `c`.
    pub fn time(&self, c: usize) -> f64 {
        (c * self.stride) as f64 * self.dt
    }

    /// Concatenates rows of matrices sharing a column layout.
    pub fn stack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        let mut out = FeatureMatrix::zeros(Vec::new(), first.cols, first.stride, first.dt);
        for p in parts {
            if p.cols != first.cols || p.stride != first.stride || p.dt != first.dt {
                return Err(Error::Shape("stacked feature matrices must share columns".into()));
            }
            out.labels.extend(p.labels.iter().cloned());
            out.data.extend_from_slice(&p.data);
            out.rows += p.rows;
        }
        Ok(out)
    }

    /// Keeps only the listed rows.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(Vec::new(), self.cols, self.stride, self.dt);
        for &m in rows {
            out.labels.push(self.labels[m].clone());
            out.data.extend_from_slice(self.row(m));
            out.rows += 1;
        }
        out
    }
}

fn columns(len: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    Ok(len.div_ceil(stride))
}

/// `r[k] = r[k−1]·e^{−dt/τ_u} + s[k]` for every cell, at full resolution.
pub fn firing_rates(raster: &SpikeRaster, cfg: &IntegratorConfig) -> Result<RateMatrix> {
    firing_rates_strided(raster, cfg, 1)
}

/// Firing rates sampled every `stride` samples.
pub fn firing_rates_strided(raster: &SpikeRaster, cfg: &IntegratorConfig, stride: usize) -> Result<RateMatrix> {
    cfg.validate()?;
    let k_len = raster.len();
    let cols = columns(k_len, stride)?;
    let (du, _) = cfg.decays(raster.clock().dt);
    let rows = (0..raster.n_cells())
        .into_par_iter()
        .map(|n| {
            let words = raster.row_words(n);
            let mut out = Vec::with_capacity(cols);
            let mut r = 0.0;
            // samples until the next output column
            let mut due = 0;
            for k in 0..k_len {
                r = r * du + ((words[k / 64] >> (k % 64)) & 1) as f64;
                if due == 0 {
                    out.push(r);
                    due = stride;
                }
                due -= 1;
            }
            out
        })
        .collect();
    FeatureMatrix::from_rows(raster.labels().to_vec(), rows, stride, raster.clock().dt)
}

/// `χ_{i,j} = (s_i ∘ r_j) ⊛ v`: spikes of `i` weighted by the rate of `j`,
/// integrated with decay `τ_v`.
pub fn chi_pair(s_i: &[f64], r_j: &[f64], cfg: &IntegratorConfig, dt: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if s_i.len() != r_j.len() {
        return Err(Error::Shape(format!("spike train of {} samples vs rate of {}", s_i.len(), r_j.len())));
    }
    let (_, dv) = cfg.decays(dt);
    let mut chi = 0.0;
    Ok(s_i
        .iter()
        .zip(r_j)
        .map(|(&s, &r)| {
            chi = chi * dv + s * r;
            chi
        })
        .collect())
}

/// Band structure of ordered cell pairs pooled into co-firing units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum PairingSpec {
    /// Band `m` pools pairs `(i, (i+m) mod n)` of one ring of `n` cells.
    HdRing { n: usize },
    /// Raster rows `0..p` form ring a and `p..2p` ring b; band `m` pools
    /// pairs `(i ∈ a, (i+m) mod p ∈ b)`.
    ThetaCrossRing { p: usize },
}

impl PairingSpec {
    pub fn n_cells(&self) -> usize {
        match *self {
            PairingSpec::HdRing { n } => n,
            PairingSpec::ThetaCrossRing { p } => 2 * p,
        }
    }

    pub fn n_bands(&self) -> usize {
        match *self {
            PairingSpec::HdRing { n } => n,
            PairingSpec::ThetaCrossRing { p } => p,
        }
    }

    /// Ordered `(i, j)` raster-row pairs of each band.
    pub fn bands(&self) -> Vec<Vec<(usize, usize)>> {
        match *self {
            PairingSpec::HdRing { n } => (0..n).map(|m| (0..n).map(|i| (i, (i + m) % n)).collect()).collect(),
            PairingSpec::ThetaCrossRing { p } => (0..p).map(|m| (0..p).map(|i| (i, p + (i + m) % p)).collect()).collect(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let n = self.n_bands();
        (0..n).map(|m| format!("d{:.1}deg", 360.0 * m as f64 / n as f64)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_bands() < 1 {
            return Err(Error::Pairing("pairing needs at least one cell per ring".into()));
        }
        Ok(())
    }
}

/// Band-pooled co-firing rates at full resolution.
pub fn cofiring(raster: &SpikeRaster, pairing: &PairingSpec, cfg: &IntegratorConfig) -> Result<CoFiringMatrix> {
    cofiring_strided(raster, pairing, cfg, 1)
}

/// Streaming co-firing: one pass over time keeping one rate per cell and
/// one accumulator per band. Because every chi rate of a band shares the
/// same decay, the band sum obeys the same recurrence as its members:
/// `ṙ_m[k] = ṙ_m[k−1]·e^{−dt/τ_v} + Σ_{(i,j)∈m} s_i[k]·r_j[k]`.
pub fn cofiring_strided(raster: &SpikeRaster, pairing: &PairingSpec, cfg: &IntegratorConfig, stride: usize) -> Result<CoFiringMatrix> {
    cfg.validate()?;
    pairing.validate()?;
    if raster.n_cells() != pairing.n_cells() {
        return Err(Error::Shape(format!("pairing expects {} cells, raster has {}", pairing.n_cells(), raster.n_cells())));
    }
    let k_len = raster.len();
    let cols = columns(k_len, stride)?;
    let n_cells = raster.n_cells();
    let bands = pairing.bands();
    let n_bands = bands.len();
    // partner[i] lists (band, j) for every pair whose first member is i
    let mut partner: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_cells];
    for (m, pairs) in bands.iter().enumerate() {
        for &(i, j) in pairs {
            partner[i].push((m, j));
        }
    }
    let (du, dv) = cfg.decays(raster.clock().dt);
    let rows: Vec<&[u64]> = (0..n_cells).map(|n| raster.row_words(n)).collect();
    let mut r = vec![0.0; n_cells];
    let mut acc = vec![0.0; n_bands];
    let mut out = FeatureMatrix::zeros(pairing.labels(), cols, stride, raster.clock().dt);
    let mut spiking = Vec::with_capacity(n_cells);
    let (mut c, mut due) = (0, 0);
    for k in 0..k_len {
        let (w, b) = (k / 64, k % 64);
        spiking.clear();
        for (n, rn) in r.iter_mut().enumerate() {
            *rn *= du;
            if (rows[n][w] >> b) & 1 == 1 {
                *rn += 1.0;
                spiking.push(n);
            }
        }
        for a in acc.iter_mut() {
            *a *= dv;
        }
        for &i in &spiking {
            for &(m, j) in &partner[i] {
                acc[m] += r[j];
            }
        }
        if due == 0 {
            for (m, &a) in acc.iter().enumerate() {
                out.data[m * cols + c] = a;
            }
            c += 1;
            due = stride;
        }
        due -= 1;
    }
    Ok(out)
}

/// Stacks one cross-ring block per listed ring pair. Chi rates are formed
/// within, never between, the listed pairs.
pub fn multi_ring_cofiring(
    rings: &[&SpikeRaster],
    ring_pairs: &[(usize, usize)],
    cfg: &IntegratorConfig,
    stride: usize,
) -> Result<CoFiringMatrix> {
    cfg.validate()?;
    let first = rings.first().ok_or_else(|| Error::Pairing("no rings supplied".into()))?;
    let cols = columns(first.len(), stride)?;
    for &(a, b) in ring_pairs {
        if a == b {
            return Err(Error::Pairing(format!("ring pair ({a}, {b}) references one ring twice")));
        }
        if a >= rings.len() || b >= rings.len() {
            return Err(Error::Pairing(format!("ring pair ({a}, {b}) outside {} rings", rings.len())));
        }
        if rings[a].n_cells() != rings[b].n_cells() {
            return Err(Error::Pairing(format!("rings {a} and {b} differ in size")));
        }
    }
    let blocks = ring_pairs
        .par_iter()
        .map(|&(a, b)| {
            let p = rings[a].n_cells();
            let both = SpikeRaster::stack(&[rings[a], rings[b]])?;
            let mut block = cofiring_strided(&both, &PairingSpec::ThetaCrossRing { p }, cfg, stride)?;
            for l in &mut block.labels {
                *l = format!("r{a}r{b}_{l}");
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    if blocks.is_empty() {
        return Ok(FeatureMatrix::zeros(Vec::new(), cols, stride, first.clock().dt));
    }
    FeatureMatrix::stack(&blocks.iter().collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::SampleClock;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raster(n: usize, k: usize, p: f64, seed: u64) -> SpikeRaster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..k).map(|_| rng.random::<f64>() < p).collect()).collect();
        SpikeRaster::from_rows((0..n).map(|i| format!("c{i}")).collect(), SampleClock::new(0.001, k).unwrap(), &rows).unwrap()
    }

    #[test]
    fn single_spike_decays_to_one_over_e() {
        let raster = SpikeRaster::from_spike_indices(vec!["a".into()], SampleClock::new(0.001, 1000).unwrap(), &[vec![100]]).unwrap();
        let r = firing_rates(&raster, &IntegratorConfig::new(0.2).unwrap()).unwrap();
        assert_eq!(r.get(0, 100), 1.0);
        assert_eq!(r.get(0, 99), 0.0);
        assert!((r.get(0, 300) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_raster_gives_zero_rates() {
        let raster = random_raster(3, 500, 0.0, 1);
        let r = firing_rates(&raster, &IntegratorConfig::new(0.05).unwrap()).unwrap();
        assert!(r.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonpositive_tau_rejected() {
        assert!(matches!(IntegratorConfig::new(0.0), Err(Error::Parameter(_))));
        assert!(IntegratorConfig { tau_u: 0.1, tau_v: -1.0 }.validate().is_err());
    }

    #[test]
    fn strided_rates_subsample_full_rates() {
        let raster = random_raster(4, 1003, 0.05, 2);
        let cfg = IntegratorConfig::new(0.03).unwrap();
        let full = firing_rates(&raster, &cfg).unwrap();
        let s = firing_rates_strided(&raster, &cfg, 10).unwrap();
        assert_eq!(s.cols, 101);
        for m in 0..4 {
            for c in 0..s.cols {
                assert_eq!(s.get(m, c), full.get(m, c * 10));
            }
        }
        let cf = cofiring(&raster, &PairingSpec::HdRing { n: 4 }, &cfg).unwrap();
        let cs = cofiring_strided(&raster, &PairingSpec::HdRing { n: 4 }, &cfg, 10).unwrap();
        for m in 0..4 {
            for c in 0..cs.cols {
                assert_eq!(cs.get(m, c), cf.get(m, c * 10));
            }
        }
    }

    #[test]
    fn two_spike_asymmetry() {
        let clock = SampleClock::new(0.001, 40).unwrap();
        let cfg = IntegratorConfig::new(0.005).unwrap();
        let mut s_i = vec![0.0; 40];
        let mut s_j = vec![0.0; 40];
        s_i[10] = 1.0;
        s_j[0] = 1.0;
        let raster = SpikeRaster::from_spike_indices(vec!["j".into(), "i".into()], clock, &[vec![0], vec![10]]).unwrap();
        let r = firing_rates(&raster, &cfg).unwrap();
        let chi_ij = chi_pair(&s_i, r.row(0), &cfg, 0.001).unwrap();
        let chi_ji = chi_pair(&s_j, r.row(1), &cfg, 0.001).unwrap();
        assert!((chi_ij[10] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((chi_ij[15] - (-3.0f64).exp()).abs() < 1e-15);
        assert!(chi_ij[..10].iter().all(|&v| v == 0.0));
        assert!(chi_ji.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hd_ring_bands_partition_all_pairs() {
        let bands = PairingSpec::HdRing { n: 12 }.bands();
        assert_eq!(bands.len(), 12);
        let mut all: Vec<_> = bands.concat();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 144);
        let cross = PairingSpec::ThetaCrossRing { p: 12 }.bands();
        let mut c: Vec<_> = cross.concat();
        c.sort();
        c.dedup();
        assert_eq!(c.len(), 144);
        assert!(c.iter().all(|&(i, j)| i < 12 && j >= 12));
    }

    #[test]
    fn one_active_cell_lights_only_self_band() {
        let mut raster = SpikeRaster::empty((0..6).map(|i| format!("c{i}")).collect(), SampleClock::new(0.001, 2000).unwrap());
        for k in (0..2000).step_by(37) {
            raster.set(2, k, true);
        }
        let cf = cofiring(&raster, &PairingSpec::HdRing { n: 6 }, &IntegratorConfig::new(0.02).unwrap()).unwrap();
        assert!(cf.row(0).iter().any(|&v| v > 0.0));
        for m in 1..6 {
            assert!(cf.row(m).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn multi_ring_shapes() {
        let rings: Vec<_> = (0..4).map(|s| random_raster(12, 300, 0.03, s)).collect();
        let refs: Vec<_> = rings.iter().collect();
        let cfg = IntegratorConfig::new(0.05).unwrap();
        let four = multi_ring_cofiring(&refs, &[(0, 1), (2, 3), (0, 2), (1, 3)], &cfg, 1).unwrap();
        assert_eq!(four.rows, 48);
        let six = multi_ring_cofiring(&refs, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], &cfg, 1).unwrap();
        assert_eq!(six.rows, 72);
        let none = multi_ring_cofiring(&refs, &[], &cfg, 1).unwrap();
        assert_eq!((none.rows, none.cols), (0, 300));
        assert!(matches!(multi_ring_cofiring(&refs, &[(1, 1)], &cfg, 1), Err(Error::Pairing(_))));
    }
}
