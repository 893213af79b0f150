use crate::error::{Error, Result};
use crate::trajectory::SampleClock;

/// N×K binary spike response matrix, bit-packed row by row.
///
/// Row `n` is the response function of cell `n`; column `k` is the
/// population vector at sample `k`. Padding bits past `K` are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    clock: SampleClock,
    labels: Vec<String>,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl SpikeRaster {
    pub fn empty(labels: Vec<String>, clock: SampleClock) -> Self {
        let words_per_row = clock.len.div_ceil(64);
        let bits = vec![0; words_per_row * labels.len()];
        Self { clock, labels, words_per_row, bits }
    }

    pub(crate) fn from_row_words(labels: Vec<String>, clock: SampleClock, rows: Vec<Vec<u64>>) -> Result<Self> {
        let words_per_row = clock.len.div_ceil(64);
        if rows.len() != labels.len() || rows.iter().any(|r| r.len() != words_per_row) {
            return Err(Error::Shape("row words do not match raster dimensions".into()));
        }
        let mut raster = Self::empty(labels, clock);
        for (n, row) in rows.into_iter().enumerate() {
            raster.bits[n * words_per_row..(n + 1) * words_per_row].copy_from_slice(&row);
        }
        raster.clear_padding();
        Ok(raster)
    }

    pub fn from_rows(labels: Vec<String>, clock: SampleClock, rows: &[Vec<bool>]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows for {} labels", rows.len(), labels.len())));
        }
        let mut raster = Self::empty(labels, clock);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != clock.len {
                return Err(Error::Shape(format!("row {n} has {} samples, clock has {}", row.len(), clock.len)));
            }
            for (k, &b) in row.iter().enumerate() {
                if b {
                    raster.set(n, k, true);
                }
            }
        }
        Ok(raster)
    }

    /// Builds a raster from per-cell spike sample indices.
    pub fn from_spike_indices(labels: Vec<String>, clock: SampleClock, spikes: &[Vec<usize>]) -> Result<Self> {
        if spikes.len() != labels.len() {
            return Err(Error::Shape(format!("{} spike lists for {} labels", spikes.len(), labels.len())));
        }
        let mut raster = Self::empty(labels, clock);
        for (n, list) in spikes.iter().enumerate() {
            for &k in list {
                if k >= clock.len {
                    return Err(Error::Shape(format!("spike at sample {k} beyond raster length {}", clock.len)));
                }
                raster.set(n, k, true);
            }
        }
        Ok(raster)
    }

    fn clear_padding(&mut self) {
        let tail = self.clock.len % 64;
        if tail == 0 {
            return;
        }
        let mask = (1u64 << tail) - 1;
        for n in 0..self.labels.len() {
            let last = (n + 1) * self.words_per_row - 1;
            self.bits[last] &= mask;
        }
    }

    pub fn n_cells(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.clock.len
    }

    pub fn is_empty(&self) -> bool {
        self.clock.len == 0 || self.labels.is_empty()
    }

    pub fn clock(&self) -> SampleClock {
        self.clock
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, n: usize, k: usize) -> bool {
        debug_assert!(k < self.clock.len);
        (self.bits[n * self.words_per_row + k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn set(&mut self, n: usize, k: usize, spike: bool) {
        assert!(n < self.n_cells() && k < self.clock.len, "raster index ({n}, {k}) out of bounds");
        let w = &mut self.bits[n * self.words_per_row + k / 64];
        if spike {
            *w |= 1 << (k % 64);
        } else {
            *w &= !(1 << (k % 64));
        }
    }

    pub fn row_words(&self, n: usize) -> &[u64] {
        &self.bits[n * self.words_per_row..(n + 1) * self.words_per_row]
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn spike_count(&self, n: usize) -> usize {
        self.row_words(n).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn total_spikes(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn spike_indices(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.spike_count(n));
        for (wi, &word) in self.row_words(n).iter().enumerate() {
            let mut w = word;
            while w != 0 {
                let b = w.trailing_zeros() as usize;
                out.push(wi * 64 + b);
                w &= w - 1;
            }
        }
        out
    }

    /// Spike times of cell `n` in seconds.
    pub fn spike_times(&self, n: usize) -> Vec<f64> {
        self.spike_indices(n).into_iter().map(|k| self.clock.time(k)).collect()
    }

    pub fn row_f64(&self, n: usize) -> Vec<f64> {
        (0..self.clock.len).map(|k| if self.get(n, k) { 1.0 } else { 0.0 }).collect()
    }

    /// Stacks rasters that share a clock, keeping row order.
    pub fn stack(parts: &[&SpikeRaster]) -> Result<SpikeRaster> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        let clock = first.clock;
        let mut labels = Vec::new();
        let mut bits = Vec::new();
        for p in parts {
            if p.clock != clock {
                return Err(Error::Shape("stacked rasters must share a sample clock".into()));
            }
            labels.extend(p.labels.iter().cloned());
            bits.extend_from_slice(&p.bits);
        }
        Ok(SpikeRaster { clock, labels, words_per_row: first.words_per_row, bits })
    }

    /// Copies rows `cells` into a new raster.
    pub fn select_cells(&self, cells: std::ops::Range<usize>) -> Result<SpikeRaster> {
        if cells.end > self.n_cells() || cells.is_empty() {
            return Err(Error::Shape(format!("cells {cells:?} outside raster of {} cells", self.n_cells())));
        }
        let w = self.words_per_row;
        Ok(SpikeRaster {
            clock: self.clock,
            labels: self.labels[cells.clone()].to_vec(),
            words_per_row: w,
            bits: self.bits[cells.start * w..cells.end * w].to_vec(),
        })
    }

    /// Copies columns `range` into a new raster.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<SpikeRaster> {
        if range.end > self.clock.len || range.is_empty() {
            return Err(Error::Shape(format!("slice {range:?} outside raster of length {}", self.clock.len)));
        }
        let clock = SampleClock::new(self.clock.dt, range.len())?;
        let mut out = SpikeRaster::empty(self.labels.clone(), clock);
        for n in 0..self.n_cells() {
            for k in self.spike_indices(n) {
                if range.contains(&k) {
                    out.set(n, k - range.start, true);
                }
            }
        }
        Ok(out)
    }
}
