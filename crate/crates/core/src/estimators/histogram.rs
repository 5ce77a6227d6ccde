//! Weighted 1D and 2D histograms with per-bin block errors.

use serde::{Deserialize, Serialize};

use super::accumulator::WeightedAccumulator;
use crate::error::{Error, Result};
use crate::model::SignedLog;

/// Histograms keep between this many and twice as many blocks.
pub const HISTOGRAM_BLOCKS: usize = 64;

/// Uniform binning of `[min, max)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, bins: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) || bins == 0 {
            return Err(Error::validation(format!(
                "histogram axis needs min < max and at least one bin, got [{min}, {max}) with {bins} bins"
            )));
        }
        Ok(Axis { min, max, bins })
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.width()
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        (self.min + i as f64 * w, self.min + (i + 1) as f64 * w)
    }

    /// Bin index, or `None` outside the range.
    #[inline]
    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.min && x < self.max) {
            return None;
        }
        let i = ((x - self.min) / self.width()) as usize;
        Some(i.min(self.bins - 1))
    }
}

/// Normalized histogram read-out. Values are densities; 2D grids are stored
/// row-major with `y` varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub x: Axis,
    pub y: Option<Axis>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Per-bin effective sample count (hits scaled by the Kish factor).
    pub effective_samples: Vec<f64>,
    /// Weighted mass that fell outside the grid, as a fraction of the total.
    pub overflow: f64,
    pub samples: u64,
}

impl HistogramGrid {
    pub fn num_bins(&self) -> usize {
        self.x.bins * self.y.map_or(1, |a| a.bins)
    }

    pub fn bin_volume(&self) -> f64 {
        self.x.width() * self.y.map_or(1.0, |a| a.width())
    }

    /// Integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_volume()
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        let ny = self.y.map_or(1, |a| a.bins);
        self.values[ix * ny + iy]
    }

    pub fn error_at(&self, ix: usize, iy: usize) -> f64 {
        let ny = self.y.map_or(1, |a| a.bins);
        self.errors[ix * ny + iy]
    }

    /// `a·self + b·other` on identical grids, errors added in quadrature
    /// (the two grids are assumed statistically independent).
    pub fn combine(&self, a: f64, other: &HistogramGrid, b: f64) -> Result<HistogramGrid> {
        if self.x != other.x || self.y != other.y {
            return Err(Error::validation("combined histograms must share their grid"));
        }
        let values = self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect();
        let errors = self
            .errors
            .iter()
            .zip(&other.errors)
            .map(|(u, v)| (a * a * u * u + b * b * v * v).sqrt())
            .collect();
        let effective_samples = self
            .effective_samples
            .iter()
            .zip(&other.effective_samples)
            .map(|(u, v)| u.min(*v))
            .collect();
        Ok(HistogramGrid {
            x: self.x,
            y: self.y,
            values,
            errors,
            effective_samples,
            overflow: a * self.overflow + b * other.overflow,
            samples: self.samples + other.samples,
        })
    }
}

/// Streaming builder behind [`HistogramGrid`]. Each sample distributes a
/// fixed total mass over bins; the overflow slot is the last observable.
#[derive(Clone, Debug)]
pub struct HistogramAccumulator {
    x: Axis,
    y: Option<Axis>,
    acc: WeightedAccumulator,
    hits: Vec<f64>,
    mass_per_sample: f64,
    entries: Vec<(usize, f64)>,
}

impl HistogramAccumulator {
    pub fn new(x: Axis, y: Option<Axis>, mass_per_sample: f64) -> Self {
        let n = x.bins * y.map_or(1, |a| a.bins);
        HistogramAccumulator {
            x,
            y,
            acc: WeightedAccumulator::new(n + 1, HISTOGRAM_BLOCKS),
            hits: vec![0.0; n + 1],
            mass_per_sample,
            entries: Vec::new(),
        }
    }

    fn overflow_slot(&self) -> usize {
        self.hits.len() - 1
    }

    /// Slot of a 1D value.
    #[inline]
    pub fn slot_1d(&self, v: f64) -> usize {
        self.x.index(v).unwrap_or(self.overflow_slot())
    }

    /// Slot of a 2D point.
    #[inline]
    pub fn slot_2d(&self, vx: f64, vy: f64) -> usize {
        let y = self.y.expect("2D histogram");
        match (self.x.index(vx), y.index(vy)) {
            (Some(i), Some(j)) => i * y.bins + j,
            _ => self.overflow_slot(),
        }
    }

    /// Adds one sample whose mass is spread over `entries` (slot, mass).
    pub fn push(&mut self, weight: SignedLog, base_ln: f64, entries: &[(usize, f64)]) {
        for &(k, m) in entries {
            self.hits[k] += m / self.mass_per_sample;
        }
        self.acc.push_sparse(weight, base_ln, entries);
    }

    /// Like [`push`](Self::push) with a builder-owned scratch buffer.
    pub fn push_with<F: FnMut(&Self, &mut Vec<(usize, f64)>)>(&mut self, weight: SignedLog, base_ln: f64, mut fill: F) {
        let mut buf = std::mem::take(&mut self.entries);
        buf.clear();
        fill(self, &mut buf);
        self.push(weight, base_ln, &buf);
        self.entries = buf;
    }

    pub fn merge(&mut self, other: &HistogramAccumulator) -> Result<()> {
        if self.x != other.x || self.y != other.y {
            return Err(Error::validation("merged histograms must share their grid"));
        }
        self.acc.merge(&other.acc);
        for (h, o) in self.hits.iter_mut().zip(&other.hits) {
            *h += o;
        }
        Ok(())
    }

    pub fn accumulator(&self) -> &WeightedAccumulator {
        &self.acc
    }

    pub fn finish(&self) -> HistogramGrid {
        let n = self.hits.len() - 1;
        let vol = self.x.width() * self.y.map_or(1.0, |a| a.width());
        let scale = 1.0 / vol;
        let kish = if self.acc.count() > 0 {
            self.acc.effective_samples() / self.acc.count() as f64
        } else {
            0.0
        };
        let mut values = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        for k in 0..n {
            let m = self.acc.mean_fixed_blocks(k);
            values.push(m.value * scale);
            errors.push(m.stderr * scale);
        }
        let total = self.acc.total_weight();
        let overflow = if total != 0.0 {
            self.acc.total(n) / (total * self.mass_per_sample)
        } else {
            f64::NAN
        };
        HistogramGrid {
            x: self.x,
            y: self.y,
            values,
            errors,
            effective_samples: self.hits[..n].iter().map(|h| h * kish).collect(),
            overflow,
            samples: self.acc.count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_indexing() {
        let a = Axis::new(0.0, 1.0, 10).unwrap();
        assert_eq!(a.index(0.0), Some(0));
        assert_eq!(a.index(0.95), Some(9));
        assert_eq!(a.index(1.0), None);
        assert_eq!(a.index(-1e-12), None);
        assert_eq!(a.index(f64::NAN), None);
        assert!((a.center(3) - 0.35).abs() < 1e-15);
        assert!(Axis::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn uniform_stream_is_flat_within_binomial_errors() {
        let x = Axis::new(0.0, 1.0, 20).unwrap();
        let mut h = HistogramAccumulator::new(x, None, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        for _ in 0..n {
            let v: f64 = rng.random();
            let slot = h.slot_1d(v);
            h.push(SignedLog::ONE, 0.0, &[(slot, 1.0)]);
        }
        let g = h.finish();
        assert!((g.integral() - 1.0).abs() < 1e-12);
        let p = 1.0 / 20.0;
        let binom = (p * (1.0 - p) / n as f64).sqrt() / x.width();
        for (v, e) in g.values.iter().zip(&g.errors) {
            assert!((v - 1.0).abs() < 4.0 * binom, "{v}");
            assert!((e / binom - 1.0).abs() < 0.5, "{e} vs {binom}");
        }
        assert_eq!(g.overflow, 0.0);
    }

    #[test]
    fn overflow_is_tracked() {
        let x = Axis::new(0.0, 1.0, 4).unwrap();
        let mut h = HistogramAccumulator::new(x, None, 1.0);
        for v in [0.1, 0.2, 5.0, -1.0] {
            let s = h.slot_1d(v);
            h.push(SignedLog::ONE, 0.0, &[(s, 1.0)]);
        }
        let g = h.finish();
        assert!((g.overflow - 0.5).abs() < 1e-15);
        assert!((g.integral() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_slots_and_combine() {
        let a = Axis::new(-1.0, 1.0, 2).unwrap();
        let mut h = HistogramAccumulator::new(a, Some(a), 2.0);
        let s1 = h.slot_2d(-0.5, 0.5);
        let s2 = h.slot_2d(0.5, -0.5);
        assert_eq!((s1, s2), (1, 2));
        for _ in 0..10 {
            h.push(SignedLog::ONE, 0.0, &[(s1, 1.0), (s2, 1.0)]);
        }
        let g = h.finish();
        assert!((g.integral() - 2.0).abs() < 1e-12);
        assert!((g.value_at(0, 1) - 1.0).abs() < 1e-12);
        let d = g.combine(1.0, &g, -0.5).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
    }
}
