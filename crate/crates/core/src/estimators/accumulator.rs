//! Streaming weighted sums with block-jackknife errors.
//!
//! Weights arrive as sign/log pairs and are stored relative to a running
//! log reference, so weights spanning hundreds of e-folds add without
//! overflow. Blocks double in length whenever their number reaches twice
//! the configured maximum.

use crate::model::SignedLog;

/// Rescale stored sums once a weight exceeds the reference by this many e-folds.
const RESCALE_MARGIN: f64 = 30.0;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    fn scale(&mut self, f: f64) {
        self.sum *= f;
        self.comp *= f;
    }

    fn absorb(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }
}

/// Weighted sums of several observables plus two weight channels: the full
/// weight (denominator of every ratio) and the base weight (the reweighting
/// factor alone, used to normalize the mean of the full weight).
#[derive(Clone, Debug)]
pub struct WeightedAccumulator {
    n_obs: usize,
    max_blocks: usize,
    block_len: u64,
    ln_ref: f64,
    count: u64,
    block_counts: Vec<u64>,
    block_den: Vec<f64>,
    block_base: Vec<f64>,
    block_num: Vec<f64>,
    tot_den: CompensatedSum,
    tot_base: CompensatedSum,
    tot_num: Vec<CompensatedSum>,
    sum_abs: f64,
    sum_sq: f64,
}

/// Ratio estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl WeightedAccumulator {
    pub fn new(n_obs: usize, max_blocks: usize) -> Self {
        assert!(max_blocks >= 2, "need at least two blocks");
        WeightedAccumulator {
            n_obs,
            max_blocks,
            block_len: 1,
            ln_ref: f64::NEG_INFINITY,
            count: 0,
            block_counts: Vec::new(),
            block_den: Vec::new(),
            block_base: Vec::new(),
            block_num: Vec::new(),
            tot_den: CompensatedSum::default(),
            tot_base: CompensatedSum::default(),
            tot_num: vec![CompensatedSum::default(); n_obs],
            sum_abs: 0.0,
            sum_sq: 0.0,
        }
    }

    pub fn num_observables(&self) -> usize {
        self.n_obs
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn num_blocks(&self) -> usize {
        self.block_counts.len()
    }

    pub fn block_len(&self) -> u64 {
        self.block_len
    }

    /// Log reference against which all stored sums are scaled.
    pub fn ln_reference(&self) -> f64 {
        self.ln_ref
    }

    /// Kish effective sample size of the full weights.
    pub fn effective_samples(&self) -> f64 {
        if self.sum_sq > 0.0 {
            self.sum_abs * self.sum_abs / self.sum_sq
        } else {
            0.0
        }
    }

    /// Mean sign of the full weight, `Σw / Σ|w|`.
    pub fn average_sign(&self) -> f64 {
        if self.sum_abs > 0.0 {
            self.tot_den.value() / self.sum_abs
        } else {
            0.0
        }
    }

    fn rescale_to(&mut self, new_ref: f64) {
        if self.ln_ref == f64::NEG_INFINITY {
            self.ln_ref = new_ref;
            return;
        }
        let f = (self.ln_ref - new_ref).exp();
        for v in self
            .block_den
            .iter_mut()
            .chain(self.block_base.iter_mut())
            .chain(self.block_num.iter_mut())
        {
            *v *= f;
        }
        self.tot_den.scale(f);
        self.tot_base.scale(f);
        for t in &mut self.tot_num {
            t.scale(f);
        }
        self.sum_abs *= f;
        self.sum_sq *= f * f;
        self.ln_ref = new_ref;
    }

    /// Opens a new block when needed and returns its index.
    fn current_block(&mut self) -> usize {
        let full = self
            .block_counts
            .last()
            .is_none_or(|&c| c >= self.block_len);
        if full {
            if self.block_counts.len() >= 2 * self.max_blocks {
                self.coarsen();
            }
            self.block_counts.push(0);
            self.block_den.push(0.0);
            self.block_base.push(0.0);
            self.block_num.extend(std::iter::repeat_n(0.0, self.n_obs));
        }
        self.block_counts.len() - 1
    }

    /// Merges adjacent block pairs and doubles the block length.
    fn coarsen(&mut self) {
        let nb = self.block_counts.len();
        let half = nb.div_ceil(2);
        let n = self.n_obs;
        for j in 0..half {
            let (a, b) = (2 * j, 2 * j + 1);
            let mut c = self.block_counts[a];
            let mut d = self.block_den[a];
            let mut e = self.block_base[a];
            if b < nb {
                c += self.block_counts[b];
                d += self.block_den[b];
                e += self.block_base[b];
            }
            self.block_counts[j] = c;
            self.block_den[j] = d;
            self.block_base[j] = e;
            for k in 0..n {
                let mut v = self.block_num[a * n + k];
                if b < nb {
                    v += self.block_num[b * n + k];
                }
                self.block_num[j * n + k] = v;
            }
        }
        self.block_counts.truncate(half);
        self.block_den.truncate(half);
        self.block_base.truncate(half);
        self.block_num.truncate(half * n);
        self.block_len *= 2;
    }

    /// Scaled linear weights, rescaling the reference first if needed.
    fn prepare(&mut self, weight: SignedLog, base_ln: f64) -> (f64, f64) {
        let top = weight.ln_abs.max(base_ln);
        if top.is_finite() && (self.ln_ref == f64::NEG_INFINITY || top > self.ln_ref + RESCALE_MARGIN) {
            self.rescale_to(top);
        }
        let w = if weight.is_zero() {
            0.0
        } else {
            weight.sign * (weight.ln_abs - self.ln_ref).exp()
        };
        let b = if base_ln == f64::NEG_INFINITY {
            0.0
        } else {
            (base_ln - self.ln_ref).exp()
        };
        (w, b)
    }

    fn add_weights(&mut self, blk: usize, w: f64, b: f64) {
        self.count += 1;
        self.block_counts[blk] += 1;
        self.block_den[blk] += w;
        self.block_base[blk] += b;
        self.tot_den.add(w);
        self.tot_base.add(b);
        self.sum_abs += w.abs();
        self.sum_sq += w * w;
    }

    /// Adds one sample. `weight` is the full weight; `base_ln` the log of the
    /// reweighting factor alone; `obs` one value per observable.
    pub fn push(&mut self, weight: SignedLog, base_ln: f64, obs: &[f64]) {
        assert_eq!(obs.len(), self.n_obs, "observable count mismatch");
        let (w, b) = self.prepare(weight, base_ln);
        let blk = self.current_block();
        self.add_weights(blk, w, b);
        let row = &mut self.block_num[blk * self.n_obs..(blk + 1) * self.n_obs];
        for ((r, t), &o) in row.iter_mut().zip(self.tot_num.iter_mut()).zip(obs) {
            let v = w * o;
            *r += v;
            t.add(v);
        }
    }

    /// Adds one sample whose observables are zero except the listed entries.
    /// Repeated indices accumulate.
    pub fn push_sparse(&mut self, weight: SignedLog, base_ln: f64, entries: &[(usize, f64)]) {
        let (w, b) = self.prepare(weight, base_ln);
        let blk = self.current_block();
        self.add_weights(blk, w, b);
        let off = blk * self.n_obs;
        for &(k, o) in entries {
            let v = w * o;
            self.block_num[off + k] += v;
            self.tot_num[k].add(v);
        }
    }

    /// Folds `other` in as if its samples followed this stream.
    pub fn merge(&mut self, other: &WeightedAccumulator) {
        assert_eq!(self.n_obs, other.n_obs, "observable count mismatch");
        if other.count == 0 {
            return;
        }
        let mut other = other.clone();
        if self.count == 0 {
            let max_blocks = self.max_blocks;
            *self = other;
            self.max_blocks = max_blocks;
            while self.block_counts.len() >= 2 * self.max_blocks {
                self.coarsen();
            }
            return;
        }
        let target = self.ln_ref.max(other.ln_ref);
        if self.ln_ref < target {
            self.rescale_to(target);
        }
        if other.ln_ref < target {
            other.rescale_to(target);
        }
        while self.block_len < other.block_len {
            self.coarsen();
        }
        while other.block_len < self.block_len {
            other.coarsen();
        }
        self.count += other.count;
        self.block_counts.extend_from_slice(&other.block_counts);
        self.block_den.extend_from_slice(&other.block_den);
        self.block_base.extend_from_slice(&other.block_base);
        self.block_num.extend_from_slice(&other.block_num);
        self.tot_den.absorb(&other.tot_den);
        self.tot_base.absorb(&other.tot_base);
        for (t, o) in self.tot_num.iter_mut().zip(&other.tot_num) {
            t.absorb(o);
        }
        self.sum_abs += other.sum_abs;
        self.sum_sq += other.sum_sq;
        while self.block_counts.len() >= 2 * self.max_blocks {
            self.coarsen();
        }
    }

    /// Scaled total of observable `k` (multiply by `e^{ln_reference}` for the raw sum).
    pub fn total(&self, k: usize) -> f64 {
        self.tot_num[k].value()
    }

    pub fn total_weight(&self) -> f64 {
        self.tot_den.value()
    }

    pub fn total_base(&self) -> f64 {
        self.tot_base.value()
    }

    fn num_column(&self, k: usize) -> Vec<f64> {
        (0..self.num_blocks()).map(|j| self.block_num[j * self.n_obs + k]).collect()
    }

    /// `Σ w·O_k / Σ w` with a plateau-selected blocking error.
    pub fn mean(&self, k: usize) -> RatioEstimate {
        RatioEstimate {
            value: self.total(k) / self.total_weight(),
            stderr: plateau_error(&self.num_column(k), &self.block_den),
        }
    }

    /// `Σ w·O_k / Σ w` with the error taken from the current blocks directly.
    pub fn mean_fixed_blocks(&self, k: usize) -> RatioEstimate {
        RatioEstimate {
            value: self.total(k) / self.total_weight(),
            stderr: jackknife_ratio(&self.num_column(k), &self.block_den),
        }
    }

    /// Mean of the full weight relative to the base weight.
    pub fn mean_weight(&self) -> RatioEstimate {
        RatioEstimate {
            value: self.total_weight() / self.total_base(),
            stderr: plateau_error(&self.block_den, &self.block_base),
        }
    }
}

/// Leave-one-block-out jackknife error of `Σa / Σb`.
pub fn jackknife_ratio(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return f64::NAN;
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let r: Vec<f64> = a.iter().zip(b).map(|(x, y)| (sa - x) / (sb - y)).collect();
    let mean = r.iter().sum::<f64>() / n as f64;
    let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    ((n as f64 - 1.0) / n as f64 * var).sqrt()
}

fn group(v: &[f64], g: usize) -> Vec<f64> {
    v.chunks(g).map(|c| c.iter().sum()).collect()
}

/// Minimum number of blocks for a blocking level to count.
pub const MIN_PLATEAU_BLOCKS: usize = 32;

/// Jackknife errors at successive block doublings, stopping at the first
/// level whose successor grows by less than 5%; returns the larger of the
/// pair. Falls back to the coarsest level with enough blocks.
pub fn plateau_error(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 * MIN_PLATEAU_BLOCKS {
        return jackknife_ratio(a, b);
    }
    let mut prev = jackknife_ratio(a, b);
    let mut g = 2;
    while n / g >= MIN_PLATEAU_BLOCKS {
        let e = jackknife_ratio(&group(a, g), &group(b, g));
        if e < 1.05 * prev {
            return prev.max(e);
        }
        prev = e;
        g *= 2;
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lw(x: f64) -> SignedLog {
        SignedLog::from_value(x)
    }

    #[test]
    fn unit_observable_gives_exact_one() {
        let mut acc = WeightedAccumulator::new(1, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let w: f64 = rng.random_range(0.1..5.0);
            acc.push(lw(w), 0.0, &[1.0]);
        }
        let m = acc.mean(0);
        assert_eq!(m.value, 1.0);
        assert_eq!(m.stderr, 0.0);
    }

    #[test]
    fn blocks_double_when_full() {
        let mut acc = WeightedAccumulator::new(1, 4);
        for i in 0..100 {
            acc.push(SignedLog::ONE, 0.0, &[i as f64]);
        }
        assert!(acc.num_blocks() >= 4 && acc.num_blocks() <= 8);
        assert_eq!(acc.block_counts.iter().sum::<u64>(), 100);
        assert_eq!(acc.mean(0).value, 49.5);
    }

    #[test]
    fn huge_log_weights_do_not_overflow() {
        let mut acc = WeightedAccumulator::new(1, 8);
        acc.push(SignedLog::from_ln(1.0, 0.0), 0.0, &[1.0]);
        acc.push(SignedLog::from_ln(1.0, 800.0), 800.0, &[3.0]);
        acc.push(SignedLog::from_ln(1.0, 800.0), 800.0, &[5.0]);
        let m = acc.mean(0);
        assert!((m.value - 4.0).abs() < 1e-12);
        assert!((acc.mean_weight().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iid_error_matches_textbook() {
        let mut acc = WeightedAccumulator::new(1, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        for _ in 0..n {
            let x: f64 = rng.random();
            acc.push(SignedLog::ONE, 0.0, &[x]);
        }
        let m = acc.mean(0);
        let expected = (1.0 / 12.0 / n as f64).sqrt();
        assert!((m.value - 0.5).abs() < 4.0 * expected);
        assert!((m.stderr / expected - 1.0).abs() < 0.3, "{} vs {expected}", m.stderr);
    }

    #[test]
    fn correlated_error_grows_with_blocking() {
        // AR(1) with integrated autocorrelation time (1+φ)/(1−φ) = 19
        let phi = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acc = WeightedAccumulator::new(1, 512);
        let mut x = 0.0;
        let n = 400_000;
        for _ in 0..n {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            x = phi * x + z;
            acc.push(SignedLog::ONE, 0.0, &[x]);
        }
        let var = 1.0 / (1.0 - phi * phi);
        let tau = (1.0 + phi) / (1.0 - phi);
        let expected = (var * tau / n as f64).sqrt();
        let e = acc.mean(0).stderr;
        assert!((e / expected - 1.0).abs() < 0.35, "{e} vs {expected}");
    }

    #[test]
    fn sparse_and_dense_pushes_agree() {
        let mut a = WeightedAccumulator::new(3, 8);
        let mut b = WeightedAccumulator::new(3, 8);
        for i in 0..50 {
            let w = lw(1.0 + i as f64 * 0.1);
            a.push(w, 0.0, &[0.0, 2.0, 0.0]);
            b.push_sparse(w, 0.0, &[(1, 1.5), (1, 0.5)]);
        }
        for k in 0..3 {
            assert!((a.total(k) - b.total(k)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn merge_equals_concatenation(
            xs in prop::collection::vec((-3.0f64..3.0, -40.0f64..40.0, any::<bool>()), 1..300),
            cut in 0usize..300,
        ) {
            let cut = cut.min(xs.len());
            let mut whole = WeightedAccumulator::new(2, 8);
            let mut left = WeightedAccumulator::new(2, 8);
            let mut right = WeightedAccumulator::new(2, 8);
            for (i, &(o, l, neg)) in xs.iter().enumerate() {
                let w = SignedLog::from_ln(if neg { -1.0 } else { 1.0 }, l);
                whole.push(w, l, &[o, o * o]);
                if i < cut { left.push(w, l, &[o, o * o]) } else { right.push(w, l, &[o, o * o]) }
            }
            let mut merged = left.clone();
            merged.merge(&right);
            prop_assert_eq!(merged.count(), whole.count());
            let shift = (merged.ln_reference() - whole.ln_reference()).exp();
            let scale = whole.sum_abs;
            for k in 0..2 {
                let a = merged.total(k) * shift;
                let b = whole.total(k);
                let mag = scale * 9.0;
                prop_assert!((a - b).abs() <= 1e-12 * mag, "{} vs {}", a, b);
            }
            prop_assert!((merged.total_weight() * shift - whole.total_weight()).abs() <= 1e-12 * scale);

            // commutativity of the totals
            let mut swapped = right.clone();
            swapped.merge(&left);
            let shift2 = (swapped.ln_reference() - whole.ln_reference()).exp();
            prop_assert!((swapped.total(0) * shift2 - whole.total(0)).abs() <= 1e-12 * scale * 9.0);
        }
    }
}
