//! Bennett acceptance ratio between the distinguishable and connected
//! ensembles, and the free-energy route to the fermion energy.

use serde::{Deserialize, Serialize};

use super::accumulator::{RatioEstimate, WeightedAccumulator};
use super::{Reweight, DEFAULT_MAX_BLOCKS};
use crate::error::{Error, Result};
use crate::model::{ln_1p_exp, SignedLog};
use crate::sampler::TrajectorySample;

const C_RANGE: f64 = 200.0;
const C_TOLERANCE: f64 = 1e-10;
/// Fermi averages below this on both legs mean the ensembles do not overlap.
pub const OVERLAP_FLOOR: f64 = 1e-12;

/// Fermi function `1/(1 + e^x)`, evaluated without overflow.
#[inline]
pub fn fermi(x: f64) -> f64 {
    (-ln_1p_exp(x)).exp()
}

/// The `s` values of one leg with optional log reweighting factors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BennettLeg {
    pub s: Vec<f64>,
    pub log_weights: Option<Vec<f64>>,
}

impl BennettLeg {
    pub fn unweighted(s: Vec<f64>) -> Self {
        BennettLeg { s, log_weights: None }
    }

    pub fn from_samples<'a, I>(samples: I, reweight: Reweight) -> Self
    where
        I: IntoIterator<Item = &'a TrajectorySample>,
    {
        let mut s = Vec::new();
        let mut lw = Vec::new();
        for x in samples {
            s.push(x.s);
            lw.push(reweight.log_factor(x));
        }
        BennettLeg {
            s,
            log_weights: reweight.static_bias.then_some(lw),
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Normalized linear weights (uniform when unweighted).
    fn normalized_weights(&self) -> Vec<f64> {
        match &self.log_weights {
            None => vec![1.0 / self.s.len() as f64; self.s.len()],
            Some(lw) => {
                let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|v| v / z).collect()
            }
        }
    }

    /// Kish effective sample size.
    pub fn effective_samples(&self) -> f64 {
        match &self.log_weights {
            None => self.s.len() as f64,
            Some(_) => {
                let w = self.normalized_weights();
                1.0 / w.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    /// Weighted mean of `f(sign·(βs + C))` with a blocking error.
    fn fermi_mean(&self, beta: f64, c: f64, sign: f64) -> RatioEstimate {
        let mut acc = WeightedAccumulator::new(1, DEFAULT_MAX_BLOCKS);
        for (i, &s) in self.s.iter().enumerate() {
            let lw = self.log_weights.as_ref().map_or(0.0, |l| l[i]);
            acc.push(SignedLog::from_ln(1.0, lw), lw, &[fermi(sign * (beta * s + c))]);
        }
        acc.mean(0)
    }
}

/// Outcome of a Bennett estimate of `Z_O / Z_oo`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BennettResult {
    pub ratio: f64,
    pub stderr: f64,
    pub c_star: f64,
    /// `⟨f(βs + C*)⟩` over the distinguishable leg.
    pub fermi_oo: f64,
    /// `⟨f(−βs − C*)⟩` over the connected leg.
    pub fermi_connected: f64,
    /// `(C, ratio, stderr)` at offsets from `C*`.
    pub plateau: Vec<(f64, f64, f64)>,
    /// Whether the ratio stays within one standard error over `C* ± 1`.
    pub plateau_ok: bool,
    pub effective_oo: f64,
    pub effective_connected: f64,
}

/// Ratio estimate at a fixed shift `C`: `(ratio, stderr, ⟨f⟩_oo, ⟨f⟩_O)`.
pub fn bennett_ratio_at(
    oo: &BennettLeg,
    connected: &BennettLeg,
    beta: f64,
    c: f64,
) -> Result<(f64, f64, f64, f64)> {
    if oo.is_empty() || connected.is_empty() {
        return Err(Error::validation("both Bennett legs need samples"));
    }
    let a = oo.fermi_mean(beta, c, 1.0);
    let b = connected.fermi_mean(beta, c, -1.0);
    if a.value < OVERLAP_FLOOR && b.value < OVERLAP_FLOOR {
        return Err(Error::NoOverlap {
            oo_mean: a.value,
            connected_mean: b.value,
        });
    }
    let ratio = a.value / b.value * c.exp();
    let rel = ((a.stderr / a.value).powi(2) + (b.stderr / b.value).powi(2)).sqrt();
    Ok((ratio, ratio * rel, a.value, b.value))
}

/// Self-consistent shift: root of `n_oo⟨f(βs+C)⟩_oo − n_O⟨f(−βs−C)⟩_O`.
pub fn bennett_shift(oo: &BennettLeg, connected: &BennettLeg, beta: f64) -> f64 {
    let (wa, wb) = (oo.normalized_weights(), connected.normalized_weights());
    let (na, nb) = (oo.effective_samples(), connected.effective_samples());
    let balance = |c: f64| {
        let fa: f64 = oo.s.iter().zip(&wa).map(|(s, w)| w * fermi(beta * s + c)).sum();
        let fb: f64 = connected.s.iter().zip(&wb).map(|(s, w)| w * fermi(-beta * s - c)).sum();
        na * fa - nb * fb
    };
    let (mut lo, mut hi) = (-C_RANGE, C_RANGE);
    if balance(lo) <= 0.0 {
        return lo;
    }
    if balance(hi) >= 0.0 {
        return hi;
    }
    while hi - lo > C_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bennett estimate of `Z_O/Z_oo` at the self-consistent shift with a
/// plateau scan over `C* ± 1`.
pub fn bennett_ratio(oo: &BennettLeg, connected: &BennettLeg, beta: f64) -> Result<BennettResult> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::validation("beta must be positive"));
    }
    if oo.is_empty() || connected.is_empty() {
        return Err(Error::validation("both Bennett legs need samples"));
    }
    let c_star = bennett_shift(oo, connected, beta);
    let (ratio, stderr, fa, fb) = bennett_ratio_at(oo, connected, beta, c_star)?;
    let mut plateau = Vec::new();
    let mut plateau_ok = true;
    for off in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let c = c_star + off;
        let (r, e, _, _) = bennett_ratio_at(oo, connected, beta, c)?;
        if (r - ratio).abs() >= stderr && off != 0.0 {
            plateau_ok = false;
        }
        plateau.push((c, r, e));
    }
    Ok(BennettResult {
        ratio,
        stderr,
        c_star,
        fermi_oo: fa,
        fermi_connected: fb,
        plateau,
        plateau_ok,
        effective_oo: oo.effective_samples(),
        effective_connected: connected.effective_samples(),
    })
}

/// `E_F = E_B − (1/β) ln[(1 − R)/(1 + R)]` with `R = Z_O/Z_oo`.
pub fn fermion_energy_via_free_energy(e_boson: f64, ratio: f64, beta: f64) -> Result<f64> {
    if ratio >= 1.0 {
        return Err(Error::NonPositiveFermion { ratio });
    }
    if !(ratio >= 0.0) {
        return Err(Error::validation(format!("partition-function ratio must be non-negative, got {ratio}")));
    }
    Ok(e_boson - ((-ratio).ln_1p() - ratio.ln_1p()) / beta)
}

/// As [`fermion_energy_via_free_energy`] with first-order error propagation
/// from independent errors on `E_B` and `R`.
pub fn fermion_energy_with_error(
    e_boson: f64,
    e_boson_err: f64,
    ratio: f64,
    ratio_err: f64,
    beta: f64,
) -> Result<(f64, f64)> {
    let e = fermion_energy_via_free_energy(e_boson, ratio, beta)?;
    let d = 2.0 / (beta * (1.0 - ratio * ratio));
    Ok((e, (e_boson_err.powi(2) + (d * ratio_err).powi(2)).sqrt()))
}
