//! Two identical particles in an isotropic harmonic well: partition
//! functions, energies and pair-distance distributions, both for the exact
//! quantum problem and for its `P`-bead primitive discretization.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::model::SymmetryChannel;

/// Partition functions and energies of the two-particle harmonic problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPartition {
    /// Single-particle `Z₁(β)`.
    pub z1: f64,
    /// Single-particle `Z₁(2β)`.
    pub z1_double: f64,
    pub z_boson: f64,
    pub z_fermion: f64,
    pub ln_z_boson: f64,
    pub ln_z_fermion: f64,
    pub ln_z_distinguishable: f64,
    pub e_boson: f64,
    pub e_fermion: f64,
    pub e_distinguishable: f64,
    /// `Z_O/Z_oo = Z₁(2β)/Z₁(β)²`.
    pub connected_ratio: f64,
}

fn check(beta: f64, hbar_omega: f64, n_d: usize) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite() && hbar_omega > 0.0 && hbar_omega.is_finite()) {
        return Err(Error::validation("need beta > 0 and hbar_omega > 0"));
    }
    if !(1..=3).contains(&n_d) {
        return Err(Error::validation(format!("dimension must be 1, 2 or 3, got {n_d}")));
    }
    Ok(())
}

/// Evaluates everything at an effective reduced frequency `u` (which is
/// `βħω` in the continuum) with `du/dβ` supplied for the energies.
fn partition_at(u: f64, du_dbeta: f64, n_d: usize) -> HarmonicPartition {
    let n = n_d as f64;
    let x = (-u).exp();
    // q = tanh(u/2) = (1 − x)/(1 + x), which rounds to 1 at low temperature
    let ln_q = (-x).ln_1p() - x.ln_1p();
    let qn = (n * ln_q).exp();
    let one_minus_qn = -(n * ln_q).exp_m1();
    let one_minus_x = -(-u).exp_m1();

    let ln_z1 = -n * (2.0 * (0.5 * u).sinh()).ln();
    let ln_z1_double = -n * (2.0 * u.sinh()).ln();
    let ln_dist = 2.0 * ln_z1;
    let ln_b = ln_dist + qn.ln_1p() - std::f64::consts::LN_2;
    let ln_f = ln_dist + one_minus_qn.ln() - std::f64::consts::LN_2;

    // −d ln Z/du
    let base = n + 2.0 * n * x / one_minus_x;
    let exch = 2.0 * n * x * (ln_q * (n - 1.0)).exp() / ((1.0 + x) * (1.0 + x));
    let e_dist = base * du_dbeta;
    let e_b = (base - exch / (1.0 + qn)) * du_dbeta;
    let e_f = (base + exch / one_minus_qn) * du_dbeta;

    HarmonicPartition {
        z1: ln_z1.exp(),
        z1_double: ln_z1_double.exp(),
        z_boson: ln_b.exp(),
        z_fermion: ln_f.exp(),
        ln_z_boson: ln_b,
        ln_z_fermion: ln_f,
        ln_z_distinguishable: ln_dist,
        e_boson: e_b,
        e_fermion: e_f,
        e_distinguishable: e_dist,
        connected_ratio: qn,
    }
}

/// Exact quantum results: `Z₁(β) = (2 sinh(βħω/2))^{−n_d}`,
/// `Z_{B/F} = (Z₁(β)² ± Z₁(2β))/2`, energies `−∂ ln Z/∂β`.
pub fn harmonic_partition(beta: f64, hbar_omega: f64, n_d: usize) -> Result<HarmonicPartition> {
    check(beta, hbar_omega, n_d)?;
    Ok(partition_at(beta * hbar_omega, hbar_omega, n_d))
}

/// Reduced frequency `Pθ` of the `P`-bead discretization, `cosh θ = 1 + (βħω/P)²/2`,
/// and its β-derivative.
fn discrete_frequency(beta: f64, hbar_omega: f64, num_beads: usize) -> (f64, f64) {
    let p = num_beads as f64;
    let eps = beta * hbar_omega / p;
    let theta = (1.0 + 0.5 * eps * eps).acosh();
    let dtheta = beta * hbar_omega * hbar_omega / (p * p) / theta.sinh();
    (p * theta, p * dtheta)
}

/// Exact results for the primitive `P`-bead path integral (what the
/// sampler converges to at finite `P`).
pub fn harmonic_partition_discrete(
    beta: f64,
    hbar_omega: f64,
    n_d: usize,
    num_beads: usize,
) -> Result<HarmonicPartition> {
    check(beta, hbar_omega, n_d)?;
    if num_beads < 2 {
        return Err(Error::validation("need at least two beads"));
    }
    let (u, du) = discrete_frequency(beta, hbar_omega, num_beads);
    Ok(partition_at(u, du, n_d))
}

/// Pair-distance law as a two-component chi mixture:
/// `p_I(r) = [χ(r; σ_d) ± ρ χ(r; σ_x)]/(1 ± ρ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPairDistribution {
    pub n_d: usize,
    /// Per-component standard deviation of `r₁ − r₂` without exchange.
    pub sigma_direct: f64,
    /// Per-component standard deviation of `r₁ − r₂` on the exchange path.
    pub sigma_exchange: f64,
    /// `Z_O/Z_oo`.
    pub ratio: f64,
}

/// Continuum pair distribution, lengths in units where `ħ/(mω)` is given.
/// `σ_d² = (ħ/mω) coth(βħω/2)`, `σ_x² = (ħ/mω) tanh(βħω/2)`.
pub fn harmonic_pair_distribution(
    beta: f64,
    hbar_omega: f64,
    n_d: usize,
    length2: f64,
) -> Result<HarmonicPairDistribution> {
    check(beta, hbar_omega, n_d)?;
    let t = (0.5 * beta * hbar_omega).tanh();
    Ok(HarmonicPairDistribution {
        n_d,
        sigma_direct: (length2 / t).sqrt(),
        sigma_exchange: (length2 * t).sqrt(),
        ratio: t.powi(n_d as i32),
    })
}

/// Mean of `1/(c + 4 sin²(πk/n))` over the `n` circulant modes.
fn circulant_mean_inverse(c: f64, n: usize, only_odd: bool) -> f64 {
    let mut sum = 0.0;
    for k in 0..n {
        if only_odd && k % 2 == 0 {
            continue;
        }
        let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
        sum += 1.0 / (c + 4.0 * s * s);
    }
    sum / n as f64
}

/// Discretized pair distribution seen at a single bead index of the
/// `P`-bead sampler. Bead variances come from the circulant spectra of the
/// two `P`-rings and of the joint `2P`-ring.
pub fn harmonic_pair_distribution_discrete(
    beta: f64,
    hbar_omega: f64,
    n_d: usize,
    length2: f64,
    num_beads: usize,
) -> Result<HarmonicPairDistribution> {
    check(beta, hbar_omega, n_d)?;
    let p = num_beads as f64;
    let eps = beta * hbar_omega / p;
    let c = eps * eps;
    // bead action ½ K xᵀ(A + ε²)x with K = mP/(βħ²) = 1/(ε · ħ/(mω))
    let inv_k = eps * length2;
    let var_direct = 2.0 * inv_k * circulant_mean_inverse(c, num_beads, false);
    // beads i and i+P are antipodal on the 2P ring, so only odd modes contribute
    let var_exchange = 2.0 * inv_k * 2.0 * circulant_mean_inverse(c, 2 * num_beads, true);
    let (u, _) = discrete_frequency(beta, hbar_omega, num_beads);
    Ok(HarmonicPairDistribution {
        n_d,
        sigma_direct: var_direct.sqrt(),
        sigma_exchange: var_exchange.sqrt(),
        ratio: (0.5 * u).tanh().powi(n_d as i32),
    })
}

/// Chi density of `|v|` for an `n`-dimensional isotropic Gaussian `v`.
fn chi_pdf(r: f64, sigma: f64, n: usize) -> f64 {
    if r < 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let ln = (nf - 1.0) * r.ln() - r * r / (2.0 * sigma * sigma)
        - ((0.5 * nf - 1.0) * std::f64::consts::LN_2 + ln_gamma(0.5 * nf) + nf * sigma.ln());
    if r == 0.0 {
        return if n == 1 { (2.0 / std::f64::consts::PI).sqrt() / sigma } else { 0.0 };
    }
    ln.exp()
}

fn chi_cdf(r: f64, sigma: f64, n: usize) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    gamma_lr(0.5 * n as f64, r * r / (2.0 * sigma * sigma))
}

impl HarmonicPairDistribution {
    fn sign(channel: SymmetryChannel) -> f64 {
        channel.exchange_sign().unwrap_or(0.0)
    }

    /// Density of the pair distance at `r`.
    pub fn pdf(&self, r: f64, channel: SymmetryChannel) -> f64 {
        let s = Self::sign(channel);
        (chi_pdf(r, self.sigma_direct, self.n_d) + s * self.ratio * chi_pdf(r, self.sigma_exchange, self.n_d))
            / (1.0 + s * self.ratio)
    }

    /// Probability that the pair distance is below `r`.
    pub fn cdf(&self, r: f64, channel: SymmetryChannel) -> f64 {
        let s = Self::sign(channel);
        (chi_cdf(r, self.sigma_direct, self.n_d) + s * self.ratio * chi_cdf(r, self.sigma_exchange, self.n_d))
            / (1.0 + s * self.ratio)
    }

    /// Mean density over `[r0, r1)`, directly comparable with a histogram bin.
    pub fn bin_average(&self, r0: f64, r1: f64, channel: SymmetryChannel) -> f64 {
        (self.cdf(r1, channel) - self.cdf(r0, channel)) / (r1 - r0)
    }

    /// Densities on a grid of distances.
    pub fn curve(&self, r_grid: &[f64], channel: SymmetryChannel) -> Vec<f64> {
        r_grid.iter().map(|&r| self.pdf(r, channel)).collect()
    }

    /// `⟨r⟩` for the channel.
    pub fn mean_distance(&self, channel: SymmetryChannel) -> f64 {
        let n = self.n_d as f64;
        let m = (ln_gamma(0.5 * (n + 1.0)) - ln_gamma(0.5 * n)).exp() * std::f64::consts::SQRT_2;
        let s = Self::sign(channel);
        m * (self.sigma_direct + s * self.ratio * self.sigma_exchange) / (1.0 + s * self.ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values_at_three() {
        let h = harmonic_partition(3.0, 1.0, 1).unwrap();
        let r = (2.0 * 1.5f64.sinh()).powi(2) / (2.0 * 3.0f64.sinh());
        assert!((h.connected_ratio - r).abs() < 1e-14);
        assert!((h.connected_ratio - 0.905148).abs() < 1e-6);
        let h3 = harmonic_partition(3.0, 1.0, 3).unwrap();
        assert!((h3.connected_ratio - r.powi(3)).abs() < 1e-14);
        assert!((h.z1 - 1.0 / (2.0 * 1.5f64.sinh())).abs() < 1e-15);
        assert!((h.z_boson - 0.5 * (h.z1 * h.z1 + h.z1_double)).abs() < 1e-15);
        assert!((h.z_fermion - 0.5 * (h.z1 * h.z1 - h.z1_double)).abs() < 1e-15);
    }

    #[test]
    fn zero_temperature_limits() {
        let h = harmonic_partition(60.0, 1.0, 3).unwrap();
        assert!((h.e_boson - 3.0).abs() < 1e-9);
        assert!((h.e_fermion - 4.0).abs() < 1e-9);
        assert!((h.e_distinguishable - 3.0).abs() < 1e-9);
        let h = harmonic_partition(60.0, 1.0, 1).unwrap();
        assert!((h.e_fermion - 2.0).abs() < 1e-9);
    }

    #[test]
    fn classical_limit_is_equipartition() {
        for n in 1..=3 {
            let beta = 1e-4;
            let h = harmonic_partition(beta, 1.0, n).unwrap();
            let classical = 2.0 * n as f64 / beta;
            assert!((h.e_distinguishable / classical - 1.0).abs() < 1e-7);
            assert!((h.e_boson / classical - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn energies_are_log_derivatives() {
        for n in 1..=3 {
            for beta in [0.3, 1.0, 3.0, 7.0] {
                let h = 1e-5 * beta;
                let hp = harmonic_partition(beta + h, 1.3, n).unwrap();
                let hm = harmonic_partition(beta - h, 1.3, n).unwrap();
                let c = harmonic_partition(beta, 1.3, n).unwrap();
                let fd = |a: f64, b: f64| -(a - b) / (2.0 * h);
                assert!((fd(hp.ln_z_boson, hm.ln_z_boson) / c.e_boson - 1.0).abs() < 1e-8);
                assert!((fd(hp.ln_z_fermion, hm.ln_z_fermion) / c.e_fermion - 1.0).abs() < 1e-8);
                assert!((fd(hp.ln_z_distinguishable, hm.ln_z_distinguishable) / c.e_distinguishable - 1.0).abs() < 1e-8);

                let dp = harmonic_partition_discrete(beta + h, 1.3, n, 7).unwrap();
                let dm = harmonic_partition_discrete(beta - h, 1.3, n, 7).unwrap();
                let d = harmonic_partition_discrete(beta, 1.3, n, 7).unwrap();
                assert!((fd(dp.ln_z_fermion, dm.ln_z_fermion) / d.e_fermion - 1.0).abs() < 1e-8);
                assert!((fd(dp.ln_z_boson, dm.ln_z_boson) / d.e_boson - 1.0).abs() < 1e-8);
            }
        }
    }

    /// The discretized partition function equals the product over ring
    /// normal modes, `Π_k (4 sin²(πk/P) + ε²)^{−1/2}`.
    #[test]
    fn discrete_matches_normal_mode_product() {
        let (beta, p) = (3.0, 10usize);
        let eps = beta / p as f64;
        let ln_prod = |n: usize| {
            (0..n)
                .map(|k| {
                    let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
                    -0.5 * (4.0 * s * s + eps * eps).ln()
                })
                .sum::<f64>()
        };
        let d = harmonic_partition_discrete(beta, 1.0, 1, p).unwrap();
        assert!((d.z1.ln() - ln_prod(p)).abs() < 1e-12);
        assert!((d.z1_double.ln() - ln_prod(2 * p)).abs() < 1e-12);
    }

    #[test]
    fn discrete_converges_to_continuum() {
        let c = harmonic_partition(3.0, 1.0, 3).unwrap();
        let d = harmonic_partition_discrete(3.0, 1.0, 3, 4000).unwrap();
        assert!((c.e_fermion - d.e_fermion).abs() < 1e-5);
        assert!((c.connected_ratio - d.connected_ratio).abs() < 1e-6);
        let dp = harmonic_pair_distribution_discrete(3.0, 1.0, 3, 1.0, 4000).unwrap();
        let cp = harmonic_pair_distribution(3.0, 1.0, 3, 1.0).unwrap();
        assert!((dp.sigma_direct - cp.sigma_direct).abs() < 1e-5);
        assert!((dp.sigma_exchange - cp.sigma_exchange).abs() < 1e-5);
    }

    #[test]
    fn pair_distribution_properties() {
        let g = harmonic_pair_distribution(3.0, 1.0, 3, 1.0).unwrap();
        assert_eq!(g.pdf(0.0, SymmetryChannel::Fermion), 0.0);
        // in 1D the chi density is finite at zero: boson exceeds distinguishable
        let g1 = harmonic_pair_distribution(3.0, 1.0, 1, 1.0).unwrap();
        assert!(g1.pdf(0.0, SymmetryChannel::Boson) > g1.pdf(0.0, SymmetryChannel::Distinguishable));
        assert!(g1.pdf(0.0, SymmetryChannel::Fermion).abs() < 1e-15);
        assert!(g.pdf(0.05, SymmetryChannel::Boson) > g.pdf(0.05, SymmetryChannel::Distinguishable));
        for ch in [SymmetryChannel::Boson, SymmetryChannel::Fermion, SymmetryChannel::Distinguishable] {
            assert!((g.cdf(1e3, ch) - 1.0).abs() < 1e-14);
            // trapezoid integral of the pdf
            let n = 20000;
            let h = 12.0 / n as f64;
            let integral: f64 = (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * g.pdf(i as f64 * h, ch)
                })
                .sum::<f64>()
                * h;
            assert!((integral - 1.0).abs() < 1e-7);
            let mean: f64 = (0..=n).map(|i| i as f64 * h * g.pdf(i as f64 * h, ch)).sum::<f64>() * h;
            assert!((mean - g.mean_distance(ch)).abs() < 1e-6);
        }
        // high temperature: exchange fades
        let hot = harmonic_pair_distribution(1e-3, 1.0, 3, 1.0).unwrap();
        for r in [0.5, 20.0, 60.0] {
            let d = hot.pdf(r, SymmetryChannel::Distinguishable);
            assert!((hot.pdf(r, SymmetryChannel::Fermion) - d).abs() <= 1e-8 * d.max(1e-300));
        }
    }

    #[test]
    fn discrete_pair_variance_from_sampling_identity() {
        // P = 2, n_d = 1: the two-bead ring has covariance (A + ε²)^{-1}/K
        let (beta, p) = (2.0, 2usize);
        let eps: f64 = beta / p as f64;
        let inv_k = eps;
        // a 2-ring links its beads twice, so A = [[2, −2], [−2, 2]]
        let a = [[2.0 + eps * eps, -2.0], [-2.0, 2.0 + eps * eps]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let var_bead = inv_k * a[1][1] / det;
        let g = harmonic_pair_distribution_discrete(beta, 1.0, 1, 1.0, p).unwrap();
        assert!((g.sigma_direct.powi(2) - 2.0 * var_bead).abs() < 1e-14);
    }
}
