//! Exact diagonalization of the two-electron quantum dot.
//!
//! The centre of mass separates as a 2D oscillator of mass `2m*`. The
//! relative motion (reduced mass `m*/2`, same frequencies) is diagonalized
//! either in a polar basis (the default, see `dot_polar`) or in a product
//! oscillator basis `n_x + n_y ≤ N`. The product basis only holds even
//! powers of `r` in the `m = 0` channel, so it converges like `1/N` at the
//! Coulomb cusp; it is kept as an independent check. Its Coulomb elements
//! use `1/sqrt(r² + a²) = (2/√π) ∫₀^∞ e^{−t²(r² + a²)} dt`, which factorizes
//! the 2D integral into 1D Gaussian-weighted overlaps evaluated exactly by
//! Gauss–Hermite quadrature; the `t` integral is done on a log grid.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::dot_polar::polar_blocks;
use super::quadrature::{composite_legendre, gauss_hermite};
use crate::error::{Error, Result};
use crate::model::SymmetryChannel;
use crate::potentials::DotParams;
use crate::units::HBAR;

/// Default starting cutoff for the convergence loop.
pub const DEFAULT_CUTOFF: usize = 30;
/// Ground-energy change (meV) accepted as converged when the cutoff doubles.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

/// Parity of a relative-motion state under `r → −r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn name(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// Two-electron spin state; selects the orbital parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinState {
    /// Symmetric orbital, even relative parity.
    Singlet,
    /// Antisymmetric orbital, odd relative parity.
    Triplet,
}

impl SpinState {
    pub fn parity(self) -> Parity {
        match self {
            SpinState::Singlet => Parity::Even,
            SpinState::Triplet => Parity::Odd,
        }
    }

    /// Singlets pair with the boson channel, triplets with the fermion one.
    pub fn from_channel(channel: SymmetryChannel) -> Option<Self> {
        match channel {
            SymmetryChannel::Boson => Some(SpinState::Singlet),
            SymmetryChannel::Fermion => Some(SpinState::Triplet),
            SymmetryChannel::Distinguishable => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpinState::Singlet => "singlet",
            SpinState::Triplet => "triplet",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Relative-motion energy in meV.
    pub energy: f64,
    pub parity: Parity,
}

/// Single-particle basis used for the relative motion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdBasis {
    /// Fourier modes in the angle times Gaussian-weighted polynomials in `r`,
    /// all states with `|m| + degree ≤ cutoff`.
    #[default]
    Polar,
    /// Oscillator product states with `n_x + n_y ≤ cutoff`.
    Cartesian,
}

impl EdBasis {
    pub fn name(self) -> &'static str {
        match self {
            EdBasis::Polar => "polar",
            EdBasis::Cartesian => "cartesian",
        }
    }
}

/// Relative-motion spectrum plus what is needed to add the centre of mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    /// Ascending in energy.
    pub levels: Vec<Level>,
    /// Confinement frequencies in 1/fs (shared by the centre of mass).
    pub omega_x: f64,
    pub omega_y: f64,
    pub basis: EdBasis,
    pub cutoff: usize,
    pub basis_size: usize,
    /// Largest ground-energy change against the previous cutoff, if any.
    pub residual: Option<f64>,
    pub dot: DotParams,
}

/// Normalized Hermite functions `ψ_0..ψ_n` at `x`.
fn hermite_functions(x: f64, n: usize, out: &mut [f64]) {
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n >= 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for k in 1..n {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// `I_{nm}(c) = ∫ ψ_n(ξ) ψ_m(ξ) e^{−c ξ²} dξ` for all `n, m ≤ n_max`.
struct GaussianOverlaps {
    n_max: usize,
    nodes: Vec<f64>,
    scaled_weights: Vec<f64>,
    psi: Vec<f64>,
}

impl GaussianOverlaps {
    fn new(n_max: usize) -> Self {
        let (nodes, _, scaled_weights) = gauss_hermite(n_max + 8);
        GaussianOverlaps {
            n_max,
            psi: vec![0.0; nodes.len() * (n_max + 1)],
            nodes,
            scaled_weights,
        }
    }

    /// Fills `out[(n_max+1)·n + m]` for `n + m` even. With `ξ = η/sqrt(1+c)`
    /// the integrand is a polynomial of degree `n + m` against `e^{−η²}`, so
    /// the rule is exact.
    fn compute(&mut self, c: f64, out: &mut [f64]) {
        let nb = self.n_max + 1;
        let scale = (1.0 + c).sqrt().recip();
        let damp = c / (1.0 + c);
        let q = self.nodes.len();
        for i in 0..q {
            let eta = self.nodes[i];
            let xi = eta * scale;
            let w = (self.scaled_weights[i] * (-eta * eta * damp).exp()).sqrt();
            let row = &mut self.psi[i * nb..(i + 1) * nb];
            hermite_functions(xi, self.n_max, row);
            // ψ_n ψ_m e^{ξ²} e^{−η²} against the scaled weights leaves e^{−η² c/(1+c)}
            for v in row.iter_mut() {
                *v *= w;
            }
        }
        for n in 0..nb {
            for m in (n..nb).step_by(2) {
                let mut s = 0.0;
                for i in 0..q {
                    s += self.psi[i * nb + n] * self.psi[i * nb + m];
                }
                let v = s * scale;
                out[n * nb + m] = v;
                out[m * nb + n] = v;
            }
        }
    }
}

/// Basis states `(n_x, n_y)` of one parity block.
fn block_states(cutoff: usize, px: usize, py: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for nx in (px..=cutoff).step_by(2) {
        for ny in (py..=cutoff - nx).step_by(2) {
            v.push((nx, ny));
        }
    }
    v
}

/// Nodes and weights of the `t` integral on a logarithmic grid.
fn t_quadrature(b_ref: f64, softening: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = (1e-7f64).ln();
    let hi = (6.0 * b_ref / softening).ln();
    let panels = ((hi - lo) / 0.25).ceil() as usize;
    let (v, w) = composite_legendre(8, panels, lo, hi);
    // t = e^v / b_ref, dt = t dv
    v.iter()
        .zip(&w)
        .map(|(&v, &w)| {
            let t = v.exp() / b_ref;
            (t, w * t)
        })
        .unzip()
}

/// Hamiltonian blocks for the relative motion, keyed by `(n_x mod 2, n_y mod 2)`.
fn relative_blocks(dot: &DotParams, cutoff: usize) -> Vec<((usize, usize), Vec<(usize, usize)>, DMatrix<f64>)> {
    let mu = 0.5 * dot.mass();
    let bx = (HBAR / (mu * dot.omega_x)).sqrt();
    let by = (HBAR / (mu * dot.omega_y)).sqrt();
    let (ex, ey) = (HBAR * dot.omega_x, HBAR * dot.omega_y);
    let mut blocks = Vec::new();
    for (px, py) in [(0, 0), (1, 1), (0, 1), (1, 0)] {
        let states = block_states(cutoff, px, py);
        let n = states.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (i, &(nx, ny)) in states.iter().enumerate() {
            h[(i, i)] = ex * (nx as f64 + 0.5) + ey * (ny as f64 + 0.5);
        }
        blocks.push(((px, py), states, h));
    }
    let kappa = dot.coulomb_strength();
    if kappa == 0.0 {
        return blocks;
    }
    let a = dot.softening;
    let nb = cutoff + 1;
    let (ts, ws) = t_quadrature(bx.max(by), a);
    let mut ox = GaussianOverlaps::new(cutoff);
    let mut oy = GaussianOverlaps::new(cutoff);
    let mut ix = vec![0.0; nb * nb];
    let mut iy = vec![0.0; nb * nb];
    let pref = kappa * 2.0 / std::f64::consts::PI.sqrt();
    for (&t, &w) in ts.iter().zip(&ws) {
        ox.compute(bx * bx * t * t, &mut ix);
        oy.compute(by * by * t * t, &mut iy);
        let f = pref * w * (-a * a * t * t).exp();
        for (_, states, h) in blocks.iter_mut() {
            let n = states.len();
            for j in 0..n {
                let (mx, my) = states[j];
                for i in 0..=j {
                    let (nx, ny) = states[i];
                    h[(i, j)] += f * ix[nx * nb + mx] * iy[ny * nb + my];
                }
            }
        }
    }
    for (_, _, h) in blocks.iter_mut() {
        let n = h.nrows();
        for j in 0..n {
            for i in 0..j {
                h[(j, i)] = h[(i, j)];
            }
        }
    }
    blocks
}

/// Relative-motion Hamiltonian matrices of the four parity blocks; exposed
/// for inspection and tests.
pub fn relative_hamiltonian_blocks(dot: &DotParams, cutoff: usize) -> Result<Vec<DMatrix<f64>>> {
    dot.validate()?;
    Ok(relative_blocks(dot, cutoff).into_iter().map(|(_, _, h)| h).collect())
}

/// Diagonalizes the relative Hamiltonian at one cutoff in the polar basis.
pub fn dot_exact_diagonalize(dot: &DotParams, basis_cutoff: usize) -> Result<SpectrumTable> {
    dot_exact_diagonalize_in(dot, basis_cutoff, EdBasis::Polar)
}

pub fn dot_exact_diagonalize_in(dot: &DotParams, basis_cutoff: usize, basis: EdBasis) -> Result<SpectrumTable> {
    dot.validate()?;
    if basis_cutoff < 1 {
        return Err(Error::validation("basis cutoff must be at least 1"));
    }
    let blocks: Vec<(Parity, DMatrix<f64>)> = match basis {
        EdBasis::Polar => polar_blocks(dot, basis_cutoff)
            .into_iter()
            .map(|(even, h)| (if even { Parity::Even } else { Parity::Odd }, h))
            .collect(),
        EdBasis::Cartesian => relative_blocks(dot, basis_cutoff)
            .into_iter()
            .map(|((px, py), _, h)| (if (px + py) % 2 == 0 { Parity::Even } else { Parity::Odd }, h))
            .collect(),
    };
    let mut levels = Vec::new();
    let mut basis_size = 0;
    for (parity, h) in blocks {
        basis_size += h.nrows();
        if h.nrows() == 0 {
            continue;
        }
        let eig = SymmetricEigen::new(h);
        levels.extend(eig.eigenvalues.iter().map(|&energy| Level { energy, parity }));
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(SpectrumTable {
        levels,
        omega_x: dot.omega_x,
        omega_y: dot.omega_y,
        basis,
        cutoff: basis_cutoff,
        basis_size,
        residual: None,
        dot: dot.clone(),
    })
}

/// Doubles the cutoff from `start` until the lowest even and odd levels move
/// by less than `tolerance` meV; fails once doubling would pass `max_cutoff`.
pub fn dot_exact_diagonalize_converged(
    dot: &DotParams,
    basis: EdBasis,
    start: usize,
    max_cutoff: usize,
    tolerance: f64,
) -> Result<SpectrumTable> {
    let mut prev = dot_exact_diagonalize_in(dot, start, basis)?;
    let mut cutoff = start;
    let mut previous = f64::NAN;
    loop {
        let next_cutoff = cutoff * 2;
        if next_cutoff > max_cutoff {
            return Err(Error::NotConverged {
                cutoff,
                last: prev.ground(Parity::Even).unwrap_or(f64::NAN),
                previous,
            });
        }
        let mut next = dot_exact_diagonalize_in(dot, next_cutoff, basis)?;
        let worst = [Parity::Even, Parity::Odd]
            .iter()
            .map(|&p| (prev.ground(p).unwrap_or(f64::NAN) - next.ground(p).unwrap_or(f64::NAN)).abs())
            .fold(0.0f64, |a, d| if d.is_nan() { f64::NAN } else { a.max(d) });
        next.residual = Some(worst);
        if worst < tolerance {
            return Ok(next);
        }
        previous = prev.ground(Parity::Even).unwrap_or(f64::NAN);
        prev = next;
        cutoff = next_cutoff;
    }
}

impl SpectrumTable {
    /// Lowest relative energy of the given parity.
    pub fn ground(&self, parity: Parity) -> Option<f64> {
        self.levels.iter().find(|l| l.parity == parity).map(|l| l.energy)
    }

    /// Centre-of-mass thermal energy (2D oscillator).
    pub fn centre_of_mass_energy(&self, beta: f64) -> f64 {
        [self.omega_x, self.omega_y]
            .iter()
            .map(|w| {
                let e = HBAR * w;
                0.5 * e / (0.5 * beta * e).tanh()
            })
            .sum()
    }

    /// Centre-of-mass `ln Z`.
    pub fn centre_of_mass_ln_z(&self, beta: f64) -> f64 {
        [self.omega_x, self.omega_y]
            .iter()
            .map(|w| -(2.0 * (0.5 * beta * HBAR * w).sinh()).ln())
            .sum()
    }

    /// `(ln Z_rel, ⟨E_rel⟩)` over the levels of one parity.
    pub fn relative_thermal(&self, beta: f64, parity: Parity) -> (f64, f64) {
        let e0 = self.ground(parity).unwrap_or(0.0);
        let (mut z, mut ez) = (0.0, 0.0);
        for l in self.levels.iter().filter(|l| l.parity == parity) {
            let b = (-beta * (l.energy - e0)).exp();
            z += b;
            ez += b * l.energy;
        }
        (z.ln() - beta * e0, ez / z)
    }

    pub fn to_text(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            let _ = writeln!(s, "# {h}");
        }
        let d = &self.dot;
        let _ = writeln!(
            s,
            "# dot m_star_ratio={:e} omega_x={:e} omega_y={:e} epsilon_r={:e} gamma_c={:e} softening={:e}",
            d.m_star_ratio, d.omega_x, d.omega_y, d.epsilon_r, d.gamma_c, d.softening
        );
        let _ = writeln!(
            s,
            "# basis={} cutoff={} basis_size={}",
            self.basis.name(),
            self.cutoff,
            self.basis_size
        );
        match self.residual {
            Some(r) => {
                let _ = writeln!(s, "# residual_mev={r:e}");
            }
            None => {
                let _ = writeln!(s, "# residual_mev=none");
            }
        }
        let _ = writeln!(s, "index\tenergy_mev\tparity");
        for (i, l) in self.levels.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{:e}\t{}", l.energy, l.parity.name());
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let bad = |m: String| Error::Format {
            path: origin.to_string(),
            message: m,
        };
        let mut kv = std::collections::HashMap::new();
        let mut levels = Vec::new();
        let mut seen_columns = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        kv.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            if !seen_columns {
                if line != "index\tenergy_mev\tparity" {
                    return Err(bad(format!("line {}: expected the column header", lineno + 1)));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let energy: f64 = f[1].parse().map_err(|_| bad(format!("line {}: bad energy", lineno + 1)))?;
            let parity = match f[2] {
                "even" => Parity::Even,
                "odd" => Parity::Odd,
                other => return Err(bad(format!("line {}: bad parity {other}", lineno + 1))),
            };
            levels.push(Level { energy, parity });
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| bad(format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(format!("bad {k}")))
        };
        let dot = DotParams {
            m_star_ratio: num("m_star_ratio")?,
            omega_x: num("omega_x")?,
            omega_y: num("omega_y")?,
            epsilon_r: num("epsilon_r")?,
            gamma_c: num("gamma_c")?,
            softening: num("softening")?,
        };
        let residual = match kv.get("residual_mev").map(String::as_str) {
            None | Some("none") => None,
            Some(v) => Some(v.parse().map_err(|_| bad("bad residual".into()))?),
        };
        let basis = match kv.get("basis").map(String::as_str) {
            Some("polar") => EdBasis::Polar,
            Some("cartesian") => EdBasis::Cartesian,
            other => return Err(bad(format!("bad basis {other:?}"))),
        };
        if levels.windows(2).any(|w| w[1].energy < w[0].energy) {
            return Err(bad("energies must be ascending".into()));
        }
        Ok(SpectrumTable {
            levels,
            omega_x: dot.omega_x,
            omega_y: dot.omega_y,
            basis,
            cutoff: num("cutoff")? as usize,
            basis_size: num("basis_size")? as usize,
            residual,
            dot,
        })
    }

    pub fn write(&self, path: &Path, header: &[String]) -> Result<()> {
        std::fs::write(path, self.to_text(header))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Thermal energy of the two electrons in the given spin state:
/// centre of mass plus the Boltzmann average over relative levels of the
/// matching parity.
pub fn dot_thermal_energy(spectrum: &SpectrumTable, beta: f64, state: SpinState) -> f64 {
    spectrum.centre_of_mass_energy(beta) + spectrum.relative_thermal(beta, state.parity()).1
}

/// Helmholtz free energy of the spin state's orbital sector.
pub fn dot_free_energy(spectrum: &SpectrumTable, beta: f64, state: SpinState) -> f64 {
    -(spectrum.centre_of_mass_ln_z(beta) + spectrum.relative_thermal(beta, state.parity()).0) / beta
}

/// Exact `Z_O/Z_oo = (Z_S − Z_T)/(Z_S + Z_T)` from the orbital sums.
pub fn dot_connected_ratio(spectrum: &SpectrumTable, beta: f64) -> f64 {
    let (ls, _) = spectrum.relative_thermal(beta, Parity::Even);
    let (lt, _) = spectrum.relative_thermal(beta, Parity::Odd);
    // (1 − e^{lt−ls})/(1 + e^{lt−ls})
    (0.5 * (ls - lt)).tanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::beta_from_kelvin;

    fn free_dot(eta: f64) -> DotParams {
        DotParams::from_confinement(0.067, 5.1, eta, 12.5, 0.0).unwrap()
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let (x, _, ws) = gauss_hermite(40);
        let mut psi = vec![0.0; 31];
        let mut gram = vec![0.0; 31 * 31];
        for (xi, wi) in x.iter().zip(&ws) {
            hermite_functions(*xi, 30, &mut psi);
            for n in 0..31 {
                for m in 0..31 {
                    gram[n * 31 + m] += wi * psi[n] * psi[m];
                }
            }
        }
        for n in 0..31 {
            for m in 0..31 {
                let e = if n == m { 1.0 } else { 0.0 };
                assert!((gram[n * 31 + m] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_overlaps_match_brute_force() {
        let mut o = GaussianOverlaps::new(12);
        let mut out = vec![0.0; 13 * 13];
        let mut psi = vec![0.0; 13];
        for c in [0.0, 0.3, 2.0, 50.0] {
            o.compute(c, &mut out);
            // trapezoid reference
            let (lo, hi, n) = (-12.0, 12.0, 24000);
            let h = (hi - lo) / n as f64;
            let mut refm = vec![0.0; 13 * 13];
            for k in 0..=n {
                let x = lo + k as f64 * h;
                hermite_functions(x, 12, &mut psi);
                let g = (-c * x * x).exp() * h * if k == 0 || k == n { 0.5 } else { 1.0 };
                for a in 0..13 {
                    for b in 0..13 {
                        refm[a * 13 + b] += g * psi[a] * psi[b];
                    }
                }
            }
            for a in 0..13 {
                for b in 0..13 {
                    let v = if (a + b) % 2 == 0 { out[a * 13 + b] } else { 0.0 };
                    assert!((v - refm[a * 13 + b]).abs() < 1e-10, "c={c} ({a},{b}): {v} vs {}", refm[a * 13 + b]);
                }
            }
        }
    }

    #[test]
    fn non_interacting_spectrum_is_oscillator() {
        let dot = free_dot(1.38);
        let spec = dot_exact_diagonalize_in(&dot, 10, EdBasis::Cartesian).unwrap();
        let (ex, ey) = (HBAR * dot.omega_x, HBAR * dot.omega_y);
        let mut exact: Vec<(f64, Parity)> = Vec::new();
        for nx in 0..=10usize {
            for ny in 0..=(10 - nx) {
                let p = if (nx + ny) % 2 == 0 { Parity::Even } else { Parity::Odd };
                exact.push((ex * (nx as f64 + 0.5) + ey * (ny as f64 + 0.5), p));
            }
        }
        exact.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(spec.levels.len(), exact.len());
        assert_eq!(spec.basis_size, exact.len());
        for (l, e) in spec.levels.iter().zip(&exact) {
            assert!((l.energy - e.0).abs() < 1e-10);
        }
        let beta = beta_from_kelvin(1e-3);
        let e0 = dot_thermal_energy(&spec, beta, SpinState::Singlet);
        assert!((e0 - (ex + ey)).abs() < 1e-9, "{e0} vs {}", ex + ey);
    }

    #[test]
    fn hamiltonian_is_symmetric() {
        let dot = DotParams::from_wigner_parameter(0.067, 5.1, 1.38, 12.5, 1.34).unwrap();
        for h in relative_hamiltonian_blocks(&dot, 12).unwrap() {
            let scale = h.amax();
            for i in 0..h.nrows() {
                for j in 0..h.ncols() {
                    assert!((h[(i, j)] - h[(j, i)]).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    /// Coulomb matrix elements against direct 2D integration of the
    /// softened potential for a few low states.
    #[test]
    fn coulomb_elements_match_direct_integration() {
        let dot = DotParams::from_wigner_parameter(0.067, 5.1, 1.38, 12.5, 1.34)
            .unwrap()
            .with_softening(2.0)
            .unwrap();
        let free = DotParams { gamma_c: 0.0, ..dot.clone() };
        let cutoff = 4;
        let with = relative_blocks(&dot, cutoff);
        let without = relative_blocks(&free, cutoff);
        let mu = 0.5 * dot.mass();
        let bx = (HBAR / (mu * dot.omega_x)).sqrt();
        let by = (HBAR / (mu * dot.omega_y)).sqrt();
        let kappa = dot.coulomb_strength();
        let (n, l) = (500, 9.0);
        let mut px = vec![0.0; cutoff + 1];
        let mut py = vec![0.0; cutoff + 1];
        for (((_, states, h), (_, _, h0)), _) in with.iter().zip(&without).zip(0..1) {
            let pick = [(0usize, 0usize), (0, 1), (1, 1), (0, 3)];
            for &(i, j) in &pick {
                if j >= states.len() {
                    continue;
                }
                let ((nx, ny), (mx, my)) = (states[i], states[j]);
                let hstep = 2.0 * l / n as f64;
                let mut s = 0.0;
                for a in 0..n {
                    let x = -l + (a as f64 + 0.5) * hstep;
                    hermite_functions(x, cutoff, &mut px);
                    for b in 0..n {
                        let y = -l + (b as f64 + 0.5) * hstep;
                        hermite_functions(y, cutoff, &mut py);
                        let r2 = (x * bx).powi(2) + (y * by).powi(2);
                        s += px[nx] * px[mx] * py[ny] * py[my] * kappa / (r2 + dot.softening.powi(2)).sqrt();
                    }
                }
                s *= hstep * hstep;
                let v = h[(i, j)] - h0[(i, j)];
                assert!((v - s).abs() < 1e-6 * s.abs().max(1e-3), "({i},{j}): {v} vs {s}");
            }
        }
    }

    #[test]
    fn thermal_energies_match_brute_force_product_spectrum() {
        let dot = free_dot(1.38);
        let spec = dot_exact_diagonalize_in(&dot, 40, EdBasis::Cartesian).unwrap();
        let (ex, ey) = (HBAR * dot.omega_x, HBAR * dot.omega_y);
        let mut single = Vec::new();
        for nx in 0..40usize {
            for ny in 0..40usize {
                single.push(ex * (nx as f64 + 0.5) + ey * (ny as f64 + 0.5));
            }
        }
        for kelvin in [5.0, 11.6, 30.0, 60.0] {
            let beta = beta_from_kelvin(kelvin);
            let e0 = 2.0 * single.iter().cloned().fold(f64::INFINITY, f64::min);
            let (mut zs, mut es, mut zt, mut et) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..single.len() {
                for b in a..single.len() {
                    let e = single[a] + single[b];
                    let w = (-beta * (e - e0)).exp();
                    zs += w;
                    es += w * e;
                    if a != b {
                        zt += w;
                        et += w * e;
                    }
                }
            }
            let s = dot_thermal_energy(&spec, beta, SpinState::Singlet);
            let t = dot_thermal_energy(&spec, beta, SpinState::Triplet);
            assert!((s - es / zs).abs() < 1e-8, "{kelvin} K singlet {s} vs {}", es / zs);
            assert!((t - et / zt).abs() < 1e-8, "{kelvin} K triplet {t} vs {}", et / zt);
            // free energies and the exchange ratio agree with the same sums
            let r = dot_connected_ratio(&spec, beta);
            assert!((r - (zs - zt) / (zs + zt)).abs() < 1e-10);
            let df = dot_free_energy(&spec, beta, SpinState::Triplet) - dot_free_energy(&spec, beta, SpinState::Singlet);
            assert!((df + (zt / zs).ln() / beta).abs() < 1e-9);
        }
    }

    #[test]
    fn spectrum_file_round_trip() {
        let dot = DotParams::from_wigner_parameter(0.067, 5.1, 1.38, 12.5, 1.34).unwrap();
        let mut spec = dot_exact_diagonalize(&dot, 8).unwrap();
        spec.residual = Some(1.5e-4);
        let text = spec.to_text(&["test".into()]);
        let back = SpectrumTable::parse(&text, "mem").unwrap();
        assert_eq!(back, spec);
        assert!(SpectrumTable::parse("index\tenergy_mev\tparity\n0\t1.0\tweird\n", "x").is_err());
    }

    #[test]
    fn singlet_lies_below_triplet() {
        let dot = DotParams::from_wigner_parameter(0.067, 5.1, 1.38, 12.5, 1.34).unwrap();
        let spec = dot_exact_diagonalize(&dot, 16).unwrap();
        assert!(spec.ground(Parity::Even).unwrap() < spec.ground(Parity::Odd).unwrap());
        assert!(spec.levels.windows(2).all(|w| w[0].energy <= w[1].energy));
    }

    #[test]
    fn polar_and_cartesian_bases_agree() {
        let dot = DotParams::from_wigner_parameter(0.07, 5.1, 1.38, 12.5, 1.34)
            .unwrap()
            .with_softening(4.0)
            .unwrap();
        let polar = dot_exact_diagonalize(&dot, 20).unwrap();
        let cart = dot_exact_diagonalize_in(&dot, 40, EdBasis::Cartesian).unwrap();
        for (a, b) in polar.levels.iter().zip(&cart.levels).take(8) {
            assert_eq!(a.parity, b.parity);
            assert!((a.energy - b.energy).abs() < 1e-3, "{} vs {}", a.energy, b.energy);
        }
    }

    #[test]
    fn polar_basis_recovers_anisotropic_oscillator() {
        let dot = free_dot(1.38);
        let spec = dot_exact_diagonalize(&dot, 30).unwrap();
        let (ex, ey) = (HBAR * dot.omega_x, HBAR * dot.omega_y);
        let mut exact = Vec::new();
        for nx in 0..20usize {
            for ny in 0..20usize {
                exact.push(ex * (nx as f64 + 0.5) + ey * (ny as f64 + 0.5));
            }
        }
        exact.sort_by(f64::total_cmp);
        for (l, e) in spec.levels.iter().zip(&exact).take(20) {
            assert!((l.energy - e).abs() < 1e-8, "{} vs {e}", l.energy);
        }
    }

    #[test]
    fn low_levels_decrease_monotonically_with_cutoff() {
        let dot = DotParams::from_wigner_parameter(0.07, 5.1, 1.38, 12.5, 1.34).unwrap();
        let specs: Vec<SpectrumTable> = [4, 8, 16].iter().map(|&n| dot_exact_diagonalize(&dot, n).unwrap()).collect();
        for p in [Parity::Even, Parity::Odd] {
            let lows: Vec<Vec<f64>> = specs
                .iter()
                .map(|s| s.levels.iter().filter(|l| l.parity == p).take(10).map(|l| l.energy).collect())
                .collect();
            for w in lows.windows(2) {
                for (a, b) in w[0].iter().zip(&w[1]) {
                    assert!(b <= &(a + 1e-9), "{p:?}: {a} -> {b}");
                }
            }
        }
    }

    #[test]
    fn convergence_loop_reports_residual_or_failure() {
        let dot = DotParams::from_wigner_parameter(0.07, 5.1, 1.38, 12.5, 1.34).unwrap();
        let spec = dot_exact_diagonalize_converged(&dot, EdBasis::Polar, 8, 64, CONVERGENCE_TOLERANCE).unwrap();
        assert!(spec.residual.unwrap() < CONVERGENCE_TOLERANCE);
        match dot_exact_diagonalize_converged(&dot, EdBasis::Cartesian, 4, 16, 1e-6) {
            Err(Error::NotConverged { cutoff, last, previous }) => {
                assert_eq!(cutoff, 16);
                assert!(last < previous);
            }
            other => panic!("expected a convergence failure, got {other:?}"),
        }
    }
}
