//! Relative-motion Hamiltonian of the dot in a polar basis.
//!
//! Channel `ℓ = |m|` uses `r^ℓ e^{−r²/2} q_k(r)` with `q_k` orthonormal
//! polynomials in `r` (all powers, so the linear cusp at contact is
//! representable), built by the Stieltjes procedure on a fine radial rule.
//! Angular functions are `cos mφ` and `sin mφ`, which splits each parity
//! into two reflection sectors. The anisotropy `cos 2φ` couples `ℓ` to `ℓ ± 2`.
//!
//! Lengths are in `b = sqrt(ħ/(μω₀))`, energies in `ħω₀`, except the
//! Coulomb term which is added in meV.

use nalgebra::DMatrix;

use super::quadrature::gauss_legendre;
use crate::potentials::DotParams;
use crate::units::HBAR;

/// Radial functions of one channel sampled on the rule:
/// `values[k][j] = sqrt(W_j r_j) χ_k(r_j)` and the same for `χ_k'`.
struct Channel {
    ell: usize,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

struct RadialRule {
    r: Vec<f64>,
    w: Vec<f64>,
}

fn radial_rule(cutoff: usize, inner: f64) -> RadialRule {
    let r_max = (2.0 * cutoff as f64 + 1.0).sqrt() + 10.0;
    let mut edges = vec![0.0];
    let mut e = inner;
    while e < 0.5 {
        edges.push(e);
        e *= 2.0;
    }
    let mut e = 0.5;
    while e < r_max {
        edges.push(e);
        e += 0.1;
    }
    edges.push(r_max);
    let (x0, w0) = gauss_legendre(12, -1.0, 1.0);
    let mut r = Vec::new();
    let mut w = Vec::new();
    for p in edges.windows(2) {
        let (c, h) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        for (xi, wi) in x0.iter().zip(&w0) {
            r.push(c + h * xi);
            w.push(h * wi);
        }
    }
    RadialRule { r, w }
}

fn build_channel(rule: &RadialRule, ell: usize, size: usize) -> Channel {
    let n = rule.r.len();
    let lf = ell as f64;
    let mut v0: Vec<f64> = (0..n)
        .map(|j| {
            let r = rule.r[j];
            (0.5 * (rule.w[j].ln() + (2.0 * lf + 1.0) * r.ln() - r * r)).exp()
        })
        .collect();
    let norm = v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    v0.iter_mut().for_each(|x| *x /= norm);
    let mut values = vec![v0];
    let mut derivs = vec![vec![0.0; n]];
    let mut prev_b = 0.0;
    for k in 0..size.saturating_sub(1) {
        let vk = &values[k];
        let a: f64 = (0..n).map(|j| rule.r[j] * vk[j] * vk[j]).sum();
        let mut next: Vec<f64> = (0..n)
            .map(|j| {
                let back = if k > 0 { prev_b * values[k - 1][j] } else { 0.0 };
                (rule.r[j] - a) * vk[j] - back
            })
            .collect();
        let b = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= b);
        let uk = &derivs[k];
        let du: Vec<f64> = (0..n)
            .map(|j| {
                let back = if k > 0 { prev_b * derivs[k - 1][j] } else { 0.0 };
                (vk[j] + (rule.r[j] - a) * uk[j] - back) / b
            })
            .collect();
        values.push(next);
        derivs.push(du);
        prev_b = b;
    }
    // χ' = (ℓ/r − r) χ + r^ℓ e^{−r²/2} q'
    let slopes = values
        .iter()
        .zip(&derivs)
        .map(|(v, u)| {
            (0..n)
                .map(|j| (lf / rule.r[j] - rule.r[j]) * v[j] + u[j])
                .collect()
        })
        .collect();
    Channel { ell, values, slopes }
}

fn weighted_dot(a: &[f64], b: &[f64], f: &[f64]) -> f64 {
    a.iter().zip(b).zip(f).map(|((x, y), z)| x * y * z).sum()
}

/// Parity (`true` for even `ℓ`) and Hamiltonian in meV for each of the four
/// parity/reflection sectors, states with `ℓ + k ≤ cutoff`.
pub(crate) fn polar_blocks(dot: &DotParams, cutoff: usize) -> Vec<(bool, DMatrix<f64>)> {
    let mu = 0.5 * dot.mass();
    let omega0 = dot.omega0();
    let e0 = HBAR * omega0;
    let b0 = (HBAR / (mu * omega0)).sqrt();
    let wx2 = dot.omega_x * dot.omega_x;
    let wy2 = dot.omega_y * dot.omega_y;
    let delta = (wx2 - wy2) / (wx2 + wy2);
    let soft = dot.softening / b0;
    let kappa = dot.coulomb_strength();
    let rule = radial_rule(cutoff, (soft.min(0.01)) / 8.0);
    let r2: Vec<f64> = rule.r.iter().map(|r| r * r).collect();
    let inv_r2: Vec<f64> = rule.r.iter().map(|r| 1.0 / (r * r)).collect();
    let coulomb: Vec<f64> = rule
        .r
        .iter()
        .map(|r| kappa / (b0 * (r * r + soft * soft).sqrt()))
        .collect();
    let ones = vec![1.0; rule.r.len()];

    let channels: Vec<Channel> = (0..=cutoff).map(|ell| build_channel(&rule, ell, cutoff - ell + 1)).collect();

    let mut out = Vec::new();
    for even in [true, false] {
        for cosine in [true, false] {
            let members: Vec<&Channel> = channels
                .iter()
                .filter(|c| (c.ell % 2 == 0) == even && (cosine || c.ell > 0))
                .collect();
            let offsets: Vec<usize> = members
                .iter()
                .scan(0, |acc, c| {
                    let o = *acc;
                    *acc += c.values.len();
                    Some(o)
                })
                .collect();
            let dim: usize = members.iter().map(|c| c.values.len()).sum();
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            for (ci, ch) in members.iter().enumerate() {
                let o = offsets[ci];
                let m2 = (ch.ell * ch.ell) as f64;
                // m = ±1 couple to each other through cos 2φ
                let self_aniso = match (ch.ell, cosine) {
                    (1, true) => 0.25 * delta,
                    (1, false) => -0.25 * delta,
                    _ => 0.0,
                };
                for k in 0..ch.values.len() {
                    for l in k..ch.values.len() {
                        let (vk, vl) = (&ch.values[k], &ch.values[l]);
                        let mut t = weighted_dot(&ch.slopes[k], &ch.slopes[l], &ones);
                        if ch.ell > 0 {
                            t += m2 * weighted_dot(vk, vl, &inv_r2);
                        }
                        let pot = weighted_dot(vk, vl, &r2);
                        let val = e0 * (0.5 * t + (0.5 + self_aniso) * pot) + weighted_dot(vk, vl, &coulomb);
                        h[(o + k, o + l)] = val;
                        h[(o + l, o + k)] = val;
                    }
                }
                if let Some(cj) = members.iter().position(|c| c.ell == ch.ell + 2) {
                    let other = members[cj];
                    let factor = if ch.ell == 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                    let oj = offsets[cj];
                    for k in 0..ch.values.len() {
                        for l in 0..other.values.len() {
                            let val = e0 * 0.25 * delta * factor * weighted_dot(&ch.values[k], &other.values[l], &r2);
                            h[(o + k, oj + l)] = val;
                            h[(oj + l, o + k)] = val;
                        }
                    }
                }
            }
            out.push((even, h));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_functions_are_orthonormal() {
        let rule = radial_rule(40, 1e-4);
        for ell in [0, 1, 7, 40] {
            let ch = build_channel(&rule, ell, 41 - ell);
            let ones = vec![1.0; rule.r.len()];
            for k in 0..ch.values.len() {
                for l in 0..ch.values.len() {
                    let g = weighted_dot(&ch.values[k], &ch.values[l], &ones);
                    let e = if k == l { 1.0 } else { 0.0 };
                    assert!((g - e).abs() < 1e-10, "ℓ={ell} ({k},{l}) {g}");
                }
            }
        }
    }

    #[test]
    fn isotropic_oscillator_levels_are_exact() {
        // r^ℓ e^{−r²/2} L_n(r²) lies in the span whenever 2n + ℓ ≤ cutoff
        let w = 5.1 / HBAR;
        let dot = DotParams::new(0.07, w, w, 12.5, 0.0).unwrap();
        let cutoff = 12;
        let mut levels: Vec<f64> = Vec::new();
        for (_, h) in polar_blocks(&dot, cutoff) {
            levels.extend(nalgebra::SymmetricEigen::new(h).eigenvalues.iter());
        }
        levels.sort_by(f64::total_cmp);
        let mut exact = Vec::new();
        for shell in 0..=cutoff {
            for _ in 0..=shell {
                exact.push(5.1 * (shell as f64 + 1.0));
            }
        }
        for (a, b) in levels.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
