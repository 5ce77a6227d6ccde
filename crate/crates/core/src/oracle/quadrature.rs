//! Gauss quadrature nodes by Newton iteration on the orthogonal polynomials.

use std::f64::consts::PI;

/// Gauss–Hermite rule for `∫ f(x) e^{−x²} dx`. Returns nodes, weights, and
/// the scaled weights `w_i e^{x_i²}` (which stay representable for large
/// orders where the plain weights underflow).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        for _ in 0..100 {
            // orthonormal Hermite polynomials
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            let pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
    }
    let mut w = vec![0.0; n];
    let mut ws = vec![0.0; n];
    // Christoffel formula with Hermite functions: w_i e^{x_i²} = 1/Σ_k ψ_k(x_i)²
    for i in 0..n {
        let z = x[i];
        // Hermite functions ψ_k(z) = h_k(z) e^{−z²/2}
        let mut p1 = pim4 * (-0.5 * z * z).exp();
        let mut p2 = 0.0;
        let mut sum = p1 * p1;
        for j in 0..n - 1 {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            sum += p1 * p1;
        }
        ws[i] = 1.0 / sum;
        w[i] = ws[i] * (-z * z).exp();
    }
    (x, w, ws)
}

/// Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let (xm, xl) = (0.5 * (b + a), 0.5 * (b - a));
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = xm - xl * z;
        x[n - 1 - i] = xm + xl * z;
        w[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule: `panels` equal panels of `order` nodes.
pub fn composite_legendre(order: usize, panels: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x0, w0) = gauss_legendre(order, -1.0, 1.0);
    let h = (b - a) / panels as f64;
    let mut x = Vec::with_capacity(order * panels);
    let mut w = Vec::with_capacity(order * panels);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x0.iter().zip(&w0) {
            x.push(c + 0.5 * h * xi);
            w.push(0.5 * h * wi);
        }
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for n in [1, 2, 5, 20, 68, 130] {
            let (x, w, ws) = gauss_hermite(n);
            let m0: f64 = w.iter().sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-12, "n={n}: {m0}");
            // ∫ x² e^{−x²} = √π/2, ∫ x⁴ e^{−x²} = 3√π/4
            if n >= 3 {
                let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
                assert!((m4 - 0.75 * PI.sqrt()).abs() < 1e-11);
            }
            for i in 0..n {
                assert!((ws[i] * (-x[i] * x[i]).exp() - w[i]).abs() <= 1e-14 * ws[i]);
                assert!(ws[i].is_finite() && ws[i] > 0.0);
            }
            for i in 1..n {
                assert!(x[i] < x[i - 1]);
            }
        }
    }

    #[test]
    fn hermite_is_exact_to_degree_2n_minus_1() {
        // ∫ x^{2k} e^{−x²} dx = Γ(k + 1/2)
        let n = 12;
        let (x, w, _) = gauss_hermite(n);
        for k in 0..n {
            let exact = statrs::function::gamma::gamma(k as f64 + 0.5);
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * k as i32)).sum();
            assert!((q / exact - 1.0).abs() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10, 0.0, 2.0);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(19)).sum();
        assert!((q / (2f64.powi(20) / 20.0) - 1.0).abs() < 1e-13);
        let (x, w) = composite_legendre(8, 50, 0.0, std::f64::consts::PI);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((q - 2.0).abs() < 1e-14);
    }
}
