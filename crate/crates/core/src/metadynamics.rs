//! Well-tempered metadynamics on the exchange collective variable.
//!
//! Gaussians are kept as an ordered list (the exact reference) and, when a
//! grid is configured, also accumulated onto uniform nodes holding the bias
//! and its derivative. The grid is evaluated by cubic Hermite interpolation
//! and extrapolates as a constant outside its range.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SignedLog;

/// Gaussians further than this many widths from `s` are skipped on the grid.
const GRID_CUTOFF_WIDTHS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: f64,
    pub height: f64,
    pub width: f64,
}

impl Gaussian {
    #[inline]
    fn value(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.width;
        self.height * (-0.5 * u * u).exp()
    }

    #[inline]
    fn derivative(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.width;
        -self.height * u / self.width * (-0.5 * u * u).exp()
    }
}

/// Well-tempered deposition schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellTempered {
    /// Initial Gaussian height `w(0)`, energy.
    pub initial_height: f64,
    /// Gaussian width `σ_G`, energy.
    pub width: f64,
    /// Bias factor `γ > 1`.
    pub bias_factor: f64,
    /// Deposition stride `τ_G` in MD steps.
    pub stride: u64,
}

impl WellTempered {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_height > 0.0 && self.initial_height.is_finite()) {
            return Err(Error::validation("metadynamics initial height must be positive"));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::validation("metadynamics Gaussian width must be positive"));
        }
        if !(self.bias_factor > 1.0 && self.bias_factor.is_finite()) {
            return Err(Error::validation("well-tempered bias factor must exceed 1"));
        }
        if self.stride == 0 {
            return Err(Error::validation("deposition stride must be at least one step"));
        }
        Ok(())
    }
}

/// Range of the interpolation grid; spacing defaults to `σ_G / 10`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub spacing: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct BiasGrid {
    min: f64,
    spacing: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl BiasGrid {
    fn new(spec: GridSpec) -> Result<Self> {
        if !(spec.max > spec.min && spec.spacing > 0.0) {
            return Err(Error::validation("bias grid needs max > min and positive spacing"));
        }
        let n = ((spec.max - spec.min) / spec.spacing).ceil() as usize + 1;
        if n > 50_000_000 {
            return Err(Error::validation("bias grid too fine"));
        }
        Ok(BiasGrid {
            min: spec.min,
            spacing: spec.spacing,
            values: vec![0.0; n],
            derivs: vec![0.0; n],
        })
    }

    fn max(&self) -> f64 {
        self.min + self.spacing * (self.values.len() - 1) as f64
    }

    fn add(&mut self, g: &Gaussian) {
        let reach = GRID_CUTOFF_WIDTHS * g.width;
        let lo = ((g.center - reach - self.min) / self.spacing).floor().max(0.0) as usize;
        let hi = ((g.center + reach - self.min) / self.spacing).ceil();
        if hi < 0.0 || lo >= self.values.len() {
            return;
        }
        let hi = (hi as usize).min(self.values.len() - 1);
        for i in lo..=hi {
            let s = self.min + self.spacing * i as f64;
            self.values[i] += g.value(s);
            self.derivs[i] += g.derivative(s);
        }
    }

    /// Cubic Hermite interpolation of value and derivative.
    fn eval(&self, s: f64) -> (f64, f64) {
        let n = self.values.len();
        if s <= self.min {
            return (self.values[0], 0.0);
        }
        if s >= self.max() {
            return (self.values[n - 1], 0.0);
        }
        let u = (s - self.min) / self.spacing;
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let h = self.spacing;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let dvalue = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        (value, dvalue / h)
    }
}

/// The metadynamics memory: deposited Gaussians plus the schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasState {
    params: WellTempered,
    gaussians: Vec<Gaussian>,
    grid_spec: Option<GridSpec>,
    grid: Option<BiasGrid>,
    frozen: bool,
}

impl BiasState {
    pub fn new(params: WellTempered, grid: Option<GridSpec>) -> Result<Self> {
        params.validate()?;
        Ok(BiasState {
            params,
            gaussians: Vec::new(),
            grid: grid.map(BiasGrid::new).transpose()?,
            grid_spec: grid,
            frozen: false,
        })
    }

    /// Grid over `[min, max]` with the default spacing `σ_G/10`.
    pub fn with_default_grid(params: WellTempered, min: f64, max: f64) -> Result<Self> {
        let spacing = params.width / 10.0;
        Self::new(params, Some(GridSpec { min, max, spacing }))
    }

    pub fn params(&self) -> &WellTempered {
        &self.params
    }

    pub fn grid_spec(&self) -> Option<GridSpec> {
        self.grid_spec
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn deposited_count(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Stops further deposition; the bias becomes a static umbrella.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Exact sum over all Gaussians.
    pub fn exact_value(&self, s: f64) -> f64 {
        self.gaussians.iter().map(|g| g.value(s)).sum()
    }

    pub fn exact_derivative(&self, s: f64) -> f64 {
        self.gaussians.iter().map(|g| g.derivative(s)).sum()
    }

    /// Bias at `s`, from the grid when one is configured.
    pub fn value(&self, s: f64) -> f64 {
        match &self.grid {
            Some(g) => g.eval(s).0,
            None => self.exact_value(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match &self.grid {
            Some(g) => g.eval(s).1,
            None => self.exact_derivative(s),
        }
    }

    pub fn value_and_derivative(&self, s: f64) -> (f64, f64) {
        match &self.grid {
            Some(g) => g.eval(s),
            None => (self.exact_value(s), self.exact_derivative(s)),
        }
    }

    /// Deposits a Gaussian at `s_now` with the well-tempered height
    /// `w0 · exp(−β V(s_now) / (γ − 1))`.
    pub fn deposit(&mut self, s_now: f64, beta: f64) -> Result<Gaussian> {
        if self.frozen {
            return Err(Error::validation("cannot deposit on a frozen bias"));
        }
        if !s_now.is_finite() {
            return Err(Error::validation("deposition center is not finite"));
        }
        let current = self.value(s_now);
        let height =
            self.params.initial_height * (-beta * current / (self.params.bias_factor - 1.0)).exp();
        let g = Gaussian {
            center: s_now,
            height,
            width: self.params.width,
        };
        self.push(g);
        Ok(g)
    }

    fn push(&mut self, g: Gaussian) {
        if let Some(grid) = &mut self.grid {
            grid.add(&g);
        }
        self.gaussians.push(g);
    }

    /// Static reweighting factor `e^{βV(s)}` for samples taken under a frozen
    /// bias, as a sign/log pair.
    pub fn reweight_factor(&self, s: f64, beta: f64) -> SignedLog {
        SignedLog::from_ln(1.0, beta * self.value(s))
    }

    /// Rebuilds a bias from a list of Gaussians, replaying them in order.
    pub fn from_gaussians(
        params: WellTempered,
        grid: Option<GridSpec>,
        gaussians: &[Gaussian],
        frozen: bool,
    ) -> Result<Self> {
        let mut b = Self::new(params, grid)?;
        for g in gaussians {
            if !(g.height > 0.0 && g.width > 0.0 && g.center.is_finite()) {
                return Err(Error::validation("invalid Gaussian in bias record"));
            }
            b.push(*g);
        }
        b.frozen = frozen;
        Ok(b)
    }

    /// Hills table: one tab-separated record per Gaussian
    /// (`index center height width`), preceded by `#` header lines.
    pub fn to_hills(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let p = &self.params;
        let _ = writeln!(
            out,
            "# well_tempered initial_height={} width={} bias_factor={} stride={}",
            p.initial_height, p.width, p.bias_factor, p.stride
        );
        match self.grid_spec {
            Some(g) => {
                let _ = writeln!(out, "# grid min={} max={} spacing={}", g.min, g.max, g.spacing);
            }
            None => {
                let _ = writeln!(out, "# grid none");
            }
        }
        let _ = writeln!(out, "# frozen={}", self.frozen);
        let _ = writeln!(out, "index\tcenter\theight\twidth");
        for (i, g) in self.gaussians.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{}\t{}\t{}", g.center, g.height, g.width);
        }
        out
    }

    pub fn parse_hills(text: &str, origin: &str) -> Result<Self> {
        let bad = |m: String| Error::Format {
            path: origin.to_string(),
            message: m,
        };
        let mut params = None;
        let mut grid: Option<Option<GridSpec>> = None;
        let mut frozen = false;
        let mut gaussians = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let kv = |body: &str| -> Result<Vec<(String, String)>> {
                    body.split_whitespace()
                        .map(|t| {
                            t.split_once('=')
                                .map(|(k, v)| (k.to_string(), v.to_string()))
                                .ok_or_else(|| bad(format!("line {}: bad field `{t}`", lineno + 1)))
                        })
                        .collect()
                };
                let num = |pairs: &[(String, String)], key: &str| -> Result<f64> {
                    pairs
                        .iter()
                        .find(|(k, _)| k == key)
                        .ok_or_else(|| bad(format!("line {}: missing `{key}`", lineno + 1)))?
                        .1
                        .parse::<f64>()
                        .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))
                };
                if let Some(body) = rest.strip_prefix("well_tempered") {
                    let pairs = kv(body)?;
                    params = Some(WellTempered {
                        initial_height: num(&pairs, "initial_height")?,
                        width: num(&pairs, "width")?,
                        bias_factor: num(&pairs, "bias_factor")?,
                        stride: num(&pairs, "stride")? as u64,
                    });
                } else if let Some(body) = rest.strip_prefix("grid") {
                    if body.trim() == "none" {
                        grid = Some(None);
                    } else {
                        let pairs = kv(body)?;
                        grid = Some(Some(GridSpec {
                            min: num(&pairs, "min")?,
                            max: num(&pairs, "max")?,
                            spacing: num(&pairs, "spacing")?,
                        }));
                    }
                } else if let Some(body) = rest.strip_prefix("frozen=") {
                    frozen = body.trim() == "true";
                }
                continue;
            }
            if line.starts_with("index") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(format!("line {}: expected 4 columns", lineno + 1)));
            }
            let f = |i: usize| -> Result<f64> {
                cols[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))
            };
            let index = cols[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
            if index != gaussians.len() {
                return Err(bad(format!("line {}: Gaussian index out of order", lineno + 1)));
            }
            gaussians.push(Gaussian {
                center: f(1)?,
                height: f(2)?,
                width: f(3)?,
            });
        }
        let params = params.ok_or_else(|| bad("missing well_tempered header".into()))?;
        let grid = grid.ok_or_else(|| bad("missing grid header".into()))?;
        Self::from_gaussians(params, grid, &gaussians, frozen)
    }

    pub fn write_hills(&self, path: &Path, header: &[String]) -> Result<()> {
        std::fs::write(path, self.to_hills(header))?;
        Ok(())
    }

    pub fn read_hills(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_hills(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(w0: f64, width: f64, gamma: f64) -> WellTempered {
        WellTempered {
            initial_height: w0,
            width,
            bias_factor: gamma,
            stride: 10,
        }
    }

    #[test]
    fn empty_bias_is_zero() {
        let b = BiasState::new(params(1.0, 1.0, 4.0), None).unwrap();
        for s in [-5.0, 0.0, 3.0] {
            assert_eq!(b.value(s), 0.0);
            assert_eq!(b.derivative(s), 0.0);
        }
        assert_eq!(b.reweight_factor(1.0, 2.0), SignedLog::ONE);
    }

    #[test]
    fn single_gaussian_values() {
        let mut b = BiasState::new(params(1.0, 1.0, 4.0), None).unwrap();
        let g = b.deposit(0.0, 1.0).unwrap();
        assert_eq!(g.height, 1.0);
        assert_eq!(b.value(0.0), 1.0);
        assert!((b.value(1.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(b.derivative(0.0), 0.0);
    }

    #[test]
    fn linear_in_gaussians() {
        let g = Gaussian {
            center: 0.3,
            height: 0.7,
            width: 1.1,
        };
        let one = BiasState::from_gaussians(params(1.0, 1.1, 4.0), None, &[g], false).unwrap();
        let two = BiasState::from_gaussians(params(1.0, 1.1, 4.0), None, &[g, g], false).unwrap();
        for s in [-2.0, 0.3, 1.7] {
            assert_eq!(two.value(s), 2.0 * one.value(s));
        }
    }

    #[test]
    fn well_tempered_heights() {
        // w0 = 0.5 kT, γ = 4, β = 1: second height 0.5 e^{-1/6}
        let mut b = BiasState::new(params(0.5, 4.0, 4.0), None).unwrap();
        assert_eq!(b.deposit(2.0, 1.0).unwrap().height, 0.5);
        let h2 = b.deposit(2.0, 1.0).unwrap().height;
        assert!((h2 - 0.5 * (-1.0f64 / 6.0).exp()).abs() < 1e-15);
        let h3 = b.deposit(2.0, 1.0).unwrap().height;
        assert!(h3 < h2);
        // far away the prior bias is negligible
        let far = b.deposit(2.0 + 10.0 * 4.0, 1.0).unwrap().height;
        assert!((far / 0.5 - 1.0).abs() <= (-50.0f64).exp());
    }

    #[test]
    fn frozen_bias_rejects_deposits() {
        let mut b = BiasState::new(params(0.5, 1.0, 4.0), None).unwrap();
        b.freeze();
        assert!(b.deposit(0.0, 1.0).is_err());
    }

    #[test]
    fn invalid_schedule() {
        assert!(BiasState::new(params(0.5, 1.0, 1.0), None).is_err());
        assert!(BiasState::new(params(0.0, 1.0, 4.0), None).is_err());
        assert!(BiasState::new(params(0.5, -1.0, 4.0), None).is_err());
    }

    fn random_bias(seed: u64, grid: bool) -> BiasState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = params(0.5, 1.3, 5.0);
        let mut b = if grid {
            BiasState::with_default_grid(p, -20.0, 20.0).unwrap()
        } else {
            BiasState::new(p, None).unwrap()
        };
        for _ in 0..200 {
            b.deposit(rng.random_range(-8.0..8.0), 1.0).unwrap();
        }
        b
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let b = random_bias(3, false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s = rng.random_range(-12.0..12.0);
            let h = 1e-5;
            let fd = (b.value(s + h) - b.value(s - h)) / (2.0 * h);
            let d = b.derivative(s);
            assert!((fd - d).abs() <= 1e-8 * d.abs().max(1.0), "{fd} vs {d}");
        }
    }

    #[test]
    fn grid_tracks_exact_sum() {
        let b = random_bias(5, true);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let scale = b.exact_value(0.0).max(1.0);
        for _ in 0..500 {
            let s = rng.random_range(-19.0..19.0);
            assert!((b.value(s) - b.exact_value(s)).abs() < 1e-6 * scale);
            assert!((b.derivative(s) - b.exact_derivative(s)).abs() < 1e-5 * scale);
        }
        // interpolated derivative is the derivative of the interpolant
        for _ in 0..100 {
            let s = rng.random_range(-19.0..19.0);
            let h = 1e-6;
            let fd = (b.value(s + h) - b.value(s - h)) / (2.0 * h);
            assert!((fd - b.derivative(s)).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn grid_extrapolates_flat() {
        let mut b = BiasState::with_default_grid(params(0.5, 1.0, 4.0), -5.0, 5.0).unwrap();
        b.deposit(4.5, 1.0).unwrap();
        assert_eq!(b.derivative(7.0), 0.0);
        assert_eq!(b.value(7.0), b.value(5.0));
        assert_eq!(b.value(-9.0), b.value(-5.0));
    }

    #[test]
    fn reweight_ratio() {
        let b = random_bias(7, true);
        let beta = 2.0;
        let (s1, s2) = (0.4, -3.1);
        let r1 = b.reweight_factor(s1, beta);
        let r2 = b.reweight_factor(s2, beta);
        let expected = beta * (b.value(s1) - b.value(s2));
        assert!((r1.ln_abs - r2.ln_abs - expected).abs() < 1e-12);
    }

    #[test]
    fn hills_round_trip() {
        let mut b = random_bias(8, true);
        b.freeze();
        let text = b.to_hills(&["config_hash abc".to_string()]);
        let back = BiasState::parse_hills(&text, "mem").unwrap();
        assert_eq!(back, b);
        assert!(BiasState::parse_hills("index\tcenter\theight\twidth\n0\t1\t2\n", "mem").is_err());
    }
}
