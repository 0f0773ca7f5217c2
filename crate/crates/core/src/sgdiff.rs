//! Savitzky-Golay differentiation: least-squares polynomial fit over the
//! `window` samples nearest to x0, in the centered coordinate t = x − x0,
//! and g⁽ʳ⁾(x0) = r!·β_r.
//!
//! Two routes are provided. [`sg_derivative_at`] solves the window's least
//! squares problem directly; [`SgFilter`] precomputes the linear weights once
//! (the FIR form) and applies them as a dot product.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest acceptable |R_jj| / max|R_ii| in the design-matrix QR.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGConfig {
    pub window: usize,
    pub degree: usize,
    pub deriv_order: usize,
}

impl Default for SGConfig {
    fn default() -> Self {
        SGConfig { window: 51, degree: 4, deriv_order: 2 }
    }
}

impl SGConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 {
            return Err(Error::Config(format!("SG window must be odd, got {}", self.window)));
        }
        if self.degree >= self.window {
            return Err(Error::Config(format!("SG degree {} must be below the window {}", self.degree, self.window)));
        }
        if self.deriv_order > self.degree {
            return Err(Error::Config(format!(
                "derivative order {} exceeds fit degree {}",
                self.deriv_order, self.degree
            )));
        }
        Ok(())
    }
}

/// Start of the `window` consecutive samples nearest x0 (smallest largest
/// distance; ties go to the lower start).
fn window_start(xs: &[f64], x0: f64, window: usize) -> usize {
    let mut best = 0;
    let mut best_span = f64::INFINITY;
    for s in 0..=xs.len() - window {
        let span = (x0 - xs[s]).abs().max((xs[s + window - 1] - x0).abs());
        if span < best_span {
            best_span = span;
            best = s;
        }
    }
    best
}

fn check_abscissae(xs: &[f64], cfg: &SGConfig) -> Result<()> {
    cfg.validate()?;
    if xs.len() < cfg.window {
        return Err(Error::Config(format!("{} samples for an SG window of {}", xs.len(), cfg.window)));
    }
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("SG abscissae must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn factorial(r: usize) -> f64 {
    (1..=r).map(|k| k as f64).product()
}

/// Householder QR of a column-major `rows × cols` matrix, in place.
/// The reflector vectors overwrite the lower part; R is upper triangular.
struct Qr {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    tau: Vec<f64>,
    diag: Vec<f64>,
}

impl Qr {
    fn new(rows: usize, cols: usize, mut a: Vec<f64>) -> Self {
        let mut tau = vec![0.0; cols];
        let mut diag = vec![0.0; cols];
        for j in 0..cols {
            let col = &mut a[j * rows..(j + 1) * rows];
            let norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if col[j] > 0.0 { -norm } else { norm };
            let v0 = col[j] - alpha;
            for v in col[j + 1..].iter_mut() {
                *v /= v0;
            }
            col[j] = 1.0;
            tau[j] = -v0 / alpha;
            diag[j] = alpha;
            for k in j + 1..cols {
                let (left, right) = a.split_at_mut(k * rows);
                let v = &left[j * rows + j..j * rows + rows];
                let c = &mut right[j..rows];
                let dot: f64 = v.iter().zip(c.iter()).map(|(x, y)| x * y).sum();
                for (ci, vi) in c.iter_mut().zip(v) {
                    *ci -= tau[j] * dot * vi;
                }
            }
        }
        Qr { rows, cols, a, tau, diag }
    }

    fn check_rank(&self) -> Result<()> {
        let max = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let min = self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if !(min > RANK_TOL * max) {
            return Err(Error::Conditioning(format!(
                "design matrix R diagonal ranges over [{min:e}, {max:e}]"
            )));
        }
        Ok(())
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[j]
        } else {
            self.a[j * self.rows + i]
        }
    }

    fn reflector(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(1.0).chain(self.a[j * self.rows + j + 1..(j + 1) * self.rows].iter().copied())
    }

    /// y ← Qᵀ y.
    fn apply_qt(&self, y: &mut [f64]) {
        for j in 0..self.cols {
            let dot: f64 = self.reflector(j).zip(&y[j..]).map(|(v, x)| v * x).sum();
            for (x, v) in y[j..].iter_mut().zip(self.reflector(j)) {
                *x -= self.tau[j] * dot * v;
            }
        }
    }

    /// y ← Q y.
    fn apply_q(&self, y: &mut [f64]) {
        for j in (0..self.cols).rev() {
            let dot: f64 = self.reflector(j).zip(&y[j..]).map(|(v, x)| v * x).sum();
            for (x, v) in y[j..].iter_mut().zip(self.reflector(j)) {
                *x -= self.tau[j] * dot * v;
            }
        }
    }

    /// Solve R β = (Qᵀy)[..cols].
    fn back_substitute(&self, qty: &[f64]) -> Vec<f64> {
        let n = self.cols;
        let mut beta = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.r(i, j) * beta[j]).sum();
            beta[i] = (qty[i] - s) / self.r(i, i);
        }
        beta
    }
}

/// Vandermonde matrix in t/scale, column-major.
fn design(ts: &[f64], degree: usize, scale: f64) -> Vec<f64> {
    let mut a = Vec::with_capacity(ts.len() * (degree + 1));
    for k in 0..=degree {
        a.extend(ts.iter().map(|t| (t / scale).powi(k as i32)));
    }
    a
}

fn window_coordinates(xs: &[f64], x0: f64, window: usize) -> (usize, Vec<f64>, f64) {
    let start = window_start(xs, x0, window);
    let ts: Vec<f64> = xs[start..start + window].iter().map(|x| x - x0).collect();
    let scale = ts.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(f64::MIN_POSITIVE);
    (start, ts, scale)
}

/// r-th derivative at x0 of the least-squares polynomial through the nearest
/// window of `samples` (sorted by strictly increasing x).
pub fn sg_derivative_at(samples: &[(f64, Complex64)], x0: f64, cfg: &SGConfig) -> Result<Complex64> {
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    check_abscissae(&xs, cfg)?;
    let (start, ts, scale) = window_coordinates(&xs, x0, cfg.window);
    let qr = Qr::new(cfg.window, cfg.degree + 1, design(&ts, cfg.degree, scale));
    qr.check_rank()?;
    let window = &samples[start..start + cfg.window];
    let coefficient = |part: fn(&Complex64) -> f64| {
        let mut y: Vec<f64> = window.iter().map(|s| part(&s.1)).collect();
        qr.apply_qt(&mut y);
        qr.back_substitute(&y)[cfg.deriv_order]
    };
    let re = coefficient(|z| z.re);
    let im = coefficient(|z| z.im);
    let factor = factorial(cfg.deriv_order) / scale.powi(cfg.deriv_order as i32);
    Ok(Complex64::new(re, im) * factor)
}

/// Precomputed linear weights for the r-th derivative at a fixed x0.
#[derive(Debug, Clone, PartialEq)]
pub struct SgFilter {
    pub start: usize,
    pub weights: Vec<f64>,
    pub n_samples: usize,
}

impl SgFilter {
    pub fn new(xs: &[f64], x0: f64, cfg: &SGConfig) -> Result<Self> {
        check_abscissae(xs, cfg)?;
        let (start, ts, scale) = window_coordinates(xs, x0, cfg.window);
        let cols = cfg.degree + 1;
        let qr = Qr::new(cfg.window, cols, design(&ts, cfg.degree, scale));
        qr.check_rank()?;
        // β_r = e_rᵀ R⁻¹ Qᵀ y, so the weights are Q [R⁻ᵀ e_r; 0].
        let mut z = vec![0.0; cfg.window];
        for i in 0..cols {
            let rhs = if i == cfg.deriv_order { 1.0 } else { 0.0 };
            let s: f64 = (0..i).map(|j| qr.r(j, i) * z[j]).sum();
            z[i] = (rhs - s) / qr.r(i, i);
        }
        qr.apply_q(&mut z);
        let factor = factorial(cfg.deriv_order) / scale.powi(cfg.deriv_order as i32);
        let weights = z.into_iter().map(|w| w * factor).collect();
        Ok(SgFilter { start, weights, n_samples: xs.len() })
    }

    pub fn apply(&self, ys: &[Complex64]) -> Result<Complex64> {
        if ys.len() != self.n_samples {
            return Err(Error::Shape(format!("{} samples for a filter built on {}", ys.len(), self.n_samples)));
        }
        Ok(self.weights.iter().zip(&ys[self.start..]).map(|(w, y)| *w * y).sum())
    }

    /// ℓ₂ norm of the weights: output noise std per unit input noise std.
    pub fn noise_gain(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Noise gain of the estimator at the center of a full uniform window.
pub fn sg_noise_gain(cfg: &SGConfig, spacing: f64) -> Result<f64> {
    if !(spacing > 0.0) {
        return Err(Error::Config(format!("sample spacing must be positive, got {spacing}")));
    }
    let m = (cfg.window / 2) as f64;
    let xs: Vec<f64> = (0..cfg.window).map(|i| (i as f64 - m) * spacing).collect();
    Ok(SgFilter::new(&xs, 0.0, cfg)?.noise_gain())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid64() -> Vec<f64> {
        (0..64).map(|i| -2.0 + 4.0 * i as f64 / 63.0).collect()
    }

    fn sampled(xs: &[f64], f: impl Fn(f64) -> Complex64) -> Vec<(f64, Complex64)> {
        xs.iter().map(|&x| (x, f(x))).collect()
    }

    fn cfg(window: usize, degree: usize, r: usize) -> SGConfig {
        SGConfig { window, degree, deriv_order: r }
    }

    #[test]
    fn constant_has_zero_second_derivative() {
        let s = sampled(&grid64(), |_| Complex64::new(3.7, -1.0));
        let d = sg_derivative_at(&s, 0.0, &SGConfig::default()).unwrap();
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn quadratic_second_derivative_exact() {
        for window in [5, 11, 25, 51, 63] {
            let s = sampled(&grid64(), |x| Complex64::new(3.0 * x * x + x, 0.0));
            let d = sg_derivative_at(&s, 0.0, &cfg(window, 2, 2)).unwrap();
            assert!((d.re - 6.0).abs() <= 6e-8, "window {window}: {d}");
        }
    }

    #[test]
    fn quartic_second_derivative_at_off_grid_origin() {
        let s = sampled(&grid64(), |x| Complex64::new(5.0 * x.powi(4) - 3.0 * x * x + 2.0 * x, 0.0));
        let d = sg_derivative_at(&s, 0.0, &SGConfig::default()).unwrap();
        assert!((d.re + 6.0).abs() <= 6e-8);
        assert!(d.im.abs() < 1e-12);
    }

    #[test]
    fn exponential_matches_exact_moment_projection() {
        // Oracle: the same least-squares fit assembled from the normal
        // equations with exact samples of e^x, solved by Gaussian elimination.
        let xs = grid64();
        let c = SGConfig::default();
        let s = sampled(&xs, |x| Complex64::new(x.exp(), 0.0));
        let got = sg_derivative_at(&s, 0.0, &c).unwrap().re;
        let start = window_start(&xs, 0.0, c.window);
        let ts = &xs[start..start + c.window];
        let n = c.degree + 1;
        let mut m = vec![vec![0.0; n + 1]; n];
        for &t in ts {
            for i in 0..n {
                for j in 0..n {
                    m[i][j] += t.powi((i + j) as i32);
                }
                m[i][n] += t.powi(i as i32) * t.exp();
            }
        }
        for k in 0..n {
            let p = (k..n).max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs())).unwrap();
            m.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut beta = vec![0.0; n];
        for i in (0..n).rev() {
            beta[i] = (m[i][n] - (i + 1..n).map(|j| m[i][j] * beta[j]).sum::<f64>()) / m[i][i];
        }
        let oracle = 2.0 * beta[2];
        assert!((got - oracle).abs() < 1e-8 * oracle.abs());
        // The truncation bias of a quartic fit over half-width ~1.6 is small but visible.
        assert!((got - 1.0).abs() < 0.05);
    }

    #[test]
    fn window_larger_than_sample_count_is_config_error() {
        let s = sampled(&grid64()[..40], |x| Complex64::new(x, 0.0));
        assert!(matches!(sg_derivative_at(&s, 0.0, &SGConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(cfg(50, 4, 2).validate().is_err());
        assert!(cfg(5, 5, 2).validate().is_err());
        assert!(cfg(5, 1, 2).validate().is_err());
        assert!(cfg(5, 4, 2).validate().is_ok());
    }

    #[test]
    fn rank_deficient_window_is_conditioning_error() {
        // Three distinct abscissae cannot determine a quadratic after
        // duplicates are removed, so force near-duplicates.
        let xs = [0.0, 1e-9, 2e-9, 1.0, 1.0 + 1e-9];
        let s = sampled(&xs, |x| Complex64::new(x, 0.0));
        assert!(matches!(sg_derivative_at(&s, 0.5, &cfg(5, 4, 2)), Err(Error::Conditioning(_))));
    }

    #[test]
    fn moving_average_gain() {
        for m in [1usize, 5, 25] {
            let g = sg_noise_gain(&cfg(2 * m + 1, 0, 0), 0.1).unwrap();
            assert!((g - 1.0 / ((2 * m + 1) as f64).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn gain_scales_with_inverse_spacing_squared() {
        let c = SGConfig::default();
        let a = sg_noise_gain(&c, 4.0 / 63.0).unwrap();
        let b = sg_noise_gain(&c, 2.0 / 63.0).unwrap();
        assert!((b / a - 4.0).abs() < 4e-8);
    }

    #[test]
    fn gain_matches_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let c = SGConfig::default();
        let spacing = 4.0 / 63.0;
        let gain = sg_noise_gain(&c, spacing).unwrap();
        assert!(gain.is_finite() && gain > 0.0);
        let m = (c.window / 2) as f64;
        let xs: Vec<f64> = (0..c.window).map(|i| (i as f64 - m) * spacing).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let s: Vec<(f64, Complex64)> =
                xs.iter().map(|&x| (x, Complex64::new(StandardNormal.sample(&mut rng), 0.0))).collect();
            acc += sg_derivative_at(&s, 0.0, &c).unwrap().re.powi(2);
        }
        let std = (acc / trials as f64).sqrt();
        assert!((std / gain - 1.0).abs() < 0.05, "empirical {std}, predicted {gain}");
    }

    proptest! {
        #[test]
        fn polynomial_exactness(coef in prop::collection::vec(-3.0f64..3.0, 5), x0 in -1.0f64..1.0) {
            let xs = grid64();
            let p = |x: f64| coef.iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum::<f64>();
            let d2 = |x: f64| (2..5).map(|k| coef[k] * (k * (k - 1)) as f64 * x.powi(k as i32 - 2)).sum::<f64>();
            let s = sampled(&xs, |x| Complex64::new(p(x), -p(x)));
            let d = sg_derivative_at(&s, x0, &SGConfig::default()).unwrap();
            let exact = d2(x0);
            let scale = exact.abs().max(coef.iter().fold(0.0f64, |m, c| m.max(c.abs())));
            prop_assert!((d.re - exact).abs() <= 1e-8 * scale);
            prop_assert!((d.im + exact).abs() <= 1e-8 * scale);
        }

        #[test]
        fn linear_and_conjugation_equivariant(
            y1 in prop::collection::vec(-1.0f64..1.0, 64),
            y2 in prop::collection::vec(-1.0f64..1.0, 64),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let xs = grid64();
            let c = SGConfig::default();
            let s1: Vec<_> = xs.iter().zip(&y1).map(|(&x, &y)| (x, Complex64::new(y, 0.5 * y))).collect();
            let s2: Vec<_> = xs.iter().zip(&y2).map(|(&x, &y)| (x, Complex64::new(-y, y))).collect();
            let mix: Vec<_> = s1.iter().zip(&s2).map(|(p, q)| (p.0, a * p.1 + b * q.1)).collect();
            let d1 = sg_derivative_at(&s1, 0.0, &c).unwrap();
            let d2 = sg_derivative_at(&s2, 0.0, &c).unwrap();
            let dm = sg_derivative_at(&mix, 0.0, &c).unwrap();
            let expected = a * d1 + b * d2;
            prop_assert!((dm - expected).norm() <= 1e-12 * (1.0 + expected.norm()) * 100.0);
            let conj: Vec<_> = s1.iter().map(|p| (p.0, p.1.conj())).collect();
            let dc = sg_derivative_at(&conj, 0.0, &c).unwrap();
            prop_assert!((dc - d1.conj()).norm() <= 1e-12 * (1.0 + d1.norm()));
        }

        #[test]
        fn fir_weights_match_direct_fit(y in prop::collection::vec(-1.0f64..1.0, 64), x0 in -0.5f64..0.5) {
            let xs = grid64();
            let c = SGConfig::default();
            let ys: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, v * v)).collect();
            let s: Vec<_> = xs.iter().copied().zip(ys.iter().copied()).collect();
            let direct = sg_derivative_at(&s, x0, &c).unwrap();
            let fir = SgFilter::new(&xs, x0, &c).unwrap().apply(&ys).unwrap();
            prop_assert!((direct - fir).norm() <= 1e-10 * direct.norm().max(1.0));
        }
    }
}
