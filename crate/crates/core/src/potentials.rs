//! Test potentials and their Fourier transforms by Gauss-Legendre quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier_op::PixelGrid;
use crate::quadrature::gauss_legendre_interval;

/// Spatial potential q(x). Indicator kinds take values in {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialField {
    /// Smooth compactly supported bump of radius `d` centered at (x0, y0).
    Bump { x0: f64, y0: f64, d: f64 },
    /// Bump at (x0, y0) plus a half-height bump at (-2x0, -y0).
    TwoBumps { x0: f64, y0: f64, d: f64 },
    /// Indicator of the open annulus r_in < |x| < r_out.
    Ring { r_in: f64, r_out: f64 },
    /// Indicator of |x| < r0 + a·cos(k·atan2(y, x)).
    Star { r0: f64, a: f64, k: u32 },
    Constant { value: f64 },
}

/// Bump profile exp(1/(|s|² - 1) + 1) for |s| < 1, zero otherwise.
fn bump_profile(s2: f64) -> f64 {
    if s2 < 1.0 {
        (1.0 / (s2 - 1.0) + 1.0).exp()
    } else {
        0.0
    }
}

fn bump(x: [f64; 2], x0: f64, y0: f64, d: f64) -> f64 {
    let dx = (x[0] - x0) / d;
    let dy = (x[1] - y0) / d;
    bump_profile(dx * dx + dy * dy)
}

impl PotentialField {
    /// Example-1 centered bump q(x, y; 0, 0, 0.4).
    pub fn centered_bump() -> Self {
        PotentialField::Bump { x0: 0.0, y0: 0.0, d: 0.4 }
    }

    pub fn evaluate(&self, x: [f64; 2]) -> f64 {
        match *self {
            PotentialField::Bump { x0, y0, d } => bump(x, x0, y0, d),
            PotentialField::TwoBumps { x0, y0, d } => {
                bump(x, x0, y0, d) + 0.5 * bump(x, -2.0 * x0, -y0, d)
            }
            PotentialField::Ring { r_in, r_out } => {
                let r = x[0].hypot(x[1]);
                if r_in < r && r < r_out {
                    1.0
                } else {
                    0.0
                }
            }
            PotentialField::Star { r0, a, k } => {
                let r = x[0].hypot(x[1]);
                let theta = x[1].atan2(x[0]);
                if r < r0 + a * (k as f64 * theta).cos() {
                    1.0
                } else {
                    0.0
                }
            }
            PotentialField::Constant { value } => value,
        }
    }

    /// Upper bound on the supremum norm.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            PotentialField::Bump { .. } | PotentialField::Ring { .. } | PotentialField::Star { .. } => 1.0,
            PotentialField::TwoBumps { .. } => 1.5,
            PotentialField::Constant { value } => value.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialField::Constant { value } if *value == 0.0)
    }

    /// Sample on the centers of the kept pixels of `grid`.
    pub fn sample_on(&self, grid: &PixelGrid) -> Vec<f64> {
        grid.centers.iter().map(|c| self.evaluate(*c)).collect()
    }

    /// Piecewise-constant 0/1 potentials (ring, star).
    pub fn is_indicator(&self) -> bool {
        matches!(self, PotentialField::Ring { .. } | PotentialField::Star { .. })
    }
}

/// Oracle value with its self-convergence estimate.
#[derive(Debug, Clone)]
pub struct OracleValue {
    pub value: Complex64,
    /// Relative change between the two finest orders.
    pub rel_change: f64,
    pub warning: Option<String>,
}

/// ∫_Ω q(x) e^{-iξ·x} dx, with the precision warning attached when the
/// value is not converged across two doublings of `order`.
pub fn fourier_oracle(potential: &PotentialField, xi: [f64; 2], order: usize) -> OracleValue {
    let order = order.max(8);
    let tol = if potential.is_indicator() { 1e-4 } else { 1e-8 };
    let v1 = fourier_oracle_raw(potential, xi, order);
    let v2 = fourier_oracle_raw(potential, xi, 2 * order);
    let v4 = fourier_oracle_raw(potential, xi, 4 * order);
    let scale = v4.norm().max(1e-300);
    let rel_change = (v4 - v2).norm() / scale;
    let first = (v2 - v1).norm() / scale;
    let warning = (rel_change > tol && first > tol).then(|| {
        format!("oracle not converged at xi = ({:.3}, {:.3}): relative change {rel_change:.2e} > {tol:.0e}", xi[0], xi[1])
    });
    OracleValue { value: v4, rel_change, warning }
}

/// Single-order evaluation of the Fourier integral.
pub fn fourier_oracle_raw(potential: &PotentialField, xi: [f64; 2], order: usize) -> Complex64 {
    match *potential {
        PotentialField::Bump { x0, y0, d } => bump_transform(xi, x0, y0, d, order),
        PotentialField::TwoBumps { x0, y0, d } => {
            bump_transform(xi, x0, y0, d, order) + 0.5 * bump_transform(xi, -2.0 * x0, -y0, d, order)
        }
        PotentialField::Ring { r_in, r_out } => polar_transform(xi, order, |_| (r_in, r_out)),
        PotentialField::Star { r0, a, k } => {
            // Panels aligned with the lobes keep the angular integrand smooth per panel.
            star_transform(xi, order, r0, a, k)
        }
        PotentialField::Constant { value } => value * polar_transform(xi, order, |_| (0.0, 1.0)),
    }
}

/// Tensor Gauss-Legendre over the support square of the bump, split into
/// 4×4 panels so the flat edge of the profile is resolved.
fn bump_transform(xi: [f64; 2], x0: f64, y0: f64, d: f64, order: usize) -> Complex64 {
    const PANELS: usize = 4;
    let mut nodes = Vec::with_capacity(PANELS * order);
    let mut weights = Vec::with_capacity(PANELS * order);
    for p in 0..PANELS {
        let a = -1.0 + 2.0 * p as f64 / PANELS as f64;
        let b = a + 2.0 / PANELS as f64;
        let (x, w) = gauss_legendre_interval(order, a, b);
        nodes.extend(x);
        weights.extend(w);
    }
    // Separate phases so the inner loop only multiplies.
    let phase_x: Vec<Complex64> = nodes.iter().map(|s| Complex64::from_polar(1.0, -xi[0] * d * s)).collect();
    let phase_y: Vec<Complex64> = nodes.iter().map(|t| Complex64::from_polar(1.0, -xi[1] * d * t)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, s) in nodes.iter().enumerate() {
        let mut row = Complex64::new(0.0, 0.0);
        for (j, t) in nodes.iter().enumerate() {
            let v = bump_profile(s * s + t * t);
            if v != 0.0 {
                row += weights[j] * v * phase_y[j];
            }
        }
        acc += weights[i] * row * phase_x[i];
    }
    acc * d * d * Complex64::from_polar(1.0, -(xi[0] * x0 + xi[1] * y0))
}

/// ∫ over {r_lo(θ) < r < r_hi(θ)} in polar coordinates, θ split into 8 panels.
fn polar_transform(xi: [f64; 2], order: usize, radii: impl Fn(f64) -> (f64, f64)) -> Complex64 {
    polar_panels(xi, order, 8, radii)
}

fn star_transform(xi: [f64; 2], order: usize, r0: f64, a: f64, k: u32) -> Complex64 {
    let panels = (2 * k.max(1)) as usize;
    polar_panels(xi, order, panels, |theta| {
        (0.0, (r0 + a * (k as f64 * theta).cos()).max(0.0))
    })
}

fn polar_panels(
    xi: [f64; 2],
    order: usize,
    panels: usize,
    radii: impl Fn(f64) -> (f64, f64),
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let width = 2.0 * PI / panels as f64;
    let (unit, unit_w) = gauss_legendre_interval(order, 0.0, 1.0);
    for p in 0..panels {
        let lo = p as f64 * width;
        for (u, wu) in unit.iter().zip(&unit_w) {
            let theta = lo + u * width;
            let (r_lo, r_hi) = radii(theta);
            if r_hi <= r_lo {
                continue;
            }
            let k = xi[0] * theta.cos() + xi[1] * theta.sin();
            let len = r_hi - r_lo;
            let mut inner = Complex64::new(0.0, 0.0);
            for (t, w) in unit.iter().zip(&unit_w) {
                let r = r_lo + t * len;
                inner += w * r * Complex64::from_polar(1.0, -k * r);
            }
            acc += wu * width * len * inner;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_one_at_its_center_and_zero_on_support_edge() {
        let q = PotentialField::centered_bump();
        assert_eq!(q.evaluate([0.0, 0.0]), 1.0);
        assert_eq!(q.evaluate([0.4, 0.0]), 0.0);
        assert_eq!(q.evaluate([0.0, -0.5]), 0.0);
        assert!(q.evaluate([0.2, 0.0]) > 0.0);
    }

    #[test]
    fn ring_indicator_values() {
        let q = PotentialField::Ring { r_in: 0.3, r_out: 0.5 };
        assert_eq!(q.evaluate([0.4, 0.0]), 1.0);
        assert_eq!(q.evaluate([0.0, 0.2]), 0.0);
        assert_eq!(q.evaluate([0.0, 0.7]), 0.0);
    }

    #[test]
    fn star_is_branch_insensitive_across_negative_x_axis() {
        let q = PotentialField::Star { r0: 0.5, a: 0.2, k: 5 };
        // atan2 jumps from π to -π across the negative x-axis; cos(5θ) does not.
        let above = q.evaluate([-0.35, 1e-12]);
        let below = q.evaluate([-0.35, -1e-12]);
        assert_eq!(above, below);
        assert!(0.5 + 0.2f64.abs() < 1.0);
    }

    #[test]
    fn ring_transform_at_zero_is_annulus_area() {
        let q = PotentialField::Ring { r_in: 0.3, r_out: 0.5 };
        let v = fourier_oracle(&q, [0.0, 0.0], 16);
        assert!((v.value.re - 0.16 * PI).abs() < 1e-12);
        assert!(v.value.im.abs() < 1e-14);
        assert!(v.warning.is_none());
    }

    #[test]
    fn oracle_is_hermitian_for_real_potentials() {
        let kinds = [
            PotentialField::Bump { x0: 0.2, y0: 0.4, d: 0.4 },
            PotentialField::TwoBumps { x0: 0.2, y0: 0.4, d: 0.4 },
            PotentialField::Ring { r_in: 0.3, r_out: 0.5 },
            PotentialField::Star { r0: 0.5, a: 0.2, k: 5 },
        ];
        for q in kinds {
            let a = fourier_oracle_raw(&q, [1.3, -2.1], 24);
            let b = fourier_oracle_raw(&q, [-1.3, 2.1], 24);
            assert!((a - b.conj()).norm() < 1e-12, "{q:?}");
        }
    }

    #[test]
    fn shifted_bump_obeys_translation_rule() {
        let shifted = PotentialField::Bump { x0: 0.2, y0: 0.4, d: 0.4 };
        let centered = PotentialField::Bump { x0: 0.0, y0: 0.0, d: 0.4 };
        let xi = [1.0, 0.0];
        let a = fourier_oracle(&shifted, xi, 32).value;
        let b = fourier_oracle(&centered, xi, 32).value;
        let phase = Complex64::from_polar(1.0, -(xi[0] * 0.2 + xi[1] * 0.4));
        assert!((a - phase * b).norm() <= 1e-8);
        let zero = fourier_oracle(&shifted, [0.0, 0.0], 32).value;
        assert!(a.norm() / zero.norm() < 1.0);
    }

    #[test]
    fn smooth_oracle_converges_under_doubling() {
        let q = PotentialField::centered_bump();
        for xi in [[0.0, 0.0], [3.0, 4.0], [-5.0, 0.5]] {
            let v = fourier_oracle(&q, xi, 32);
            assert!(v.warning.is_none(), "{:?}", v.warning);
            assert!(v.rel_change <= 1e-8);
        }
    }

    #[test]
    fn centered_bump_transform_is_radial_and_real() {
        let q = PotentialField::centered_bump();
        let r = 2.5;
        let reference = fourier_oracle(&q, [r, 0.0], 32).value;
        assert!(reference.im.abs() < 1e-12);
        for angle in [0.3f64, 1.1, 2.0, 4.0] {
            let v = fourier_oracle(&q, [r * angle.cos(), r * angle.sin()], 32).value;
            assert!((v - reference).norm() <= 1e-8 * reference.norm().max(1.0));
        }
    }

    #[test]
    fn two_bumps_is_linear_combination_of_bumps() {
        let two = PotentialField::TwoBumps { x0: 0.2, y0: 0.4, d: 0.4 };
        let a = PotentialField::Bump { x0: 0.2, y0: 0.4, d: 0.4 };
        let b = PotentialField::Bump { x0: -0.4, y0: -0.4, d: 0.4 };
        let xi = [2.0, -1.0];
        let lhs = fourier_oracle_raw(&two, xi, 24);
        let rhs = fourier_oracle_raw(&a, xi, 24) + 0.5 * fourier_oracle_raw(&b, xi, 24);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn indicator_oracles_converge_to_1e4() {
        let star = PotentialField::Star { r0: 0.5, a: 0.2, k: 5 };
        let ring = PotentialField::Ring { r_in: 0.3, r_out: 0.5 };
        for xi in [[0.0, 0.0], [2.0, 1.0], [-4.0, 3.0]] {
            for q in [star, ring] {
                let v = fourier_oracle(&q, xi, 16);
                assert!(v.warning.is_none(), "{q:?} {:?}", v.warning);
            }
        }
        // Star area: π R0² + π a²/2.
        let area = fourier_oracle(&star, [0.0, 0.0], 16).value.re;
        assert!((area - (PI * 0.25 + PI * 0.04 / 2.0)).abs() < 1e-10);
    }
}
