//! Calderón exponentials and the paired boundary data f± = v1 ± v2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible |ξ| = |ζ|.
pub const STABILITY_BOUND: f64 = 10.0;

/// Frequency ξ with ζ = ξ rotated by +90°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub xi: [f64; 2],
    pub zeta: [f64; 2],
}

pub fn make_frequency_point(xi: [f64; 2]) -> Result<FrequencyPoint> {
    let norm = xi[0].hypot(xi[1]);
    if !norm.is_finite() || norm > STABILITY_BOUND {
        return Err(Error::Stability { norm, bound: STABILITY_BOUND });
    }
    Ok(FrequencyPoint { xi, zeta: [-xi[1], xi[0]] })
}

/// 4·e^{−2|ζ|}: the smallest value of 4e^{−2|ζ·x|} over the unit disk.
pub fn cancellation_margin(fp: &FrequencyPoint) -> f64 {
    4.0 * (-2.0 * fp.zeta[0].hypot(fp.zeta[1])).exp()
}

/// Which of f₊ = v1 + v2 and f₋ = v1 − v2 is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// v1 = ½e^{(−ζ−iξ)·x/2}, v2 = ½e^{(ζ−iξ)·x/2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalderonPair {
    pub fp: FrequencyPoint,
}

impl CalderonPair {
    pub fn new(fp: FrequencyPoint) -> Self {
        CalderonPair { fp }
    }

    fn phases(&self, x: [f64; 2]) -> (f64, f64) {
        let s = 0.5 * (self.fp.zeta[0] * x[0] + self.fp.zeta[1] * x[1]);
        let t = -0.5 * (self.fp.xi[0] * x[0] + self.fp.xi[1] * x[1]);
        (s, t)
    }

    pub fn v1(&self, x: [f64; 2]) -> Complex64 {
        let (s, t) = self.phases(x);
        Complex64::from_polar(0.5 * (-s).exp(), t)
    }

    pub fn v2(&self, x: [f64; 2]) -> Complex64 {
        let (s, t) = self.phases(x);
        Complex64::from_polar(0.5 * s.exp(), t)
    }

    pub fn f(&self, sign: Sign, x: [f64; 2]) -> Complex64 {
        self.v1(x) + sign.factor() * self.v2(x)
    }

    pub fn f_plus(&self, x: [f64; 2]) -> Complex64 {
        self.f(Sign::Plus, x)
    }

    pub fn f_minus(&self, x: [f64; 2]) -> Complex64 {
        self.f(Sign::Minus, x)
    }
}
