use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Value of the I-divergence `D(P || Q)`.
///
/// `+inf` marks a `Q` that vanishes where `P` has mass; it is a regular value
/// so traces containing it stay inspectable.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Divergence(f64);

impl Divergence {
    pub const ZERO: Divergence = Divergence(0.0);
    pub const INFINITE: Divergence = Divergence(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

impl From<Divergence> for f64 {
    fn from(d: Divergence) -> f64 {
        d.0
    }
}

/// `p log(p / q) - p + q`, with `0 log 0 = 0`.
///
/// Near `p == q` the direct formula cancels badly, so it is evaluated as
/// `q * phi(r)` with `r = (p - q) / q` and
/// `phi(r) = (1 + r) ln(1 + r) - r = sum_{k >= 2} (-1)^k r^k / (k (k - 1))`.
#[inline]
pub fn divergence_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return q;
    }
    if q == 0.0 {
        return f64::INFINITY;
    }
    let r = (p - q) / q;
    if r.abs() < 0.1 {
        // 22 terms: truncation below 1e-22 relative to r^2
        let mut sum = 0.0;
        let mut power = r * r;
        for k in 2..24 {
            let kf = k as f64;
            sum += power / (kf * (kf - 1.0));
            power *= -r;
        }
        q * sum
    } else {
        p * (p / q).ln() - p + q
    }
}

/// Sum of [`divergence_term`] over paired entries, without shape checks.
pub(crate) fn divergence_slices(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| divergence_term(a, b)).sum()
}

/// `D(P || Q) = sum_ij (P_ij log(P_ij / Q_ij) - P_ij + Q_ij)`.
pub fn divergence(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Divergence> {
    if p.shape() != q.shape() {
        return Err(Error::Shape(format!("divergence between {:?} and {:?} matrices", p.shape(), q.shape())));
    }
    Ok(Divergence(divergence_slices(p.as_slice(), q.as_slice())))
}
