use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::SignedLog;

/// Model parameters: coupling `theta = exp(J)`, interaction exponent `p`,
/// tree order `k` and highest spin value `m` (spins are `0..=m`).
///
/// The dominant weight `theta^(2^p)` is kept as its logarithm
/// `2^p * ln(theta)`. The plain value `theta_pow` underflows to `0` for
/// `theta < 1` and overflows to `+inf` for `theta > 1` once the exponent
/// passes roughly `±709`; every computation in this crate that can reach
/// that regime works from `ln_theta_pow` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: f64,
    pub p: f64,
    pub k: u32,
    pub m: u32,
    ln_theta: f64,
    ln_theta_pow: f64,
    theta_pow: f64,
}

impl ModelParams {
    /// Binary tree, three spin states.
    pub fn new(theta: f64, p: f64) -> Result<Self> {
        Self::with_tree(theta, p, 2, 2)
    }

    pub fn with_tree(theta: f64, p: f64, k: u32, m: u32) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Domain(format!("theta must be positive and finite, got {theta}")));
        }
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Domain(format!("p must be positive and finite, got {p}")));
        }
        if k < 1 || m < 1 {
            return Err(Error::Domain(format!("need k >= 1 and m >= 1, got k = {k}, m = {m}")));
        }
        let ln_theta = theta.ln();
        let ln_theta_pow = p.exp2() * ln_theta;
        Ok(ModelParams {
            theta,
            p,
            k,
            m,
            ln_theta,
            ln_theta_pow,
            theta_pow: ln_theta_pow.exp(),
        })
    }

    pub fn ln_theta(&self) -> f64 {
        self.ln_theta
    }

    /// `theta^(2^p)`, possibly `0` or `+inf` (see type docs).
    pub fn theta_pow(&self) -> f64 {
        self.theta_pow
    }

    pub fn ln_theta_pow(&self) -> f64 {
        self.ln_theta_pow
    }

    /// `1 - theta^(2^p)` with full relative accuracy near `theta = 1`.
    pub fn one_minus_theta_pow(&self) -> f64 {
        -self.ln_theta_pow.exp_m1()
    }

    /// `1 - theta^(2^p)` as a signed log, valid at any magnitude.
    pub fn one_minus_theta_pow_log(&self) -> SignedLog {
        SignedLog::diff_exp(0.0, self.ln_theta_pow)
    }

    /// `ln(theta^(d^p))`: log of the Boltzmann weight of a spin difference `d`.
    pub fn ln_weight(&self, d: u32) -> f64 {
        if d == 0 {
            0.0
        } else {
            f64::from(d).powf(self.p) * self.ln_theta
        }
    }

    pub fn is_binary(&self) -> bool {
        self.k == 2 && self.m == 2
    }

    pub(crate) fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "closed-form analysis needs k = m = 2, got k = {}, m = {}",
                self.k, self.m
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(-1.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0).is_err());
        assert!(ModelParams::with_tree(0.5, 1.0, 0, 2).is_err());
        assert!(ModelParams::with_tree(0.5, 1.0, 2, 0).is_err());
    }

    #[test]
    fn theta_pow_matches_direct_power_in_range() {
        for &(t, p) in &[(0.5, 1.0), (0.3, 0.1), (1.7, 2.5), (0.9, 3.0)] {
            let mp = ModelParams::new(t, p).unwrap();
            let direct = t.powf(p.exp2());
            assert!((mp.theta_pow() - direct).abs() <= 4.0 * f64::EPSILON * direct);
        }
    }

    #[test]
    fn theta_pow_saturates() {
        let small = ModelParams::new(0.3, 10.0).unwrap();
        assert_eq!(small.theta_pow(), 0.0);
        assert!((small.ln_theta_pow() - 1024.0 * 0.3f64.ln()).abs() < 1e-9);
        assert_eq!(small.one_minus_theta_pow(), 1.0);
        let big = ModelParams::new(2.5, 10.0).unwrap();
        assert_eq!(big.theta_pow(), f64::INFINITY);
        let q = big.one_minus_theta_pow_log();
        assert_eq!(q.sign(), -1);
        assert!((q.ln_abs() - 1024.0 * 2.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn theta_one_is_neutral() {
        let mp = ModelParams::new(1.0, 7.3).unwrap();
        assert_eq!(mp.theta_pow(), 1.0);
        assert_eq!(mp.one_minus_theta_pow(), 0.0);
        assert_eq!(mp.ln_weight(2), 0.0);
    }
}
