//! Log-domain arithmetic for quantities that leave the `f64` range.
//!
//! Boltzmann weights `theta^(2^p)` reach `exp(±2600)` inside the parameter
//! ranges of interest, so sums and ratios of weights are formed on
//! logarithms and only the final, bounded result is exponentiated.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// `ln(sum(exp(terms)))`. Entries equal to `-inf` contribute nothing; an
/// empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + s.ln()
}

/// `ln(1 - exp(a))` for `a <= 0`.
pub fn ln_one_minus_exp(a: f64) -> f64 {
    debug_assert!(a <= 0.0 || a.is_nan());
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

/// A real number stored as `sign * exp(ln_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    sign: i8,
    ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLog = SignedLog { sign: 1, ln_abs: 0.0 };

    /// Positive number `exp(ln)`.
    pub fn exp(ln: f64) -> Self {
        if ln == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog { sign: 1, ln_abs: ln }
        }
    }

    pub fn from_f64(v: f64) -> Self {
        match v.partial_cmp(&0.0) {
            Some(Ordering::Greater) => SignedLog { sign: 1, ln_abs: v.ln() },
            Some(Ordering::Less) => SignedLog { sign: -1, ln_abs: (-v).ln() },
            _ => Self::ZERO,
        }
    }

    /// `exp(a) - exp(b)` without forming either exponential.
    pub fn diff_exp(a: f64, b: f64) -> Self {
        if a == b {
            return Self::ZERO;
        }
        let (hi, lo, sign) = if a > b { (a, b, 1) } else { (b, a, -1) };
        if hi == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        SignedLog {
            sign,
            ln_abs: hi + ln_one_minus_exp(lo - hi),
        }
    }

    /// Sum of positive terms given by their logarithms.
    pub fn sum_exp(lns: &[f64]) -> Self {
        Self::exp(log_sum_exp(lns))
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn ln_abs(&self) -> f64 {
        self.ln_abs
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn abs(self) -> Self {
        if self.sign == 0 {
            self
        } else {
            SignedLog { sign: 1, ..self }
        }
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.sign) * self.ln_abs.exp()
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;
    fn neg(self) -> SignedLog {
        SignedLog { sign: -self.sign, ..self }
    }
}

impl Mul for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: SignedLog) -> SignedLog {
        if self.sign == 0 || rhs.sign == 0 {
            return Self::ZERO;
        }
        SignedLog {
            sign: self.sign * rhs.sign,
            ln_abs: self.ln_abs + rhs.ln_abs,
        }
    }
}

impl Div for SignedLog {
    type Output = SignedLog;
    fn div(self, rhs: SignedLog) -> SignedLog {
        assert!(rhs.sign != 0, "SignedLog division by zero");
        if self.sign == 0 {
            return Self::ZERO;
        }
        SignedLog {
            sign: self.sign * rhs.sign,
            ln_abs: self.ln_abs - rhs.ln_abs,
        }
    }
}

impl Add for SignedLog {
    type Output = SignedLog;
    fn add(self, rhs: SignedLog) -> SignedLog {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        if self.sign == rhs.sign {
            let ln_abs = log_sum_exp(&[self.ln_abs, rhs.ln_abs]);
            return SignedLog { sign: self.sign, ln_abs };
        }
        let d = SignedLog::diff_exp(self.ln_abs, rhs.ln_abs);
        SignedLog {
            sign: d.sign * self.sign,
            ln_abs: d.ln_abs,
        }
    }
}

impl Sub for SignedLog {
    type Output = SignedLog;
    fn sub(self, rhs: SignedLog) -> SignedLog {
        self + (-rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_neg_infinity_and_large_arguments() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let v = log_sum_exp(&[0.0, f64::NEG_INFINITY]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ln_one_minus_exp_both_branches() {
        for &a in &[-1e-10, -0.1, -0.5, -1.0, -5.0, -40.0] {
            let direct = (1.0 - f64::exp(a)).ln();
            let v = ln_one_minus_exp(a);
            assert!((v - direct).abs() <= 1e-6 * direct.abs() + 1e-15, "{a}");
        }
        assert!((ln_one_minus_exp(-1e-20) - (1e-20f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn signed_arithmetic_matches_f64() {
        let vals = [-3.5, -0.25, 0.0, 0.125, 2.0, 7.75];
        for &a in &vals {
            for &b in &vals {
                let (sa, sb) = (SignedLog::from_f64(a), SignedLog::from_f64(b));
                assert!(((sa + sb).to_f64() - (a + b)).abs() < 1e-12, "{a}+{b}");
                assert!(((sa - sb).to_f64() - (a - b)).abs() < 1e-12, "{a}-{b}");
                assert!(((sa * sb).to_f64() - a * b).abs() < 1e-12, "{a}*{b}");
                if b != 0.0 {
                    assert!(((sa / sb).to_f64() - a / b).abs() < 1e-12, "{a}/{b}");
                }
            }
        }
    }

    #[test]
    fn diff_exp_beyond_f64_range() {
        // e^2000 - e^1999 = e^1999 (e - 1)
        let d = SignedLog::diff_exp(2000.0, 1999.0);
        assert_eq!(d.sign(), 1);
        assert!((d.ln_abs() - (1999.0 + (std::f64::consts::E - 1.0).ln())).abs() < 1e-12);
        assert!(SignedLog::diff_exp(3.0, 3.0).is_zero());
        assert_eq!(SignedLog::diff_exp(0.0, 1.0).sign(), -1);
    }
}
