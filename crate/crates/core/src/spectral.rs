//! Transition kernel of the tree-indexed Markov chain attached to a
//! boundary law, its spectrum and the Kesten-Stigum test.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::LawPoint;
use crate::logspace::{log_sum_exp, SignedLog};
use crate::params::ModelParams;

/// Row sums of the unnormalized-by-row form may differ from 1 by this much
/// before the input is rejected as a non-solution.
pub const STOCHASTICITY_TOL: f64 = 1e-9;

/// Non-unit eigenvalues of a 3x3 stochastic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// For a complex pair, the common real part.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Imaginary part of `lambda1` (and minus that of `lambda2`); zero for
    /// a real spectrum.
    pub imag: f64,
    pub lambda_max: f64,
}

impl Spectrum {
    pub fn is_complex(&self) -> bool {
        self.imag != 0.0
    }

    pub fn values(&self) -> [Complex<f64>; 2] {
        [
            Complex::new(self.lambda1, self.imag),
            Complex::new(self.lambda2, -self.imag),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    pub matrix: [[f64; 3]; 3],
    /// Log row normalizers `ln Z_i` when built from a boundary law.
    pub ln_z: Option<[f64; 3]>,
    pub spectrum: Spectrum,
}

impl TransitionKernel {
    pub fn lambda1(&self) -> f64 {
        self.spectrum.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.spectrum.lambda2
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.lambda_max
    }

    /// Kernel from an arbitrary row-stochastic matrix.
    pub fn from_matrix(matrix: [[f64; 3]; 3]) -> Result<Self> {
        for (i, row) in matrix.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain(format!("row {i} has an entry outside [0, 1]")));
            }
            let defect = row.iter().sum::<f64>() - 1.0;
            if defect.abs() > STOCHASTICITY_TOL {
                return Err(Error::StochasticityViolation { row: i, defect });
            }
        }
        let q = |i: usize, j: usize| SignedLog::from_f64(matrix[i][j] - matrix[2][j]);
        let spectrum = quotient_spectrum([[q(0, 0), q(0, 1)], [q(1, 0), q(1, 1)]]);
        Ok(TransitionKernel {
            matrix,
            ln_z: None,
            spectrum,
        })
    }
}

/// Eigenvalues of the 2x2 matrix `A_ij = P_ij - P_2j`, which carries the
/// spectrum of `P` once the eigenvalue 1 is removed.
fn quotient_spectrum(a: [[SignedLog; 2]; 2]) -> Spectrum {
    let [[a00, a01], [a10, a11]] = a;
    if a01.is_zero() || a10.is_zero() {
        let (l1, l2) = (a11.to_f64(), a00.to_f64());
        return Spectrum {
            lambda1: l1,
            lambda2: l2,
            imag: 0.0,
            lambda_max: l1.abs().max(l2.abs()),
        };
    }
    let two = SignedLog::from_f64(2.0);
    let four = SignedLog::from_f64(4.0);
    let tr = a00 + a11;
    let det = a00 * a11 - a01 * a10;
    let diff = a00 - a11;
    let disc = diff * diff + four * a01 * a10;
    if disc.sign() >= 0 {
        let sq = SignedLog::exp(0.5 * disc.ln_abs());
        let sq = if disc.is_zero() { SignedLog::ZERO } else { sq };
        let r1 = if tr.sign() >= 0 { (tr + sq) / two } else { (tr - sq) / two };
        let r2 = if r1.is_zero() { SignedLog::ZERO } else { det / r1 };
        let (r1, r2) = (r1.to_f64(), r2.to_f64());
        let (l1, l2) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
        Spectrum {
            lambda1: l1,
            lambda2: l2,
            imag: 0.0,
            lambda_max: l1.abs().max(l2.abs()),
        }
    } else {
        let re = (tr / two).to_f64();
        let im = (0.5 * (0.5 * disc.ln_abs()).exp()).max(f64::MIN_POSITIVE);
        Spectrum {
            lambda1: re,
            lambda2: re,
            imag: im,
            lambda_max: (0.5 * det.ln_abs()).exp(),
        }
    }
}

struct LogRows {
    /// `ln` of the unnormalized weights, row `i` = `theta^(|i-j|^p) z_j`.
    w: [[f64; 3]; 3],
    ln_z: [f64; 3],
}

fn log_rows(ln_x: f64, ln_y: f64, params: &ModelParams) -> LogRows {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let (lx2, ly2) = (2.0 * ln_x, 2.0 * ln_y);
    let w = [
        [lx2, lt + ly2, lp],
        [lt + lx2, ly2, lt],
        [lp + lx2, lt + ly2, 0.0],
    ];
    let ln_z = [log_sum_exp(&w[0]), log_sum_exp(&w[1]), log_sum_exp(&w[2])];
    LogRows { w, ln_z }
}

/// The kernel written with the common normalizer `Z = T x^2 + theta y^2 + 1`,
/// which is stochastic only at a solution of the law equations.
pub fn kernel_common_normalizer_form(point: &LawPoint, params: &ModelParams) -> [[f64; 3]; 3] {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let (lx, ly) = (point.ln_x, point.ln_y);
    let ln_z = log_sum_exp(&[lp + 2.0 * lx, lt + 2.0 * ly, 0.0]);
    let e = |v: f64| (v - ln_z).exp();
    [
        [e(lx), e(lt + 2.0 * ly - lx), e(lp - lx)],
        [e(lt + 2.0 * lx - ly), e(ly), e(lt - ly)],
        [e(lp + 2.0 * lx), e(lt + 2.0 * ly), e(0.0)],
    ]
}

/// Transition kernel of the splitting Gibbs measure with boundary law
/// `(x^2, y^2, 1)`.
pub fn build_kernel(point: &LawPoint, params: &ModelParams) -> Result<TransitionKernel> {
    params.require_binary()?;
    if !(point.ln_x.is_finite() && point.ln_y.is_finite()) {
        return Err(Error::Domain(format!(
            "boundary law needs finite logarithms, got ln x = {}, ln y = {}",
            point.ln_x, point.ln_y
        )));
    }
    let rows = log_rows(point.ln_x, point.ln_y, params);
    // common-normalizer rows sum to Z_i / (x Z_2), Z_i / (y Z_2) and 1
    let defects = [
        rows.ln_z[0] - point.ln_x - rows.ln_z[2],
        rows.ln_z[1] - point.ln_y - rows.ln_z[2],
    ];
    for (row, d) in defects.iter().enumerate() {
        let defect = d.exp_m1();
        if !(defect.abs() <= STOCHASTICITY_TOL) {
            return Err(Error::StochasticityViolation { row, defect });
        }
    }

    let mut matrix = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            matrix[i][j] = (rows.w[i][j] - rows.ln_z[i]).exp();
        }
    }

    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let (lx2, ly2) = (2.0 * point.ln_x, 2.0 * point.ln_y);
    let one_minus_t = params.one_minus_theta_pow_log();
    let t2_minus_t = SignedLog::diff_exp(2.0 * lt, lp);
    let one_minus_t2 = SignedLog::diff_exp(0.0, 2.0 * lt);
    let x2_minus_1 = SignedLog::diff_exp(lx2, 0.0);
    let z02 = rows.ln_z[0] + rows.ln_z[2];
    let z12 = rows.ln_z[1] + rows.ln_z[2];
    let e = SignedLog::exp;
    let a00 = e(lx2 - z02) * one_minus_t * SignedLog::sum_exp(&[lt + ly2, 0.0, lp]);
    let a01 = -(e(lt + ly2 - z02) * one_minus_t * x2_minus_1);
    let a10 = e(lx2 - z12) * (t2_minus_t * e(ly2) + e(lt) * one_minus_t);
    let a11 = e(ly2 - z12) * (one_minus_t2 - t2_minus_t * e(lx2));
    let spectrum = quotient_spectrum([[a00, a01], [a10, a11]]);

    Ok(TransitionKernel {
        matrix,
        ln_z: Some(rows.ln_z),
        spectrum,
    })
}

/// `(lambda1, lambda2)` of the kernel at `x = 1` in closed form.
pub fn closed_form_eigenvalues_x1(ln_y: f64, params: &ModelParams) -> (f64, f64) {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let ly2 = 2.0 * ln_y;
    let e = SignedLog::exp;
    // T - 2 theta^2 + 1
    let num1 = SignedLog::sum_exp(&[lp, 0.0]) - e(std::f64::consts::LN_2 + 2.0 * lt);
    let den1 = log_sum_exp(&[
        lt + 2.0 * ly2,
        log_sum_exp(&[lp, std::f64::consts::LN_2 + 2.0 * lt, 0.0]) + ly2,
        std::f64::consts::LN_2 + lt + log_sum_exp(&[lp, 0.0]),
    ]);
    let l1 = num1 * e(ly2 - den1);
    let l2 = params.one_minus_theta_pow_log() / e(log_sum_exp(&[lp, lt + ly2, 0.0]));
    (l1.to_f64(), l2.to_f64())
}

/// `|det(lambda I - P)|` at `1`, `lambda1` and `lambda2`.
pub fn characteristic_residuals(kernel: &TransitionKernel) -> [f64; 3] {
    let p = &kernel.matrix;
    let tr = p[0][0] + p[1][1] + p[2][2];
    let minor = |i: usize, j: usize| p[i][i] * p[j][j] - p[i][j] * p[j][i];
    let c2 = minor(0, 1) + minor(0, 2) + minor(1, 2);
    let det = p[0][0] * (p[1][1] * p[2][2] - p[1][2] * p[2][1])
        - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0])
        + p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
    let chi = |l: Complex<f64>| ((l - tr) * l + c2) * l - det;
    let [l1, l2] = kernel.spectrum.values();
    [chi(Complex::new(1.0, 0.0)).norm(), chi(l1).norm(), chi(l2).norm()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSReport {
    pub k: u32,
    pub lambda_max: f64,
    /// `k lambda_max^2 - 1`.
    pub eta: f64,
    pub ks_nonextremal: bool,
}

pub fn kesten_stigum(kernel: &TransitionKernel, k: u32) -> Result<KSReport> {
    if k < 1 {
        return Err(Error::Domain("tree order k must be at least 1".into()));
    }
    let lm = kernel.lambda_max();
    let eta = f64::from(k) * lm * lm - 1.0;
    Ok(KSReport {
        k,
        lambda_max: lm,
        eta,
        ks_nonextremal: eta > 0.0,
    })
}
