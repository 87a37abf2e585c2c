//! Extremality of a translation-invariant measure: the contraction
//! coefficient `kappa` of its kernel, the bound on `gamma`, the indicator
//! `U = k |gamma_bound| kappa - 1` and the verdict combining it with the
//! Kesten-Stigum test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::LawPoint;
use crate::logspace::{log_sum_exp, SignedLog};
use crate::params::ModelParams;
use crate::spectral::{kesten_stigum, TransitionKernel};

/// Slack allowed when comparing brute-force maxima with the `gamma` bound.
pub const GAMMA_LEMMA_SLACK: f64 = 1e-9;

/// `(1/2) max_{i,j} sum_l |P_il - P_jl|`.
pub fn kappa(kernel: &TransitionKernel) -> f64 {
    let p = &kernel.matrix;
    let mut best = 0.0f64;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let s: f64 = (0..3).map(|l| (p[i][l] - p[j][l]).abs()).sum();
            best = best.max(s);
        }
    }
    0.5 * best
}

fn abs_diff_exp(a: f64, b: f64) -> SignedLog {
    SignedLog::diff_exp(a, b).abs()
}

/// `kappa` from the explicit three-term maximum in `(x, y)`.
pub fn kappa_closed_form(point: &LawPoint, params: &ModelParams) -> f64 {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let (lx, ly) = (point.ln_x, point.ln_y);
    let e = SignedLog::exp;
    // rows 0 and 1
    let t01 = (e(2.0 * lx) * abs_diff_exp(ly, lt + lx)
        + e(2.0 * ly) * abs_diff_exp(lx, lt + ly)
        + abs_diff_exp(lp + ly, lt + lx))
        / e(lx + ly);
    // rows 0 and 2
    let t02 = (e(2.0 * lx) * abs_diff_exp(0.0, lp + lx)
        + e(lt + 2.0 * ly) * abs_diff_exp(0.0, lx)
        + abs_diff_exp(lp, lx))
        / e(lx);
    // rows 1 and 2
    let t12 = (e(2.0 * lx) * abs_diff_exp(lt, lp + ly)
        + e(2.0 * ly) * abs_diff_exp(0.0, lt + ly)
        + abs_diff_exp(lt, ly))
        / e(ly);
    let ln_z = log_sum_exp(&[lp + 2.0 * lx, lt + 2.0 * ly, 0.0]);
    let ln_max = t01.ln_abs().max(t02.ln_abs()).max(t12.ln_abs());
    (ln_max - std::f64::consts::LN_2 - ln_z).exp()
}

/// Which term attains the maximum in [`kappa_x1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KappaTerm {
    /// `(|y - theta| + y^2 |1 - theta y| + |T y - theta|) / y`.
    Mixed,
    /// `2 |1 - T|`.
    Corner,
}

/// `kappa(1, y)` and the term attaining the maximum.
pub fn kappa_x1(ln_y: f64, params: &ModelParams) -> (f64, KappaTerm) {
    let (mixed, corner) = kappa_x1_terms(ln_y, params);
    if mixed >= corner {
        (mixed, KappaTerm::Mixed)
    } else {
        (corner, KappaTerm::Corner)
    }
}

/// Both candidate values of `kappa(1, y)`, already divided by `2 Z_1`.
pub fn kappa_x1_terms(ln_y: f64, params: &ModelParams) -> (f64, f64) {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let e = SignedLog::exp;
    let mixed = (abs_diff_exp(ln_y, lt)
        + e(2.0 * ln_y) * abs_diff_exp(0.0, lt + ln_y)
        + abs_diff_exp(lp + ln_y, lt))
        / e(ln_y);
    let ln_corner = std::f64::consts::LN_2 + params.one_minus_theta_pow_log().ln_abs();
    let ln_2z1 = std::f64::consts::LN_2 + log_sum_exp(&[lp, lt + 2.0 * ln_y, 0.0]);
    ((mixed.ln_abs() - ln_2z1).exp(), (ln_corner - ln_2z1).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBound {
    /// `(1 - T) / (1 + T)`; negative for `theta > 1`.
    pub value: f64,
    /// The bound is only established for `theta < 1`.
    pub domain_restricted: bool,
}

pub fn gamma_bound(params: &ModelParams) -> GammaBound {
    GammaBound {
        value: -(0.5 * params.ln_theta_pow()).tanh(),
        domain_restricted: params.theta >= 1.0,
    }
}

/// `(1 - theta^t) / (1 + theta^t)`.
pub fn theta_fn(theta: f64, t: f64) -> f64 {
    -(0.5 * t * theta.ln()).tanh()
}

/// Samples `theta_fn(theta, .)` on `(-1, 2^p]` and reports whether the
/// samples are nondecreasing.
pub fn theta_monotone_check(p: f64, theta: f64) -> bool {
    if !(theta > 0.0 && theta < 1.0) {
        return false;
    }
    let n = 2000;
    let (lo, hi) = (-1.0 + 1e-9, p.exp2().max(1.0));
    let vals: Vec<f64> = (0..=n)
        .map(|i| theta_fn(theta, lo + (hi - lo) * i as f64 / n as f64))
        .collect();
    vals.windows(2).all(|w| w[1] >= w[0])
}

/// `[y - theta, 1 - T x, x - T]` for a law with `x != 1`; all three are
/// positive at such a solution.
pub fn sign_identity_values(point: &LawPoint, params: &ModelParams) -> [f64; 3] {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    [
        SignedLog::diff_exp(point.ln_y, lt).to_f64(),
        SignedLog::diff_exp(0.0, lp + point.ln_x).to_f64(),
        SignedLog::diff_exp(point.ln_x, lp).to_f64(),
    ]
}

/// Conditional one-site laws `p^s(l)` given the parent spin `s` and a
/// prior `(t, 1 - t - u, u)` on the child, evaluated in log space.
#[derive(Debug, Clone, Copy)]
struct SiteLaws {
    /// `w[s][l] = ln(theta^(|s-l|^p) z_l)`.
    w: [[f64; 3]; 3],
}

impl SiteLaws {
    fn new(point: &LawPoint, params: &ModelParams) -> Self {
        let lt = params.ln_theta();
        let lp = params.ln_theta_pow();
        let (lx2, ly2) = (2.0 * point.ln_x, 2.0 * point.ln_y);
        SiteLaws {
            w: [
                [lx2, lt + ly2, lp],
                [lt + lx2, ly2, lt],
                [lp + lx2, lt + ly2, 0.0],
            ],
        }
    }

    /// Rows for the prior with logarithms `(ln t, ln(1 - t - u), ln u)`.
    fn rows(&self, lp: [f64; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for s in 0..3 {
            let terms = [self.w[s][0] + lp[0], self.w[s][1] + lp[1], self.w[s][2] + lp[2]];
            let z = log_sum_exp(&terms);
            for l in 0..3 {
                out[s][l] = (terms[l] - z).exp();
            }
        }
        out
    }

    /// `[f, phi, psi, g]`.
    fn functions_ln(&self, lp: [f64; 3]) -> [f64; 4] {
        let p = self.rows(lp);
        [
            p[0][0] - p[2][0],
            p[0][0] - p[1][0],
            p[1][1] - p[0][1],
            p[2][2] - p[0][2],
        ]
    }

    fn functions(&self, t: f64, u: f64) -> [f64; 4] {
        self.functions_ln([t.ln(), (1.0 - t - u).max(0.0).ln(), u.ln()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    pub name: String,
    /// Stated maximum on the segment.
    pub expected: f64,
    /// Function value at the stated maximizer.
    pub at_argmax: f64,
    /// Largest value seen on the sampled segment.
    pub sampled_max: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaLemmaReport {
    pub bound: f64,
    /// Largest `|f|, |phi|, |psi|, |g|` over the sampled simplex.
    pub max_abs_each: [f64; 4],
    pub max_abs: f64,
    pub boundary_checks: Vec<BoundaryCheck>,
    pub holds: bool,
}

/// Brute-force check that `|f|, |phi|, |psi|, |g|` stay below
/// `(1 - T) / (1 + T)` on the simplex `t, u >= 0, t + u <= 1`.
///
/// Samples a `grid_n x grid_n` triangular grid and each edge at
/// `grid_n^2` points, and checks the stated maxima on the edges `u = 0`
/// and `t + u = 1` to `1e-8`.
pub fn verify_gamma_lemma(params: &ModelParams, point: &LawPoint, grid_n: usize) -> Result<GammaLemmaReport> {
    params.require_binary()?;
    if params.theta > 1.0 {
        return Err(Error::Domain(format!(
            "the gamma bound needs theta <= 1, got {}",
            params.theta
        )));
    }
    if grid_n < 2 {
        return Err(Error::Domain("grid_n must be at least 2".into()));
    }
    let laws = SiteLaws::new(point, params);
    let bound = gamma_bound(params).value;
    let n = grid_n;
    let edge_n = grid_n * grid_n;

    let fold = |a: [f64; 4], b: [f64; 4]| [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2]), a[3].max(b[3])];
    let abs4 = |v: [f64; 4]| [v[0].abs(), v[1].abs(), v[2].abs(), v[3].abs()];

    let interior = (0..=n)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / n as f64;
            (0..=(n - i))
                .map(|j| abs4(laws.functions(t, j as f64 / n as f64)))
                .fold([0.0; 4], fold)
        })
        .reduce(|| [0.0; 4], fold);

    let s = |i: usize| i as f64 / edge_n as f64;
    // edges u = 0, t = 0 and t + u = 1
    let edges: [Box<dyn Fn(usize) -> (f64, f64) + Sync>; 3] = [
        Box::new(move |i| (s(i), 0.0)),
        Box::new(move |i| (0.0, s(i))),
        Box::new(move |i| (s(i), 1.0 - s(i))),
    ];
    let edge_max: Vec<[f64; 4]> = edges
        .iter()
        .map(|edge| {
            (0..=edge_n)
                .into_par_iter()
                .map(|i| {
                    let (t, u) = edge(i);
                    abs4(laws.functions(t, u))
                })
                .reduce(|| [0.0; 4], fold)
        })
        .collect();
    let max_abs_each = edge_max.iter().copied().fold(interior, fold);
    let max_abs = max_abs_each.iter().copied().fold(0.0, f64::max);

    let mut boundary_checks = Vec::new();
    let lt = params.ln_theta();
    let half_ln_pow = 0.5 * params.ln_theta_pow();
    let sampled_u0 = |idx: usize| {
        (0..=edge_n)
            .into_par_iter()
            .map(|i| laws.functions(s(i), 0.0)[idx])
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    let sampled_diag = |idx: usize| {
        (0..=edge_n)
            .into_par_iter()
            .map(|i| laws.functions(s(i), 1.0 - s(i))[idx])
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    let mut check = |name: &str, expected: f64, lp: [f64; 3], idx: usize, sampled: f64| {
        let at = laws.functions_ln(lp)[idx];
        boundary_checks.push(BoundaryCheck {
            name: name.to_string(),
            expected,
            at_argmax: at,
            sampled_max: sampled,
            ok: (at - expected).abs() <= 1e-8 && sampled <= expected + GAMMA_LEMMA_SLACK,
        });
    };

    // maximizers are of the form a / (a + b); keep both parts in log form
    // since they sit exponentially close to a corner when T underflows
    let split = |ln_a: f64, ln_b: f64| {
        let ln_s = log_sum_exp(&[ln_a, ln_b]);
        (ln_a - ln_s, ln_b - ln_s)
    };
    let none = f64::NEG_INFINITY;
    let (lx2, ly2) = (2.0 * point.ln_x, 2.0 * point.ln_y);
    let quarter = -(0.25 * params.ln_theta_pow()).tanh();

    // f on u = 0 peaks at t = y^2 / (theta^(2^(p-1) - 1) x^2 + y^2)
    let (a, b) = split(ly2, half_ln_pow - lt + lx2);
    check("f(t,0)", quarter, [a, b, none], 0, sampled_u0(0));
    let (a, b) = split(ly2, lx2);
    check("phi(t,0)", theta_fn(params.theta, 1.0), [a, b, none], 1, sampled_u0(1));
    let (a, b) = split(0.0, lx2);
    check("f(t,1-t)", bound, [a, none, b], 0, sampled_diag(0));
    let (a, b) = split(half_ln_pow, lx2);
    check("phi(t,1-t)", quarter, [a, none, b], 1, sampled_diag(1));

    let holds = max_abs <= bound + GAMMA_LEMMA_SLACK && boundary_checks.iter().all(|c| c.ok);
    Ok(GammaLemmaReport {
        bound,
        max_abs_each,
        max_abs,
        boundary_checks,
        holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "MSW_EXTREMAL")]
    MswExtremal,
    #[serde(rename = "KS_NONEXTREMAL")]
    KsNonextremal,
    #[serde(rename = "UNDETERMINED")]
    Undetermined,
    #[serde(rename = "CONFLICT")]
    Conflict,
}

impl Verdict {
    pub fn from_indicators(u: f64, eta: f64) -> Self {
        match (u < 0.0, eta > 0.0) {
            (true, false) => Verdict::MswExtremal,
            (false, true) => Verdict::KsNonextremal,
            (true, true) => Verdict::Conflict,
            (false, false) => Verdict::Undetermined,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::MswExtremal => "MSW_EXTREMAL",
            Verdict::KsNonextremal => "KS_NONEXTREMAL",
            Verdict::Undetermined => "UNDETERMINED",
            Verdict::Conflict => "CONFLICT",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityReport {
    pub branch: u8,
    pub kappa: f64,
    pub gamma_bound: f64,
    /// `gamma_bound` is only proven for `theta < 1`; above that `U` uses
    /// its absolute value.
    pub domain_restricted: bool,
    #[serde(rename = "U")]
    pub u: f64,
    pub lambda_max: f64,
    pub eta: f64,
    pub verdict: Verdict,
}

/// `U = k |gamma_bound| kappa - 1`.
pub fn u_indicator(kappa: f64, gamma: &GammaBound, k: u32) -> f64 {
    f64::from(k) * gamma.value.abs() * kappa - 1.0
}

pub fn msw_report(point: &LawPoint, params: &ModelParams, kernel: &TransitionKernel) -> Result<ExtremalityReport> {
    let kap = kappa(kernel);
    let gamma = gamma_bound(params);
    let u = u_indicator(kap, &gamma, params.k);
    let ks = kesten_stigum(kernel, params.k)?;
    Ok(ExtremalityReport {
        branch: point.branch,
        kappa: kap,
        gamma_bound: gamma.value,
        domain_restricted: gamma.domain_restricted,
        u,
        lambda_max: ks.lambda_max,
        eta: ks.eta,
        verdict: Verdict::from_indicators(u, ks.eta),
    })
}
