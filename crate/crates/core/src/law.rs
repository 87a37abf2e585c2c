//! Closed-form boundary laws for `k = m = 2`.
//!
//! With `x = sqrt(z0)`, `y = sqrt(z1)` and `T = theta^(2^p)` the
//! translation-invariant law equations read
//!
//! ```text
//! x = (x^2 + theta y^2 + T) / (T x^2 + theta y^2 + 1)
//! y = (theta x^2 + y^2 + theta) / (T x^2 + theta y^2 + 1)
//! ```
//!
//! The first forces either `x = 1`, leaving the cubic
//! `theta y^3 - y^2 + (T + 1) y - 2 theta = 0` (branches 1..=3), or
//! `theta y^2 = (1 - T) x - T (x^2 + 1)`, which reduces to a quadratic in
//! `xi = x + 1/x` (branches 4..=7, only for `theta < 1`).

use serde::{Deserialize, Serialize};

use crate::cubic::{self, RootStructure};
use crate::error::{Error, Result};
use crate::logspace::{log_sum_exp, SignedLog};
use crate::params::ModelParams;

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
pub const DEFAULT_BOUNDARY_BAND: f64 = 1e-12;

/// Above this value of `ln(theta^(2^p))` the cubic's coefficients are too
/// large for Cardano's formulas and the single root is found in log space.
const LN_POW_CARDANO_LIMIT: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub residual_tol: f64,
    /// Relative band around zero inside which a discriminant counts as zero.
    pub boundary_band: f64,
    /// Treat in-band discriminants as exactly zero instead of failing with
    /// [`Error::ToleranceAmbiguity`].
    pub snap_boundaries: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            residual_tol: DEFAULT_RESIDUAL_TOL,
            boundary_band: DEFAULT_BOUNDARY_BAND,
            snap_boundaries: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

/// A quantity together with the magnitude of the terms it was formed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discriminant {
    pub value: f64,
    pub scale: f64,
}

impl Discriminant {
    pub fn sign(&self, band: f64) -> Sign {
        if self.value.is_finite() && self.value.abs() <= band * self.scale {
            Sign::Zero
        } else if self.value > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }
}

/// One boundary law `(x, y)`; a candidate translation-invariant measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawPoint {
    pub x: f64,
    pub y: f64,
    pub ln_x: f64,
    pub ln_y: f64,
    pub branch: u8,
    /// Largest relative defect `|rhs / lhs - 1|` of the two law equations.
    pub residual: f64,
}

impl LawPoint {
    pub fn from_logs(ln_x: f64, ln_y: f64, branch: u8, params: &ModelParams) -> Self {
        LawPoint {
            x: ln_x.exp(),
            y: ln_y.exp(),
            ln_x,
            ln_y,
            branch,
            residual: law_residual(ln_x, ln_y, params),
        }
    }

    pub fn from_xy(x: f64, y: f64, branch: u8, params: &ModelParams) -> Self {
        Self::from_logs(x.ln(), y.ln(), branch, params)
    }

    /// `(z0, z1) = (x^2, y^2)`.
    pub fn z(&self) -> (f64, f64) {
        (self.x * self.x, self.y * self.y)
    }

    pub fn is_x_one(&self) -> bool {
        self.ln_x == 0.0
    }
}

/// Relative defect of both law equations, evaluated in log space.
pub fn law_residual(ln_x: f64, ln_y: f64, params: &ModelParams) -> f64 {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let (lx2, ly2) = (2.0 * ln_x, 2.0 * ln_y);
    let ln_den = log_sum_exp(&[lp + lx2, lt + ly2, 0.0]);
    let ra = log_sum_exp(&[lx2, lt + ly2, lp]) - ln_den - ln_x;
    let rb = log_sum_exp(&[lt + lx2, ly2, lt]) - ln_den - ln_y;
    ra.exp_m1().abs().max(rb.exp_m1().abs())
}

/// `Delta(theta, p)` for the `x = 1` cubic. Returns `-inf` once
/// `theta^(2^p)` overflows, which is the sign of the true value.
pub fn cubic_discriminant(params: &ModelParams) -> Result<f64> {
    Ok(cubic_discriminant_parts(params)?.value)
}

pub fn cubic_discriminant_parts(params: &ModelParams) -> Result<Discriminant> {
    params.require_binary()?;
    let t = params.theta;
    let tp = params.theta_pow();
    let u = 1.0 - 3.0 * t - 3.0 * tp * t;
    let v = 2.0 - 9.0 * t + 54.0 * t.powi(3) - 9.0 * tp * t;
    let norm = 27.0 * t * t;
    let value = (4.0 * u.powi(3) - v * v) / norm;
    let scale = (4.0 * u.powi(3).abs() + v * v) / norm;
    Ok(Discriminant { value, scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicRoot {
    pub y: f64,
    pub ln_y: f64,
    pub multiplicity: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicAnalysis {
    pub delta: f64,
    pub delta_scale: f64,
    pub delta_sign: Sign,
    /// Positive roots, descending: `y1 > y2 > y3`.
    pub roots: Vec<CubicRoot>,
}

/// Relative defect of `y (T + 1 + theta y^2) = 2 theta + y^2`, i.e. the
/// cubic rearranged so both sides are positive.
pub fn cubic_relative_residual(params: &ModelParams, ln_y: f64) -> f64 {
    let lt = params.ln_theta();
    let lhs = ln_y + log_sum_exp(&[params.ln_theta_pow(), 0.0, lt + 2.0 * ln_y]);
    let rhs = log_sum_exp(&[std::f64::consts::LN_2 + lt, 2.0 * ln_y]);
    (lhs - rhs).exp_m1().abs()
}

/// Single root of the cubic when `theta^(2^p)` dominates every other
/// coefficient. Newton on `u = ln y` for
/// `G(u) = u + ln(T + 1 + theta e^{2u}) - ln(2 theta + e^{2u})`.
fn dominant_root_ln(params: &ModelParams) -> f64 {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let ln2t = std::f64::consts::LN_2 + lt;
    let mut u = ln2t - lp;
    for _ in 0..50 {
        let den = log_sum_exp(&[lp, 0.0, lt + 2.0 * u]);
        let num = log_sum_exp(&[ln2t, 2.0 * u]);
        let g = u + den - num;
        let w1 = (lt + 2.0 * u - den).exp();
        let w2 = (2.0 * u - num).exp();
        let dg = 1.0 + 2.0 * w1 - 2.0 * w2;
        let step = g / dg;
        u -= step;
        if step.abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            break;
        }
    }
    u
}

/// All positive roots of `theta y^3 - y^2 + (T + 1) y - 2 theta = 0`.
pub fn solve_cubic_x1(params: &ModelParams, opts: &SolverOptions) -> Result<CubicAnalysis> {
    let disc = cubic_discriminant_parts(params)?;
    let sign = disc.sign(opts.boundary_band);
    let t = params.theta;

    let roots = if params.ln_theta_pow() > LN_POW_CARDANO_LIMIT {
        // only reachable for theta > 1, where the discriminant is -inf
        let ln_y = dominant_root_ln(params);
        vec![CubicRoot {
            y: ln_y.exp(),
            ln_y,
            multiplicity: 1,
        }]
    } else {
        let structure = match sign {
            Sign::Positive => RootStructure::ThreeSimple,
            Sign::Zero => RootStructure::SimpleAndDouble,
            Sign::Negative => RootStructure::OneReal,
        };
        let coeffs = [t, -1.0, params.theta_pow() + 1.0, -2.0 * t];
        cubic::real_roots(coeffs, structure)
            .into_iter()
            .filter(|r| r.value > 0.0)
            .map(|r| CubicRoot {
                y: r.value,
                ln_y: r.value.ln(),
                multiplicity: r.multiplicity,
            })
            .collect()
    };

    Ok(CubicAnalysis {
        delta: disc.value,
        delta_scale: disc.scale,
        delta_sign: sign,
        roots,
    })
}

/// The quadratic `a xi^2 + b xi + c = 0` in `xi = x + 1/x` and the
/// existence conditions for branches 4..=7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiAnalysis {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `b^2 - 4ac`.
    pub big_d: f64,
    /// The factored form `theta^2 (T-1)^3 l(theta,p) q(theta,p)`.
    pub big_d_factored: f64,
    pub big_d_scale: f64,
    pub big_d_sign: Sign,
    pub xi1: Option<f64>,
    pub xi2: Option<f64>,
    /// `2 < xi1 <= xi2`.
    pub c1_satisfied: bool,
    /// Nonnegativity of `(1-T) x_i - T (x_i^2 + 1)` for branches 4, 5, 6, 7.
    pub c2_per_branch: [Option<bool>; 4],
    pub c2_satisfied: bool,
}

impl XiAnalysis {
    /// Branch abscissae `[x4, x5, x6, x7]` when C1 holds.
    pub fn branch_x(&self) -> Option<[f64; 4]> {
        if !self.c1_satisfied {
            return None;
        }
        let (xi1, xi2) = (self.xi1?, self.xi2?);
        let big = |xi: f64| 0.5 * (xi + ((xi - 2.0) * (xi + 2.0)).sqrt());
        let x7 = big(xi2);
        let x6 = big(xi1);
        Some([1.0 / x7, 1.0 / x6, x6, x7])
    }
}

fn c2_value(params: &ModelParams, x: f64) -> f64 {
    let tp = params.theta_pow();
    params.one_minus_theta_pow() * x - tp * (x * x + 1.0)
}

pub fn xi_analysis(params: &ModelParams, opts: &SolverOptions) -> Result<XiAnalysis> {
    params.require_binary()?;
    let t = params.theta;
    if t >= 1.0 {
        return Err(Error::Domain(format!(
            "branches with x != 1 need theta < 1, got theta = {t}"
        )));
    }
    let tp = params.theta_pow();
    let q = params.one_minus_theta_pow();
    let t2_minus_tp = SignedLog::diff_exp(2.0 * params.ln_theta(), params.ln_theta_pow()).to_f64();

    let a = t * tp * q * q + t2_minus_tp * t2_minus_tp;
    let b = q * (2.0 * t2_minus_tp - t * q * (1.0 - 3.0 * tp));
    let c = q * q * (1.0 - 2.0 * t * q);
    let big_d = b * b - 4.0 * a * c;
    let big_d_scale = b * b + (4.0 * a * c).abs();
    let l = l_curve(t, params.p);
    let qc = q_curve(t, params.p);
    let big_d_factored = -t * t * q.powi(3) * l * qc;
    let big_d_sign = Discriminant {
        value: big_d,
        scale: big_d_scale,
    }
    .sign(opts.boundary_band);

    let (xi1, xi2) = match big_d_sign {
        Sign::Negative => (None, None),
        Sign::Zero => {
            let r = -b / (2.0 * a);
            (Some(r), Some(r))
        }
        Sign::Positive => {
            let s = big_d.sqrt();
            let h = -0.5 * (b + b.signum() * s);
            let (r1, r2) = (h / a, c / h);
            (Some(r1.min(r2)), Some(r1.max(r2)))
        }
    };
    let c1_satisfied = matches!(xi1, Some(v) if v > 2.0);

    let mut out = XiAnalysis {
        a,
        b,
        c,
        big_d,
        big_d_factored,
        big_d_scale,
        big_d_sign,
        xi1,
        xi2,
        c1_satisfied,
        c2_per_branch: [None; 4],
        c2_satisfied: false,
    };
    if let Some(xs) = out.branch_x() {
        for (slot, &x) in out.c2_per_branch.iter_mut().zip(xs.iter()) {
            *slot = Some(c2_value(params, x) >= 0.0);
        }
        out.c2_satisfied = out.c2_per_branch.iter().all(|c| *c == Some(true));
    }
    Ok(out)
}

/// `xi_{1,2}` exactly as the closed-form expression in `q = 1 - T`;
/// kept as a cross-check for the stable quadratic solve.
pub fn xi_roots_closed_form(params: &ModelParams) -> Option<(f64, f64)> {
    let t = params.theta;
    let q = params.one_minus_theta_pow();
    let rad = q * (q + 2.0 * t - 2.0) * ((q - t - 1.0).powi(2) + (t + 1.0) * (3.0 * t - 1.0));
    if rad < 0.0 {
        return None;
    }
    let num0 = -3.0 * t * q * q + 2.0 * (t + 1.0) * q + 2.0 * (t * t - 1.0);
    let den = (q - t - 1.0) * (t * q * q + (t * t - 1.0) * (q + t - 1.0));
    let r1 = 0.5 * q * (num0 - t * rad.sqrt()) / den;
    let r2 = 0.5 * q * (num0 + t * rad.sqrt()) / den;
    Some((r1.min(r2), r1.max(r2)))
}

fn softmax3(t: [f64; 3]) -> ([f64; 3], f64) {
    let z = log_sum_exp(&t);
    ([(t[0] - z).exp(), (t[1] - z).exp(), (t[2] - z).exp()], z)
}

/// A few Newton steps on both law equations in `(ln x, ln y)`, kept only
/// while they shrink the residual. The closed forms for `x != 1` lose
/// digits to cancellation when `theta^(2^p)` is close to `theta`.
fn polish_law(mut lx: f64, mut ly: f64, params: &ModelParams) -> (f64, f64) {
    let lt = params.ln_theta();
    let lp = params.ln_theta_pow();
    let eval = |lx: f64, ly: f64| {
        let (a, za) = softmax3([2.0 * lx, lt + 2.0 * ly, lp]);
        let (b, zb) = softmax3([lt + 2.0 * lx, 2.0 * ly, lt]);
        let (d, zd) = softmax3([lp + 2.0 * lx, lt + 2.0 * ly, 0.0]);
        let g = [za - zd - lx, zb - zd - ly];
        let j = [
            [2.0 * (a[0] - d[0]) - 1.0, 2.0 * (a[1] - d[1])],
            [2.0 * (b[0] - d[0]), 2.0 * (b[1] - d[1]) - 1.0],
        ];
        (g, j)
    };
    let norm = |g: [f64; 2]| g[0].abs().max(g[1].abs());
    let (mut g, mut j) = eval(lx, ly);
    for _ in 0..4 {
        if norm(g) == 0.0 {
            break;
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = (g[0] * j[1][1] - g[1] * j[0][1]) / det;
        let dy = (g[1] * j[0][0] - g[0] * j[1][0]) / det;
        // a correction of more than roundoff size means the start was not a
        // perturbed solution; leave it alone
        if dx.abs().max(dy.abs()) > 1e-6 {
            break;
        }
        let (nx, ny) = (lx - dx, ly - dy);
        let (ng, nj) = eval(nx, ny);
        if !(norm(ng) < norm(g)) {
            break;
        }
        lx = nx;
        ly = ny;
        g = ng;
        j = nj;
    }
    (lx, ly)
}

/// Branches 4..=7 from a satisfied C1; branches failing C2 are left out
/// (see [`XiAnalysis::c2_per_branch`]). On the `D = 0` boundary the two
/// double roots are returned once, as branches 4 and 6.
pub fn branch_points_4to7(params: &ModelParams, xi: &XiAnalysis) -> Vec<LawPoint> {
    let Some(xs) = xi.branch_x() else {
        return Vec::new();
    };
    let merged = xi.big_d_sign == Sign::Zero;
    let mut out = Vec::with_capacity(4);
    for (i, &x) in xs.iter().enumerate() {
        let branch = 4 + i as u8;
        if merged && (branch == 5 || branch == 7) {
            continue;
        }
        if xi.c2_per_branch[i] != Some(true) {
            continue;
        }
        let c2 = c2_value(params, x);
        if c2 <= 0.0 {
            continue;
        }
        let ln_y = 0.5 * (c2.ln() - params.ln_theta());
        let (ln_x, ln_y) = polish_law(x.ln(), ln_y, params);
        out.push(LawPoint::from_logs(ln_x, ln_y, branch, params));
    }
    out
}

/// `theta^(2^p) - 2 theta + 1`; `p = 0` is allowed.
pub fn l_curve(theta: f64, p: f64) -> f64 {
    (p.exp2() * theta.ln()).exp() - 2.0 * theta + 1.0
}

/// `(theta^(2^p) + theta)^2 + 3 theta^2 + 2 theta - 1`; `p = 0` is allowed.
pub fn q_curve(theta: f64, p: f64) -> f64 {
    let tp = (p.exp2() * theta.ln()).exp();
    (tp + theta).powi(2) + 3.0 * theta * theta + 2.0 * theta - 1.0
}

/// Zero set of `q` solved for `p`, defined on `(0, (sqrt 5 - 1)/4)`.
pub fn m_curve(theta: f64) -> Option<f64> {
    let hi = (5f64.sqrt() - 1.0) / 4.0;
    if !(theta > 0.0 && theta < hi) {
        return None;
    }
    let inner = -theta + ((theta + 1.0) * (1.0 - 3.0 * theta)).sqrt();
    let v = (inner.ln() / theta.ln()).ln() / std::f64::consts::LN_2;
    v.is_finite().then_some(v)
}

/// Zero set of `l` solved for `p`, defined on `(1/2, 1)`.
pub fn big_m_curve(theta: f64) -> Option<f64> {
    if !(theta > 0.5 && theta < 1.0) {
        return None;
    }
    let v = ((2.0 * theta - 1.0).ln() / theta.ln()).ln() / std::f64::consts::LN_2;
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCurves {
    pub m_val: Option<f64>,
    pub big_m_val: Option<f64>,
    pub l_val: f64,
    pub q_val: f64,
}

pub fn region_curves(theta: f64, p: f64) -> RegionCurves {
    RegionCurves {
        m_val: m_curve(theta),
        big_m_val: big_m_curve(theta),
        l_val: l_curve(theta, p),
        q_val: q_curve(theta, p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "UNIQUE")]
    Unique,
    #[serde(rename = "BOUNDARY_mM")]
    BoundaryMm,
    #[serde(rename = "Q_MINUS_CAP_P")]
    QMinusCapP,
    #[serde(rename = "Q_ZERO")]
    QZero,
    #[serde(rename = "Q_PLUS")]
    QPlus,
}

impl Region {
    pub fn count(self) -> usize {
        match self {
            Region::Unique => 1,
            Region::BoundaryMm => 3,
            Region::QMinusCapP => 5,
            Region::QZero => 6,
            Region::QPlus => 7,
        }
    }

    pub fn branches(self) -> &'static [u8] {
        match self {
            Region::Unique => &[1],
            Region::BoundaryMm => &[1, 4, 6],
            Region::QMinusCapP => &[1, 4, 5, 6, 7],
            Region::QZero => &[1, 3, 4, 5, 6, 7],
            Region::QPlus => &[1, 2, 3, 4, 5, 6, 7],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Region::Unique => "UNIQUE",
            Region::BoundaryMm => "BOUNDARY_mM",
            Region::QMinusCapP => "Q_MINUS_CAP_P",
            Region::QZero => "Q_ZERO",
            Region::QPlus => "Q_PLUS",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub params: ModelParams,
    pub points: Vec<LawPoint>,
    pub region: Region,
    pub count: usize,
    pub delta: f64,
    pub big_d: Option<f64>,
    pub c1: Option<bool>,
    pub c2: Option<bool>,
}

impl SolutionSet {
    pub fn branch(&self, branch: u8) -> Option<&LawPoint> {
        self.points.iter().find(|p| p.branch == branch)
    }
}

pub fn classify(params: &ModelParams) -> Result<SolutionSet> {
    classify_with(params, &SolverOptions::default())
}

/// Every boundary law at `params`, labelled by branch, with the region of
/// the parameter plane it implies.
pub fn classify_with(params: &ModelParams, opts: &SolverOptions) -> Result<SolutionSet> {
    let cubic = solve_cubic_x1(params, opts)?;
    let ambiguity = |quantity, d: Discriminant| Error::ToleranceAmbiguity {
        quantity,
        value: d.value,
        scale: d.scale,
        theta: params.theta,
        p: params.p,
    };
    if cubic.delta_sign == Sign::Zero && !opts.snap_boundaries {
        return Err(ambiguity(
            "Delta",
            Discriminant {
                value: cubic.delta,
                scale: cubic.delta_scale,
            },
        ));
    }

    let mut points = Vec::with_capacity(7);
    match cubic.roots.as_slice() {
        [r] => points.push(LawPoint::from_logs(0.0, r.ln_y, 1, params)),
        [a, b] => {
            let (simple, double) = if a.multiplicity == 1 { (a, b) } else { (b, a) };
            points.push(LawPoint::from_logs(0.0, simple.ln_y, 1, params));
            points.push(LawPoint::from_logs(0.0, double.ln_y, 3, params));
        }
        roots => {
            for (i, r) in roots.iter().enumerate() {
                points.push(LawPoint::from_logs(0.0, r.ln_y, 1 + i as u8, params));
            }
        }
    }
    let n_x_one = points.len();

    let (big_d, c1, c2) = if params.theta < 1.0 {
        let xi = xi_analysis(params, opts)?;
        if xi.big_d_sign == Sign::Zero && !opts.snap_boundaries && -xi.b / (2.0 * xi.a) > 2.0 {
            return Err(ambiguity(
                "D",
                Discriminant {
                    value: xi.big_d,
                    scale: xi.big_d_scale,
                },
            ));
        }
        if let (Some(x1), Some(x2)) = (xi.xi1, xi.xi2) {
            if x1 <= 2.0 && x2 > 2.0 {
                return Err(Error::Unclassified {
                    theta: params.theta,
                    p: params.p,
                    detail: format!("condition C1 holds for xi2 = {x2} only (xi1 = {x1})"),
                });
            }
        }
        points.extend(branch_points_4to7(params, &xi));
        let c2 = xi.c1_satisfied.then_some(xi.c2_satisfied);
        (Some(xi.big_d), Some(xi.c1_satisfied), c2)
    } else {
        (None, None, None)
    };
    let n_other = points.len() - n_x_one;

    let region = match (n_x_one, n_other) {
        (1, 0) => Region::Unique,
        (1, 2) => Region::BoundaryMm,
        (1, 4) => Region::QMinusCapP,
        (2, 4) => Region::QZero,
        (3, 4) => Region::QPlus,
        _ => {
            return Err(Error::Unclassified {
                theta: params.theta,
                p: params.p,
                detail: format!(
                    "{n_x_one} solutions with x = 1 and {n_other} with x != 1 (C1 = {c1:?}, C2 = {c2:?})"
                ),
            })
        }
    };

    for pt in &points {
        if !(pt.residual < opts.residual_tol) {
            return Err(Error::ResidualExceeded {
                branch: pt.branch,
                residual: pt.residual,
                tol: opts.residual_tol,
            });
        }
    }

    Ok(SolutionSet {
        params: *params,
        count: points.len(),
        points,
        region,
        delta: cubic.delta,
        big_d,
        c1,
        c2,
    })
}

/// The law on one branch, without classifying the whole solution set.
///
/// Branches 1..=3 follow the descending root order of the cubic; when it
/// has a single positive root that root is branch 1.
pub fn branch_point(params: &ModelParams, branch: u8, opts: &SolverOptions) -> Result<LawPoint> {
    let absent = || Error::BranchAbsent {
        branch,
        theta: params.theta,
        p: params.p,
    };
    let pt = match branch {
        1..=3 => {
            let c = solve_cubic_x1(params, opts)?;
            let root = match (c.roots.len(), branch) {
                (_, 1) => c.roots.first(),
                (3, b) => c.roots.get(usize::from(b) - 1),
                (2, 3) => c.roots.iter().find(|r| r.multiplicity == 2),
                _ => None,
            }
            .ok_or_else(absent)?;
            LawPoint::from_logs(0.0, root.ln_y, branch, params)
        }
        4..=7 => {
            if params.theta >= 1.0 {
                return Err(absent());
            }
            let xi = xi_analysis(params, opts)?;
            branch_points_4to7(params, &xi)
                .into_iter()
                .find(|p| p.branch == branch)
                .ok_or_else(absent)?
        }
        _ => return Err(Error::Domain(format!("branch must be in 1..=7, got {branch}"))),
    };
    if !(pt.residual < opts.residual_tol) {
        return Err(Error::ResidualExceeded {
            branch,
            residual: pt.residual,
            tol: opts.residual_tol,
        });
    }
    Ok(pt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(t: f64, p: f64) -> ModelParams {
        ModelParams::new(t, p).unwrap()
    }

    #[test]
    fn delta_at_theta_one_is_minus_72() {
        for &p in &[0.5, 7.3, 0.05, 3.0] {
            let d = cubic_discriminant(&mp(1.0, p)).unwrap();
            assert!((d + 72.0).abs() < 1e-12, "p = {p}: {d}");
        }
    }

    #[test]
    fn delta_sign_examples() {
        assert!(cubic_discriminant(&mp(0.15, 0.1)).unwrap() > 0.0);
        assert!(cubic_discriminant(&mp(0.1, 0.1)).unwrap() > 0.0);
        assert!(cubic_discriminant(&mp(0.3, 0.1)).unwrap() < 0.0);
        assert_eq!(cubic_discriminant(&mp(3.0, 10.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn delta_needs_binary_model() {
        let p = ModelParams::with_tree(0.5, 1.0, 3, 2).unwrap();
        assert!(matches!(cubic_discriminant(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn cubic_theta_one_has_single_root_one() {
        for &p in &[0.3, 1.0, 5.0, 12.0] {
            let c = solve_cubic_x1(&mp(1.0, p), &SolverOptions::default()).unwrap();
            assert_eq!(c.roots.len(), 1);
            assert!((c.roots[0].y - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cubic_root_counts_follow_delta() {
        let o = SolverOptions::default();
        let c = solve_cubic_x1(&mp(0.1, 0.1), &o).unwrap();
        assert_eq!(c.roots.len(), 3);
        assert!(c.roots[0].y > c.roots[1].y && c.roots[1].y > c.roots[2].y && c.roots[2].y > 0.0);
        let c = solve_cubic_x1(&mp(0.3, 0.1), &o).unwrap();
        assert_eq!(c.roots.len(), 1);
    }

    #[test]
    fn dominant_regime_root_is_accurate() {
        // T = 3^1024 overflows; y ~ 2 theta / T
        let p = mp(3.0, 10.0);
        let c = solve_cubic_x1(&p, &SolverOptions::default()).unwrap();
        assert_eq!(c.roots.len(), 1);
        let r = c.roots[0];
        assert!((r.ln_y - ((6.0f64).ln() - p.ln_theta_pow())).abs() < 1e-12);
        assert!(cubic_relative_residual(&p, r.ln_y) < 1e-14);
        assert_eq!(r.y, 0.0);
        let s = classify(&p).unwrap();
        assert_eq!((s.count, s.region), (1, Region::Unique));
    }

    #[test]
    fn cardano_and_dominant_paths_agree_near_limit() {
        // ln T just below and above the switch; both must satisfy the cubic
        for &t in &[1.2, 1.3] {
            let p = mp(t, (LN_POW_CARDANO_LIMIT / t.ln()).log2());
            let c = solve_cubic_x1(&p, &SolverOptions::default()).unwrap();
            assert!(cubic_relative_residual(&p, c.roots[0].ln_y) < 1e-13);
        }
    }

    #[test]
    fn xi_requires_theta_below_one() {
        let o = SolverOptions::default();
        assert!(matches!(xi_analysis(&mp(1.0, 1.0), &o), Err(Error::Domain(_))));
        assert!(matches!(xi_analysis(&mp(1.5, 1.0), &o), Err(Error::Domain(_))));
    }

    #[test]
    fn xi_examples() {
        let o = SolverOptions::default();
        let xi = xi_analysis(&mp(0.9, 0.05), &o).unwrap();
        assert!(xi.big_d < 0.0);
        assert!(xi.xi1.is_none() && xi.xi2.is_none());

        let xi = xi_analysis(&mp(0.1, 0.1), &o).unwrap();
        assert!(xi.big_d > 0.0);
        let (x1, x2) = (xi.xi1.unwrap(), xi.xi2.unwrap());
        assert!(2.0 < x1 && x1 < x2);
        assert!(xi.c1_satisfied && xi.c2_satisfied);
        for r in [x1, x2] {
            let v = xi.a * r * r + xi.b * r + xi.c;
            assert!(v.abs() < 1e-12 * (xi.a * r * r).abs().max(xi.c.abs()));
        }
    }

    #[test]
    fn big_d_matches_factored_form() {
        for &(t, p) in &[(0.1, 0.1), (0.15, 0.1), (0.6, 3.0), (0.9, 0.05), (0.3, 2.0), (0.7, 0.7)] {
            let xi = xi_analysis(&mp(t, p), &SolverOptions::default()).unwrap();
            assert_eq!(xi.big_d.signum(), xi.big_d_factored.signum(), "({t},{p})");
            assert!((xi.big_d - xi.big_d_factored).abs() <= 1e-10 * xi.big_d_scale);
        }
    }

    #[test]
    fn big_d_vanishes_on_l_curve() {
        // theta^(2^p) = 2 theta - 1 at p = M(theta)
        let t = 0.6;
        let p = big_m_curve(t).unwrap();
        assert!(l_curve(t, p).abs() < 1e-14);
        let xi = xi_analysis(&mp(t, p), &SolverOptions::default()).unwrap();
        assert!(xi.big_d.abs() < 1e-12 * xi.big_d_scale.max(1.0));
        assert_eq!(xi.big_d_sign, Sign::Zero);
    }

    #[test]
    fn stable_roots_match_closed_form() {
        for &(t, p) in &[(0.1, 0.1), (0.15, 0.1), (0.2, 1.0), (0.05, 3.0), (0.25, 5.0)] {
            let params = mp(t, p);
            let xi = xi_analysis(&params, &SolverOptions::default()).unwrap();
            let (c1, c2) = xi_roots_closed_form(&params).unwrap();
            let (s1, s2) = (xi.xi1.unwrap(), xi.xi2.unwrap());
            assert!((c1 / s1 - 1.0).abs() < 1e-9, "({t},{p}) {c1} vs {s1}");
            assert!((c2 / s2 - 1.0).abs() < 1e-9, "({t},{p}) {c2} vs {s2}");
        }
    }

    #[test]
    fn branch_points_are_reciprocal_and_solve_the_system() {
        let params = mp(0.1, 0.1);
        let xi = xi_analysis(&params, &SolverOptions::default()).unwrap();
        let pts = branch_points_4to7(&params, &xi);
        assert_eq!(pts.len(), 4);
        let x: Vec<f64> = pts.iter().map(|p| p.x).collect();
        assert!((x[0] * x[3] - 1.0).abs() < 1e-12);
        assert!((x[1] * x[2] - 1.0).abs() < 1e-12);
        assert!(x[0] <= x[1] && x[1] < 1.0 && 1.0 < x[2] && x[2] <= x[3]);
        for p in &pts {
            assert!(p.residual < 1e-10, "branch {}: {}", p.branch, p.residual);
        }
    }

    #[test]
    fn no_branch_points_where_big_d_negative() {
        let params = mp(0.7, 0.1);
        let xi = xi_analysis(&params, &SolverOptions::default()).unwrap();
        assert!(xi.big_d < 0.0);
        assert!(branch_points_4to7(&params, &xi).is_empty());
    }

    #[test]
    fn q_curve_root_at_p_zero() {
        let r = (2.0 * 2f64.sqrt() - 1.0) / 7.0;
        assert!(q_curve(r, 0.0).abs() < 1e-15);
        assert!(q_curve(0.1, 0.0) < 0.0 && q_curve(0.5, 0.0) > 0.0);
        assert_eq!(l_curve(1.0, 3.0), 0.0);
    }

    #[test]
    fn curve_domains() {
        assert!(m_curve(0.3).unwrap() > 0.0);
        // below (2 sqrt 2 - 1)/7 the curve is defined but negative
        let m02 = m_curve(0.2).unwrap();
        assert!(m02.is_finite() && m02 < 0.0);
        assert!(m_curve(0.31).is_none());
        assert!(m_curve(0.0).is_none());
        assert!(big_m_curve(0.5).is_none());
        assert!(big_m_curve(1.0).is_none());
        assert!(big_m_curve(0.75).unwrap().is_finite());
        // m solves q = 0 and M solves l = 0
        let t = 0.3;
        assert!(q_curve(t, m_curve(t).unwrap()).abs() < 1e-13);
        let t = 0.8;
        assert!(l_curve(t, big_m_curve(t).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn classify_examples() {
        let s = classify(&mp(1.5, 2.0)).unwrap();
        assert_eq!((s.count, s.region), (1, Region::Unique));

        let s = classify(&mp(0.15, 0.1)).unwrap();
        assert_eq!((s.count, s.region), (7, Region::QPlus));
        let branches: Vec<u8> = s.points.iter().map(|p| p.branch).collect();
        assert_eq!(branches, vec![1, 2, 3, 4, 5, 6, 7]);

        let s = classify(&mp(1.0, 5.0)).unwrap();
        assert_eq!(s.count, 1);
        let p = s.points[0];
        assert_eq!(p.x, 1.0);
        assert!((p.y - 1.0).abs() < 1e-15);

        let s = classify(&mp(0.3, 2.0)).unwrap();
        assert_eq!((s.count, s.region), (5, Region::QMinusCapP));
    }

    #[test]
    fn region_two_of_p_has_no_extra_branches() {
        // theta in (1/2, 1), p > M(theta): D > 0 but both xi roots lie below 2
        let params = mp(0.8, 5.0);
        let xi = xi_analysis(&params, &SolverOptions::default()).unwrap();
        assert!(xi.big_d > 0.0);
        assert!(!xi.c1_satisfied);
        let s = classify(&params).unwrap();
        assert_eq!((s.count, s.region), (1, Region::Unique));
    }

    #[test]
    fn ambiguity_on_l_curve_only_when_it_matters() {
        // on p = M(theta) the double xi root is below 2, so the count is 1 either way
        let t = 0.6;
        let params = mp(t, big_m_curve(t).unwrap());
        assert_eq!(classify(&params).unwrap().count, 1);
    }

    #[test]
    fn snapped_boundaries() {
        // locate the Delta = 0 point at p = 0.1 by bisection and snap onto it
        let (mut lo, mut hi) = (0.1, 0.3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cubic_discriminant(&mp(mid, 0.1)).unwrap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let params = mp(lo, 0.1);
        let strict = classify(&params);
        assert!(matches!(strict, Err(Error::ToleranceAmbiguity { quantity: "Delta", .. })));
        let opts = SolverOptions {
            snap_boundaries: true,
            residual_tol: 1e-6,
            ..Default::default()
        };
        let s = classify_with(&params, &opts).unwrap();
        assert_eq!((s.count, s.region), (6, Region::QZero));
        let branches: Vec<u8> = s.points.iter().map(|p| p.branch).collect();
        assert_eq!(branches, Region::QZero.branches());
    }

    #[test]
    fn snapped_m_curve_gives_three() {
        let t = 0.3;
        let params = mp(t, m_curve(t).unwrap());
        let opts = SolverOptions {
            snap_boundaries: true,
            boundary_band: 1e-9,
            residual_tol: 1e-6,
        };
        let s = classify_with(&params, &opts).unwrap();
        assert_eq!((s.count, s.region), (3, Region::BoundaryMm));
        assert!(matches!(
            classify_with(&params, &SolverOptions { boundary_band: 1e-9, ..Default::default() }),
            Err(Error::ToleranceAmbiguity { quantity: "D", .. })
        ));
    }

    #[test]
    fn branch_point_matches_classify() {
        let params = mp(0.15, 0.1);
        let s = classify(&params).unwrap();
        for pt in &s.points {
            let b = branch_point(&params, pt.branch, &SolverOptions::default()).unwrap();
            assert_eq!(b, *pt);
        }
        let params = mp(0.5, 1.0);
        assert!(matches!(
            branch_point(&params, 2, &SolverOptions::default()),
            Err(Error::BranchAbsent { branch: 2, .. })
        ));
        assert!(matches!(
            branch_point(&mp(2.0, 1.0), 5, &SolverOptions::default()),
            Err(Error::BranchAbsent { branch: 5, .. })
        ));
        assert!(branch_point(&params, 8, &SolverOptions::default()).is_err());
    }

    #[test]
    fn residual_is_relative_and_log_based() {
        let params = mp(0.15, 0.1);
        let s = classify(&params).unwrap();
        for pt in &s.points {
            let perturbed = law_residual(pt.ln_x + 1e-6, pt.ln_y, &params);
            assert!(perturbed > 1e-8);
        }
    }
}
