//! Boundary-law recursion for general tree order `k` and spin range `0..=m`.
//!
//! Boundary laws are kept in log form `h_i = ln z_i` with the last state
//! normalized out (`h_m = 0`). The one-step map is
//!
//! ```text
//! F_i(h) = ln( sum_j theta^(|i-j|^p) e^{h_j} ) - ln( sum_j theta^(|m-j|^p) e^{h_j} )
//! ```
//!
//! with `j` running over `0..=m`, and translation-invariant laws are the
//! fixed points `h = k F(h)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::LawPoint;
use crate::logspace::log_sum_exp;
use crate::params::ModelParams;

/// A translation-invariant boundary law found by [`ti_fixed_points`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawVector {
    /// `z_i = exp(h_i)`, `i = 0..m-1`. Components may underflow to `0` or
    /// overflow when `|h_i| > 709`; `h` is authoritative.
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    /// `max_i |z_i^{new} / z_i - 1|` for one application of the law map.
    pub residual: f64,
    /// Spectral radius of the Jacobian of `h -> k F(h)` at the point;
    /// below 1 means the plain iteration is attracted to it.
    pub spectral_radius: f64,
}

impl LawVector {
    /// `(x, y) = (sqrt z0, sqrt z1)` for the three-state model.
    pub fn to_xy(&self) -> Option<(f64, f64)> {
        match self.h.as_slice() {
            [h0, h1] => Some(((0.5 * h0).exp(), (0.5 * h1).exp())),
            _ => None,
        }
    }
}

/// Log weights `a[i][j] = |i-j|^p ln theta` for `i, j` in `0..=m`.
fn log_weights(params: &ModelParams) -> Vec<Vec<f64>> {
    let m = params.m as usize;
    (0..=m)
        .map(|i| (0..=m).map(|j| params.ln_weight(i.abs_diff(j) as u32)).collect())
        .collect()
}

struct Evaluation {
    /// `F(h)`.
    f: Vec<f64>,
    /// `dF_i / dh_j`.
    jac: DMatrix<f64>,
}

fn evaluate(weights: &[Vec<f64>], h: &[f64], with_jacobian: bool) -> Evaluation {
    let m = h.len();
    let row_terms = |i: usize| -> Vec<f64> {
        (0..=m)
            .map(|j| weights[i][j] + if j < m { h[j] } else { 0.0 })
            .collect()
    };
    let den_terms = row_terms(m);
    let ln_den = log_sum_exp(&den_terms);
    let mut f = Vec::with_capacity(m);
    let mut jac = DMatrix::zeros(if with_jacobian { m } else { 0 }, if with_jacobian { m } else { 0 });
    for i in 0..m {
        let terms = row_terms(i);
        let ln_num = log_sum_exp(&terms);
        f.push(ln_num - ln_den);
        if with_jacobian {
            for j in 0..m {
                jac[(i, j)] = (terms[j] - ln_num).exp() - (den_terms[j] - ln_den).exp();
            }
        }
    }
    Evaluation { f, jac }
}

fn check_input(h: &[f64], params: &ModelParams) -> Result<()> {
    if h.len() != params.m as usize {
        return Err(Error::Domain(format!(
            "expected {} components, got {}",
            params.m,
            h.len()
        )));
    }
    if let Some(v) = h.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite component {v}")));
    }
    Ok(())
}

/// `(F_0(h), ..., F_{m-1}(h))`.
pub fn f_map(h: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    check_input(h, params)?;
    Ok(evaluate(&log_weights(params), h, false).f)
}

/// Relative defect of `h` as a translation-invariant law.
pub fn law_vector_residual(h: &[f64], params: &ModelParams) -> Result<f64> {
    let f = f_map(h, params)?;
    let k = f64::from(params.k);
    Ok(h.iter()
        .zip(&f)
        .map(|(hi, fi)| (k * fi - hi).exp_m1().abs())
        .fold(0.0, f64::max))
}

/// Spectral radius of the Jacobian of `h -> k F(h)`.
pub fn jacobian_spectral_radius(h: &[f64], params: &ModelParams) -> Result<f64> {
    check_input(h, params)?;
    let ev = evaluate(&log_weights(params), h, true);
    let j = ev.jac * f64::from(params.k);
    Ok(j.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max))
}

/// `h = (2 ln x, 2 ln y)` for a closed-form law.
pub fn law_point_to_h(pt: &LawPoint) -> [f64; 2] {
    [2.0 * pt.ln_x, 2.0 * pt.ln_y]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Random starts, in addition to the lattice.
    pub starts: usize,
    /// Relaxation weight of the plain iteration, in `(0, 1]`.
    pub damping: f64,
    pub max_iterations: usize,
    pub newton_iterations: usize,
    /// Accept a point once `max_i |h_i - k F_i(h)|` is below this.
    pub tol: f64,
    /// Max-norm distance in `h` under which two points are the same.
    pub dedup_tol: f64,
    /// Random starts are uniform on `[-start_radius, start_radius]^m`.
    pub start_radius: f64,
    /// Include the lattice `{-10, -5, 0, 5, 10}^m` (skipped for `m > 6`).
    pub lattice: bool,
    pub seed: u64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            starts: 64,
            damping: 0.5,
            max_iterations: 2000,
            newton_iterations: 100,
            tol: 1e-12,
            dedup_tol: 1e-6,
            start_radius: 10.0,
            lattice: true,
            seed: 0x5eed,
        }
    }
}

/// A start that reached neither tolerance by plain iteration nor by Newton.
#[derive(Debug, Clone, PartialEq)]
pub struct NonConverged {
    pub start_index: usize,
    pub start: Vec<f64>,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSearch {
    /// Distinct fixed points, sorted lexicographically by `h`.
    pub points: Vec<LawVector>,
    pub non_converged: Vec<NonConverged>,
    pub starts_used: usize,
}

/// Multi-start search with the default configuration and the given start
/// count and damping.
pub fn ti_fixed_points(params: &ModelParams, starts: usize, damping: f64) -> Result<FixedPointSearch> {
    let cfg = FixedPointConfig {
        starts,
        damping,
        ..Default::default()
    };
    ti_fixed_points_with(params, &cfg)
}

const LATTICE: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];
const LATTICE_MAX_M: u32 = 6;

fn start_points(m: usize, cfg: &FixedPointConfig) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if cfg.lattice && m as u32 <= LATTICE_MAX_M {
        let n = LATTICE.len().pow(m as u32);
        for mut code in 0..n {
            let mut v = Vec::with_capacity(m);
            for _ in 0..m {
                v.push(LATTICE[code % LATTICE.len()]);
                code /= LATTICE.len();
            }
            out.push(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.start_radius;
    for _ in 0..cfg.starts {
        out.push((0..m).map(|_| rng.gen_range(-r..=r)).collect());
    }
    out
}

fn g_norm(weights: &[Vec<f64>], h: &[f64], k: f64) -> f64 {
    let ev = evaluate(weights, h, false);
    h.iter()
        .zip(&ev.f)
        .map(|(hi, fi)| (hi - k * fi).abs())
        .fold(0.0, f64::max)
}

/// Damped Newton on `G(h) = h - k F(h)` with backtracking on `|G|_inf`.
fn newton(weights: &[Vec<f64>], mut h: Vec<f64>, k: f64, cfg: &FixedPointConfig) -> (Vec<f64>, f64) {
    let m = h.len();
    let mut norm = g_norm(weights, &h, k);
    for _ in 0..cfg.newton_iterations {
        if norm <= cfg.tol {
            break;
        }
        let ev = evaluate(weights, &h, true);
        let g = DVector::from_iterator(m, h.iter().zip(&ev.f).map(|(hi, fi)| hi - k * fi));
        let jg = DMatrix::identity(m, m) - ev.jac * k;
        let Some(step) = jg.lu().solve(&g) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-10 {
            let trial: Vec<f64> = h.iter().zip(step.iter()).map(|(hi, s)| hi - t * s).collect();
            if trial.iter().all(|v| v.is_finite()) {
                let n = g_norm(weights, &trial, k);
                if n < norm {
                    h = trial;
                    norm = n;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (h, norm)
}

fn damped_iteration(weights: &[Vec<f64>], mut h: Vec<f64>, k: f64, cfg: &FixedPointConfig) -> (Vec<f64>, usize) {
    for it in 0..cfg.max_iterations {
        let ev = evaluate(weights, &h, false);
        let mut change = 0.0f64;
        for (hi, fi) in h.iter_mut().zip(&ev.f) {
            let next = (1.0 - cfg.damping) * *hi + cfg.damping * k * fi;
            change = change.max((next - *hi).abs());
            *hi = next;
        }
        if change <= cfg.tol {
            return (h, it + 1);
        }
    }
    (h, cfg.max_iterations)
}

/// Multi-start search for all fixed points of `h -> k F(h)`.
///
/// Every start is tried twice: plain damped iteration finished by Newton,
/// which finds attracting points, and Newton alone, which can also land on
/// repelling ones. A start is reported as non-converged only if both fail.
pub fn ti_fixed_points_with(params: &ModelParams, cfg: &FixedPointConfig) -> Result<FixedPointSearch> {
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::Domain(format!("damping must lie in (0, 1], got {}", cfg.damping)));
    }
    let m = params.m as usize;
    let starts = start_points(m, cfg);
    if starts.is_empty() {
        return Err(Error::Domain("need at least one start".into()));
    }
    let weights = log_weights(params);
    let k = f64::from(params.k);

    let runs: Vec<(Vec<Vec<f64>>, Option<Error>)> = starts
        .par_iter()
        .map(|s| {
            let mut found = Vec::new();
            let (after_iter, iterations) = damped_iteration(&weights, s.clone(), k, cfg);
            let (h1, n1) = newton(&weights, after_iter, k, cfg);
            if n1 <= cfg.tol {
                found.push(h1);
            }
            let (h2, n2) = newton(&weights, s.clone(), k, cfg);
            if n2 <= cfg.tol {
                found.push(h2);
            }
            let err = found.is_empty().then(|| Error::NonConvergence {
                iterations: iterations + 2 * cfg.newton_iterations,
                residual: n1.min(n2),
            });
            (found, err)
        })
        .collect();

    let mut candidates = Vec::new();
    let mut non_converged = Vec::new();
    for (i, (found, err)) in runs.into_iter().enumerate() {
        candidates.extend(found);
        if let Some(error) = err {
            non_converged.push(NonConverged {
                start_index: i,
                start: starts[i].clone(),
                error,
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for c in candidates {
        let dup = distinct.iter().any(|d| {
            d.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= cfg.dedup_tol
        });
        if !dup {
            distinct.push(c);
        }
    }

    let points = distinct
        .into_iter()
        .map(|h| {
            Ok(LawVector {
                z: h.iter().map(|v| v.exp()).collect(),
                residual: law_vector_residual(&h, params)?,
                spectral_radius: jacobian_spectral_radius(&h, params)?,
                h,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FixedPointSearch {
        points,
        non_converged,
        starts_used: starts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::classify;

    fn mp(t: f64, p: f64) -> ModelParams {
        ModelParams::new(t, p).unwrap()
    }

    #[test]
    fn f_map_examples() {
        assert_eq!(f_map(&[0.0, 0.0], &mp(1.0, 2.0)).unwrap(), vec![0.0, 0.0]);
        let f = f_map(&[0.0, 0.0], &mp(0.5, 1.0)).unwrap();
        assert!(f[0].abs() < 1e-15);
        assert!((f[1] - (8.0f64 / 7.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn f_map_rejects_bad_input() {
        assert!(f_map(&[0.0], &mp(0.5, 1.0)).is_err());
        assert!(f_map(&[f64::NAN, 0.0], &mp(0.5, 1.0)).is_err());
        assert!(f_map(&[f64::INFINITY, 0.0], &mp(0.5, 1.0)).is_err());
    }

    #[test]
    fn f_map_survives_large_arguments() {
        let f = f_map(&[700.0, -700.0], &mp(0.2, 10.0)).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let params = ModelParams::with_tree(0.4, 1.3, 3, 3).unwrap();
        let w = log_weights(&params);
        let h = [0.3, -1.2, 2.0];
        let ev = evaluate(&w, &h, true);
        for j in 0..3 {
            let eps = 1e-6;
            let mut hp = h;
            let mut hm = h;
            hp[j] += eps;
            hm[j] -= eps;
            let (fp, fm) = (evaluate(&w, &hp, false).f, evaluate(&w, &hm, false).f);
            for i in 0..3 {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                assert!((fd - ev.jac[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unique_point_for_theta_above_one() {
        let s = ti_fixed_points(&mp(1.5, 2.0), 64, 0.5).unwrap();
        assert_eq!(s.points.len(), 1);
    }

    #[test]
    fn theta_one_gives_symmetric_point() {
        let s = ti_fixed_points(&mp(1.0, 3.0), 16, 1.0).unwrap();
        assert_eq!(s.points.len(), 1);
        assert!(s.points[0].h.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(s.points[0].to_xy().map(|(x, _)| (x - 1.0).abs() < 1e-12), Some(true));
    }

    #[test]
    fn seven_points_match_closed_forms() {
        let params = mp(0.15, 0.1);
        let s = ti_fixed_points(&params, 64, 0.5).unwrap();
        let closed = classify(&params).unwrap();
        assert_eq!(s.points.len(), 7);
        for pt in &closed.points {
            let h = law_point_to_h(pt);
            assert!(law_vector_residual(&h, &params).unwrap() < 1e-10);
            let hit = s.points.iter().any(|v| {
                (v.h[0] - h[0]).abs().max((v.h[1] - h[1]).abs()) < 1e-6
            });
            assert!(hit, "branch {} not found", pt.branch);
        }
    }

    #[test]
    fn search_is_deterministic() {
        let params = mp(0.2, 1.0);
        let a = ti_fixed_points(&params, 32, 0.7).unwrap();
        let b = ti_fixed_points(&params, 32, 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_damping() {
        assert!(ti_fixed_points(&mp(0.5, 1.0), 4, 0.0).is_err());
        assert!(ti_fixed_points(&mp(0.5, 1.0), 4, 1.5).is_err());
    }

    #[test]
    fn general_tree_and_spin_range() {
        let params = ModelParams::with_tree(1.3, 1.0, 3, 4).unwrap();
        let s = ti_fixed_points(&params, 16, 0.5).unwrap();
        assert!(!s.points.is_empty());
        for v in &s.points {
            assert_eq!(v.h.len(), 4);
            assert!(v.residual < 1e-10);
        }
    }
}
