//! Real roots of `a y^3 + b y^2 + c y + d` by Cardano's method.
//!
//! The caller decides the root structure (three simple, one simple plus
//! one double, or a single real root) from a discriminant it trusts; the
//! solver then uses the trigonometric form for three real roots and the
//! hyperbolic forms for a single real root, and finishes each root with a
//! few Newton steps on the undepressed polynomial.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootStructure {
    ThreeSimple,
    SimpleAndDouble,
    OneReal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRoot {
    pub value: f64,
    pub multiplicity: u8,
}

/// Discriminant `18abcd - 4b^3 d + b^2 c^2 - 4ac^3 - 27a^2 d^2`.
pub fn discriminant(a: f64, b: f64, c: f64, d: f64) -> f64 {
    18.0 * a * b * c * d - 4.0 * b.powi(3) * d + b * b * c * c - 4.0 * a * c.powi(3) - 27.0 * a * a * d * d
}

fn eval(coeffs: [f64; 4], y: f64) -> (f64, f64, f64) {
    let [a, b, c, d] = coeffs;
    let f = ((a * y + b) * y + c) * y + d;
    let df = (3.0 * a * y + 2.0 * b) * y + c;
    let d2f = 6.0 * a * y + 2.0 * b;
    (f, df, d2f)
}

/// Newton refinement that only accepts steps which do not increase `|f|`.
fn polish_simple(coeffs: [f64; 4], mut y: f64) -> f64 {
    let (mut f, mut df, _) = eval(coeffs, y);
    for _ in 0..12 {
        if f == 0.0 || df == 0.0 {
            break;
        }
        let step = f / df;
        let next = y - step;
        let (fn_, dfn, _) = eval(coeffs, next);
        if fn_.abs() > f.abs() {
            break;
        }
        y = next;
        f = fn_;
        df = dfn;
        if step.abs() <= 1e-17 * y.abs() {
            break;
        }
    }
    y
}

/// A double root is a simple root of the derivative.
fn polish_double(coeffs: [f64; 4], mut y: f64) -> f64 {
    for _ in 0..12 {
        let (_, df, d2f) = eval(coeffs, y);
        if df == 0.0 || d2f == 0.0 {
            break;
        }
        let step = df / d2f;
        y -= step;
        if step.abs() <= 1e-17 * y.abs() {
            break;
        }
    }
    y
}

/// Real roots sorted in descending order.
///
/// `structure` must agree with the sign of the discriminant; near a double
/// root pass [`RootStructure::SimpleAndDouble`], which returns the double
/// root once with multiplicity 2.
pub fn real_roots(coeffs: [f64; 4], structure: RootStructure) -> Vec<RealRoot> {
    let [a, b, c, d] = coeffs;
    assert!(a != 0.0, "leading coefficient must be nonzero");
    let (bn, cn, dn) = (b / a, c / a, d / a);
    let shift = bn / 3.0;
    // depressed cubic t^3 + pp t + qq with y = t - shift
    let pp = cn - bn * bn / 3.0;
    let qq = 2.0 * bn.powi(3) / 27.0 - bn * cn / 3.0 + dn;

    let mut roots = match structure {
        RootStructure::ThreeSimple if pp < 0.0 => {
            let r = 2.0 * (-pp / 3.0).sqrt();
            let arg = ((3.0 * qq) / (2.0 * pp) * (-3.0 / pp).sqrt()).clamp(-1.0, 1.0);
            let phi = arg.acos() / 3.0;
            (0..3)
                .map(|j| {
                    let t = r * (phi - 2.0 * PI * f64::from(j) / 3.0).cos();
                    RealRoot {
                        value: polish_simple(coeffs, t - shift),
                        multiplicity: 1,
                    }
                })
                .collect::<Vec<_>>()
        }
        RootStructure::ThreeSimple | RootStructure::SimpleAndDouble => {
            if pp == 0.0 {
                vec![RealRoot {
                    value: -shift,
                    multiplicity: 3,
                }]
            } else {
                let simple = 3.0 * qq / pp - shift;
                let double = -3.0 * qq / (2.0 * pp) - shift;
                vec![
                    RealRoot {
                        value: polish_simple(coeffs, simple),
                        multiplicity: 1,
                    },
                    RealRoot {
                        value: polish_double(coeffs, double),
                        multiplicity: 2,
                    },
                ]
            }
        }
        RootStructure::OneReal => {
            let t = if pp > 0.0 {
                let s = (pp / 3.0).sqrt();
                -2.0 * s * ((3.0 * qq / (2.0 * pp) / s).asinh() / 3.0).sinh()
            } else if pp < 0.0 {
                let s = (-pp / 3.0).sqrt();
                let arg = (-3.0 * qq.abs() / (2.0 * pp) / s).max(1.0);
                -2.0 * qq.signum() * s * (arg.acosh() / 3.0).cosh()
            } else {
                (-qq).cbrt()
            };
            vec![RealRoot {
                value: polish_simple(coeffs, t - shift),
                multiplicity: 1,
            }]
        }
    };
    roots.sort_by(|x, y| y.value.total_cmp(&x.value));
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(r: &[RealRoot]) -> Vec<f64> {
        r.iter().map(|x| x.value).collect()
    }

    #[test]
    fn three_simple_roots() {
        // (y-1)(y-2)(y-3) = y^3 - 6y^2 + 11y - 6
        let c = [1.0, -6.0, 11.0, -6.0];
        assert!(discriminant(c[0], c[1], c[2], c[3]) > 0.0);
        let r = values(&real_roots(c, RootStructure::ThreeSimple));
        for (got, want) in r.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn one_real_root_both_hyperbolic_forms() {
        // (y-1)(y^2+2): pp > 0
        let r = real_roots([1.0, -1.0, 2.0, -2.0], RootStructure::OneReal);
        assert_eq!(r.len(), 1);
        assert!((r[0].value - 1.0).abs() < 1e-15);
        // (y-3)(y^2+y+1) = y^3 - 2y^2 - 2y - 3: pp < 0
        let c = [1.0, -2.0, -2.0, -3.0];
        assert!(discriminant(c[0], c[1], c[2], c[3]) < 0.0);
        let r = real_roots(c, RootStructure::OneReal);
        assert!((r[0].value - 3.0).abs() < 1e-14);
    }

    #[test]
    fn double_root_is_reported_once() {
        // (y-1)^2 (y-4) = y^3 - 6y^2 + 9y - 4
        let r = real_roots([1.0, -6.0, 9.0, -4.0], RootStructure::SimpleAndDouble);
        assert_eq!(r.len(), 2);
        assert!((r[0].value - 4.0).abs() < 1e-14);
        assert_eq!(r[0].multiplicity, 1);
        assert!((r[1].value - 1.0).abs() < 1e-12);
        assert_eq!(r[1].multiplicity, 2);
    }

    #[test]
    fn widely_separated_roots_keep_relative_accuracy() {
        // roots 1e-6, 1, 1e6
        let (r1, r2, r3) = (1e6, 1.0, 1e-6);
        let c = [1.0, -(r1 + r2 + r3), r1 * r2 + r1 * r3 + r2 * r3, -(r1 * r2 * r3)];
        let r = values(&real_roots(c, RootStructure::ThreeSimple));
        assert!((r[0] / r1 - 1.0).abs() < 1e-12);
        assert!((r[1] / r2 - 1.0).abs() < 1e-12);
        assert!((r[2] / r3 - 1.0).abs() < 1e-9, "{}", r[2]);
    }
}
