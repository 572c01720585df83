//! Largest non-inverting step and a weak Wolfe line search.

use rayon::prelude::*;

use crate::energy::EnergyEval;
use crate::mesh::Mesh;
use crate::numerics::dot;

pub const ARMIJO: f64 = 1e-4;
pub const CURVATURE: f64 = 0.9;
/// Fraction of the largest non-inverting step tried first.
pub const SAFETY_FACTOR: f64 = 0.9;
pub const MIN_STEP: f64 = 1e-16;
const MAX_EVALUATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LineSearchError {
    #[error("direction is not a descent direction (slope {slope:e})")]
    NotDescentDirection { slope: f64 },
    #[error("line search stalled at step {alpha:e} after {evaluations} evaluations")]
    Stalled { alpha: f64, evaluations: usize },
}

/// `det(F_t(x + alpha p))` as coefficients in increasing degree.
pub fn determinant_polynomial(mesh: &Mesh, x: &[f64], dir: &[f64], t: usize) -> [f64; 4] {
    let f0 = mesh.deformation_gradient(x, t);
    let f1 = mesh.deformation_gradient(dir, t);
    if mesh.dim() == 2 {
        [f0.determinant(), f0.cofactor().dot(&f1), f1.determinant(), 0.0]
    } else {
        [f0.determinant(), f0.cofactor().dot(&f1), f1.cofactor().dot(&f0), f1.determinant()]
    }
}

/// Largest `alpha` such that no element collapses on `[0, alpha)`; `p` is a
/// free-DOF direction. `+inf` when no element ever collapses.
pub fn max_noninverting_step(mesh: &Mesh, x: &[f64], p: &[f64]) -> f64 {
    let dir = mesh.expand_direction(p);
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| smallest_positive_root(&determinant_polynomial(mesh, x, &dir, t)).unwrap_or(f64::INFINITY))
        .reduce(|| f64::INFINITY, f64::min)
}

fn eval_poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * t + k)
}

fn degree(c: &[f64]) -> usize {
    (0..c.len()).rev().find(|&k| c[k] != 0.0).unwrap_or(0)
}

/// Real roots of a polynomial of degree at most 3 in closed form.
fn real_roots(c: &[f64]) -> Vec<f64> {
    match degree(c) {
        0 => vec![],
        1 => vec![-c[0] / c[1]],
        2 => {
            let (a, b, k) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * k;
            if disc < 0.0 {
                return vec![];
            }
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q == 0.0 {
                return vec![0.0];
            }
            vec![q / a, k / q]
        }
        _ => {
            let (bb, cc, dd) = (c[2] / c[3], c[1] / c[3], c[0] / c[3]);
            let shift = bb / 3.0;
            let p = cc - bb * bb / 3.0;
            let q = 2.0 * bb * bb * bb / 27.0 - bb * cc / 3.0 + dd;
            let disc = q * q / 4.0 + p * p * p / 27.0;
            if disc < 0.0 {
                let r = 2.0 * (-p / 3.0).sqrt();
                let phi = ((3.0 * q) / (p * r)).clamp(-1.0, 1.0).acos() / 3.0;
                (0..3)
                    .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
                    .collect()
            } else {
                let sq = disc.sqrt();
                let t = (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt();
                vec![t - shift]
            }
        }
    }
}

fn newton_polish(c: &[f64], mut t: f64) -> f64 {
    let dc: Vec<f64> = (1..c.len()).map(|k| k as f64 * c[k]).collect();
    for _ in 0..4 {
        let d = eval_poly(&dc, t);
        if d == 0.0 {
            break;
        }
        let next = t - eval_poly(c, t) / d;
        if !next.is_finite() || (eval_poly(c, next).abs() >= eval_poly(c, t).abs()) {
            break;
        }
        t = next;
    }
    t
}

/// Smallest positive root by bisection on monotone pieces. Reference
/// method and fallback for the closed form.
pub fn smallest_positive_root_bisection(c: &[f64]) -> Option<f64> {
    let n = degree(c);
    if n == 0 {
        return None;
    }
    let dc: Vec<f64> = (1..=n).map(|k| k as f64 * c[k]).collect();
    let mut breaks: Vec<f64> = real_roots(&dc).into_iter().filter(|&t| t > 0.0 && t.is_finite()).collect();
    breaks.sort_by(f64::total_cmp);
    // Cauchy bound on root magnitude.
    let bound = 1.0 + (0..n).map(|k| (c[k] / c[n]).abs()).fold(0.0, f64::max);
    breaks.push(bound);
    let mut lo = 0.0;
    for hi in breaks {
        if hi <= lo {
            continue;
        }
        if eval_poly(c, lo) > 0.0 && eval_poly(c, hi) <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if eval_poly(c, mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(b);
        }
        lo = hi;
    }
    None
}

/// Smallest positive root of `c[0] + c[1] t + c[2] t^2 + c[3] t^3` with
/// `c[0] > 0`, where the polynomial first reaches zero.
pub fn smallest_positive_root(c: &[f64]) -> Option<f64> {
    if !(c[0] > 0.0) {
        return Some(0.0);
    }
    let candidate = real_roots(c)
        .into_iter()
        .filter(|t| t.is_finite() && *t > 0.0)
        .map(|t| newton_polish(c, t))
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    // Certify: the polynomial must stay positive before the candidate and
    // the candidate must be a root to working precision.
    let scale_at = |t: f64| c.iter().enumerate().map(|(k, v)| v.abs() * t.powi(k as i32)).sum::<f64>();
    let n = degree(c);
    let dc: Vec<f64> = (1..=n).map(|k| k as f64 * c[k]).collect();
    let stays_positive = real_roots(&dc)
        .into_iter()
        .filter(|&t| t > 0.0 && t < candidate)
        .all(|t| eval_poly(c, t) > 0.0);
    let accurate = candidate.is_infinite() || eval_poly(c, candidate).abs() <= 1e-12 * scale_at(candidate);
    if stays_positive && accurate {
        return candidate.is_finite().then_some(candidate);
    }
    smallest_positive_root_bisection(c)
}

/// Objective restricted to the free DOFs. `None` marks points outside the
/// energy's domain, such as configurations with inverted elements.
pub trait LineObjective {
    fn evaluate(&self, u: &[f64]) -> Option<EnergyEval>;
}

#[derive(Clone, Debug)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub alpha_max: f64,
    pub evaluations: usize,
    pub armijo: bool,
    pub curvature: bool,
    pub point: Vec<f64>,
    pub eval: EnergyEval,
}

/// Initial trial step `min(1, 0.9 alpha_max)`.
pub fn initial_step(alpha_max: f64) -> f64 {
    (SAFETY_FACTOR * alpha_max).min(1.0)
}

/// Weak Wolfe search on `[0, alpha_init]` by bisection. The curvature
/// condition is waived only when its bracket would leave the interval,
/// i.e. `alpha_init` itself satisfies Armijo while still descending.
pub fn wolfe_search(
    objective: &impl LineObjective,
    u: &[f64],
    current: &EnergyEval,
    p: &[f64],
    alpha_init: f64,
    alpha_max: f64,
) -> Result<LineSearchResult, LineSearchError> {
    let slope0 = dot(&current.gradient, p);
    if !(slope0 < 0.0) {
        return Err(LineSearchError::NotDescentDirection { slope: slope0 });
    }
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut alpha = alpha_init;
    let mut evaluations = 0;
    while evaluations < MAX_EVALUATIONS {
        if !(alpha >= MIN_STEP) {
            break;
        }
        let trial: Vec<f64> = u.iter().zip(p).map(|(a, b)| a + alpha * b).collect();
        let eval = objective.evaluate(&trial);
        evaluations += 1;
        let Some(eval) = eval else {
            hi = alpha;
            alpha = 0.5 * (lo + hi);
            continue;
        };
        if !(eval.value <= current.value + ARMIJO * alpha * slope0) || !(eval.value < current.value) {
            hi = alpha;
            alpha = 0.5 * (lo + hi);
            continue;
        }
        let slope = dot(&eval.gradient, p);
        if slope < CURVATURE * slope0 && hi.is_infinite() && alpha >= alpha_init {
            return Ok(LineSearchResult { alpha, alpha_max, evaluations, armijo: true, curvature: false, point: trial, eval });
        }
        if slope < CURVATURE * slope0 {
            lo = alpha;
            let next = 0.5 * (lo + hi);
            if next <= lo || next >= hi {
                return Ok(LineSearchResult { alpha, alpha_max, evaluations, armijo: true, curvature: false, point: trial, eval });
            }
            alpha = next;
            continue;
        }
        return Ok(LineSearchResult { alpha, alpha_max, evaluations, armijo: true, curvature: true, point: trial, eval });
    }
    Err(LineSearchError::Stalled { alpha, evaluations })
}
