//! Barrier-aware direction filtering.
//!
//! Elements that a full step would collapse are linearized as
//! `b + C^T p >= 0` and the direction is projected toward that set by a few
//! damped projected Jacobi sweeps on the small complementarity problem
//! `0 <= lambda  _|_  M lambda + c >= 0`, `M = C^T C`, `c = C^T p + b`.

use rayon::prelude::*;

use crate::mesh::{Mesh, SparseColumns};
use crate::numerics::dot;

/// Elements whose determinant after the full step falls below this are active.
pub const ACTIVE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpjSettings {
    pub damping: f64,
    pub max_iterations: usize,
    pub absolute_tolerance: f64,
    /// Stop when the residual changes by less than this fraction; 0 disables.
    pub relative_tolerance: f64,
}

impl Default for DpjSettings {
    fn default() -> Self {
        Self { damping: 0.5, max_iterations: 20, absolute_tolerance: 1e-6, relative_tolerance: 1e-3 }
    }
}

/// Elements `t` with `det F_t(x + p) < delta`. `p` is a free-DOF direction.
pub fn active_set(mesh: &Mesh, x: &[f64], p: &[f64], delta: f64) -> Vec<usize> {
    let stepped = mesh.step(x, p, 1.0);
    mesh.orientation(&stepped)
        .into_iter()
        .enumerate()
        .filter_map(|(t, det)| (det < delta).then_some(t))
        .collect()
}

/// Fischer-Burmeister residual, zero exactly when `0 <= a _|_ b >= 0`.
pub fn fb_residual(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let phi = x + y - x.hypot(y);
            phi * phi
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug)]
pub struct LcpProblem {
    jacobian: SparseColumns,
    /// Element index of each column.
    elements: Vec<usize>,
    b: Vec<f64>,
    c: Vec<f64>,
    diag_inv: Vec<f64>,
}

impl LcpProblem {
    /// Linearizes the orientations of `active` elements at `x` for the
    /// direction `p`. Elements with no free vertex are dropped.
    pub fn build(mesh: &Mesh, x: &[f64], p: &[f64], active: &[usize]) -> Self {
        let mut jacobian = mesh.orientation_jacobian(x, active);
        let norms: Vec<f64> = (0..jacobian.ncols()).map(|k| jacobian.column_norm_squared(k)).collect();
        let keep: Vec<bool> = norms.iter().map(|&n| n > 0.0).collect();
        jacobian.retain(|k, _| keep[k]);
        let elements: Vec<usize> = active.iter().zip(&keep).filter(|(_, &k)| k).map(|(&t, _)| t).collect();
        let b: Vec<f64> = elements.iter().map(|&t| mesh.deformation_gradient(x, t).determinant()).collect();
        Self::from_parts(jacobian, elements, b, p)
    }

    /// Assembles the problem from an explicit Jacobian, for callers that
    /// already have one. Columns must be nonzero.
    pub fn from_parts(jacobian: SparseColumns, elements: Vec<usize>, b: Vec<f64>, p: &[f64]) -> Self {
        assert_eq!(jacobian.ncols(), b.len());
        let ctp = jacobian.transpose_mul(p);
        let c = ctp.iter().zip(&b).map(|(a, b)| a + b).collect();
        let diag_inv = (0..jacobian.ncols()).map(|k| 1.0 / jacobian.column_norm_squared(k)).collect();
        Self { jacobian, elements, b, c, diag_inv }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn jacobian(&self) -> &SparseColumns {
        &self.jacobian
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Fischer-Burmeister residual of the Jacobi-normalized problem, with
    /// `M_kk lambda_k` in place of `lambda_k`. Both arguments then carry the
    /// units of the constraint values, so the residual does not depend on how
    /// the mesh is scaled.
    pub fn residual(&self, lambda: &[f64], w: &[f64]) -> f64 {
        let scaled: Vec<f64> = lambda.iter().zip(&self.diag_inv).map(|(l, e)| l / e).collect();
        fb_residual(&scaled, w)
    }

    /// `M lambda + c` without forming `M`.
    pub fn slack(&self, lambda: &[f64]) -> Vec<f64> {
        let cl = self.jacobian.mul(lambda);
        self.jacobian.transpose_mul(&cl).iter().zip(&self.c).map(|(a, b)| a + b).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DpjOutcome {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
}

/// Damped projected Jacobi from `lambda = 0`.
pub fn dpj_solve(lcp: &LcpProblem, settings: &DpjSettings) -> DpjOutcome {
    let m = lcp.len();
    let mut lambda = vec![0.0; m];
    let mut w = lcp.c.clone();
    let initial = lcp.residual(&lambda, &w);
    let mut residual = initial;
    let mut iterations = 0;
    while iterations < settings.max_iterations && residual >= settings.absolute_tolerance {
        lambda = lambda
            .par_iter()
            .zip(&w)
            .zip(&lcp.diag_inv)
            .map(|((l, wk), e)| (l - settings.damping * e * wk).max(0.0))
            .collect();
        w = lcp.slack(&lambda);
        iterations += 1;
        let next = lcp.residual(&lambda, &w);
        let change = (next - residual).abs();
        residual = next;
        if settings.relative_tolerance > 0.0 && change < settings.relative_tolerance * residual {
            break;
        }
    }
    DpjOutcome { lambda, iterations, initial_residual: initial, residual }
}

/// `p + C lambda`. Zero multipliers contribute nothing, so an all-zero
/// `lambda` returns `p` unchanged bit for bit.
pub fn filter_direction(p: &[f64], jacobian: &SparseColumns, lambda: &[f64]) -> Vec<f64> {
    let mut out = p.to_vec();
    for (k, &l) in lambda.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        for &(i, c) in jacobian.column(k) {
            out[i] += c * l;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct FilterOutcome {
    pub direction: Vec<f64>,
    /// Active constraints after dropping columns without free DOFs.
    pub active: usize,
    pub dpj_iterations: usize,
    pub residual: f64,
}

/// Full filtering pass: active set, LCP, DPJ, filtered direction.
pub fn filter(mesh: &Mesh, x: &[f64], p: &[f64], settings: &DpjSettings) -> FilterOutcome {
    let active = active_set(mesh, x, p, ACTIVE_THRESHOLD);
    if active.is_empty() {
        return FilterOutcome { direction: p.to_vec(), active: 0, dpj_iterations: 0, residual: 0.0 };
    }
    let lcp = LcpProblem::build(mesh, x, p, &active);
    let outcome = dpj_solve(&lcp, settings);
    FilterOutcome {
        direction: filter_direction(p, lcp.jacobian(), &outcome.lambda),
        active: lcp.len(),
        dpj_iterations: outcome.iterations,
        residual: outcome.residual,
    }
}

/// Linearized constraint values `b + C^T q` for a direction `q`.
pub fn linearized_constraints(lcp: &LcpProblem, q: &[f64]) -> Vec<f64> {
    lcp.jacobian.transpose_mul(q).iter().zip(&lcp.b).map(|(a, b)| a + b).collect()
}

/// Directional derivative check used by callers that must fall back to the
/// unfiltered direction.
pub fn is_descent(direction: &[f64], gradient: &[f64]) -> bool {
    dot(direction, gradient) < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fb_examples() {
        assert_eq!(fb_residual(&[0.0, 0.0], &[1.0, 3.0]), 0.0);
        assert!((fb_residual(&[1.0], &[1.0]) - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(fb_residual(&[2.0], &[0.0]), 0.0);
        assert!(fb_residual(&[1.0], &[-1.0]) > 0.0);
    }

    fn triangle() -> Mesh {
        Mesh::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], &[vec![0, 1, 2]], &[0, 2]).unwrap()
    }

    #[test]
    fn active_set_examples() {
        let m = triangle();
        let x = m.rest_configuration().unwrap();
        assert!(active_set(&m, &x, &[0.0, 0.0], ACTIVE_THRESHOLD).is_empty());
        // Moving vertex 1 by (-2, 0) sends det to -1.
        assert_eq!(active_set(&m, &x, &[-2.0, 0.0], ACTIVE_THRESHOLD), vec![0]);
    }

    #[test]
    fn active_set_matches_direct_determinants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 5;
        let mut pos = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                pos.extend([i as f64, j as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut tris = Vec::new();
        for j in 0..n {
            for i in 0..n {
                tris.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let m = Mesh::new(2, pos, &tris, &[0]).unwrap();
        let x = m.rest_configuration().unwrap();
        for _ in 0..20 {
            let p: Vec<f64> = (0..m.n_free_dofs()).map(|_| rng.gen_range(-0.8..0.8)).collect();
            for scale in [1.0, 0.5] {
                let q: Vec<f64> = p.iter().map(|v| v * scale).collect();
                let dets = m.orientation(&m.step(&x, &q, 1.0));
                let expected: Vec<usize> = (0..m.n_elements()).filter(|&t| dets[t] < ACTIVE_THRESHOLD).collect();
                assert_eq!(active_set(&m, &x, &q, ACTIVE_THRESHOLD), expected);
            }
        }
    }

    #[test]
    fn non_collapsing_direction_needs_no_iterations() {
        let m = triangle();
        let x = m.rest_configuration().unwrap();
        let lcp = LcpProblem::build(&m, &x, &[0.1, 0.0], &[0]);
        assert!(lcp.c().iter().all(|&c| c >= 0.0));
        let out = dpj_solve(&lcp, &DpjSettings::default());
        assert_eq!(out.iterations, 0);
        assert_eq!(out.residual, 0.0);
        assert!(out.lambda.iter().all(|&l| l == 0.0));
        let p = [0.1, 0.0];
        assert_eq!(filter_direction(&p, lcp.jacobian(), &out.lambda), p.to_vec());
    }

    #[test]
    fn scalar_lcp() {
        // M = (4), c = (-8): lambda* = 2.
        let jac = SparseColumns::new(1, vec![vec![(0, 2.0)]]);
        let lcp = LcpProblem::from_parts(jac, vec![0], vec![-8.0], &[0.0]);
        let settings = DpjSettings { max_iterations: 200, relative_tolerance: 0.0, ..DpjSettings::default() };
        let out = dpj_solve(&lcp, &settings);
        assert!((out.lambda[0] - 2.0).abs() < 1e-6);
        assert!(out.residual < 1e-6);
    }

    #[test]
    fn all_fixed_columns_are_dropped() {
        let m = Mesh::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[vec![0, 1, 2], vec![1, 3, 2]], &[0, 1, 2])
            .unwrap();
        let x = m.rest_configuration().unwrap();
        let lcp = LcpProblem::build(&m, &x, &[-5.0, -5.0], &[0, 1]);
        assert_eq!(lcp.elements(), &[1]);
    }

    #[test]
    fn single_constraint_is_satisfied_after_filtering() {
        let m = triangle();
        let x = m.rest_configuration().unwrap();
        let p = [-2.0, 0.3];
        let lcp = LcpProblem::build(&m, &x, &p, &[0]);
        // An FB residual of 1e-6 only bounds the slack by about 1e-6, so
        // iterate further before checking the 1e-8 feasibility margin.
        let settings = DpjSettings { max_iterations: 1000, relative_tolerance: 0.0, absolute_tolerance: 1e-9, damping: 0.5 };
        let out = dpj_solve(&lcp, &settings);
        assert!(out.residual < 1e-6);
        let pl = filter_direction(&p, lcp.jacobian(), &out.lambda);
        assert!(linearized_constraints(&lcp, &pl).iter().all(|&v| v >= -1e-8));
        // p^l - p lies in the span of the single column.
        let col = lcp.jacobian().to_dense();
        let diff = DVector::from_vec(pl.iter().zip(&p).map(|(a, b)| a - b).collect());
        let coef = col.column(0).dot(&diff) / col.column(0).norm_squared();
        assert!((diff - col.column(0) * coef).norm() < 1e-14);
    }

    pub(crate) fn random_lcp(rng: &mut ChaCha8Rng) -> LcpProblem {
        let n = 60;
        let m = rng.gen_range(1..=8);
        let columns: Vec<Vec<(usize, f64)>> = (0..m)
            .map(|_| {
                let start = rng.gen_range(0..n - 6);
                (start..start + 6).map(|i| (i, rng.gen_range(-1.0..1.0))).collect()
            })
            .collect();
        let jac = SparseColumns::new(n, columns);
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        LcpProblem::from_parts(jac, (0..m).collect(), b, &p)
    }

    /// Enumerates complementary bases; returns the solution with the
    /// smallest residual.
    pub(crate) fn enumerate_lcp(lcp: &LcpProblem) -> Vec<f64> {
        let dense = lcp.jacobian().to_dense();
        let mmat = dense.transpose() * &dense;
        let c = DVector::from_row_slice(lcp.c());
        let m = lcp.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let idx: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
            let mut lambda = vec![0.0; m];
            if !idx.is_empty() {
                let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, k| mmat[(idx[r], idx[k])]);
                let rhs = DVector::from_fn(idx.len(), |r, _| -c[idx[r]]);
                let Some(sol) = sub.lu().solve(&rhs) else { continue };
                for (r, &i) in idx.iter().enumerate() {
                    lambda[i] = sol[r];
                }
            }
            if lambda.iter().any(|&l| l < -1e-12) {
                continue;
            }
            let w = &mmat * DVector::from_vec(lambda.clone()) + &c;
            if w.iter().any(|&v| v < -1e-10) {
                continue;
            }
            let r = fb_residual(&lambda, w.as_slice());
            if best.as_ref().is_none_or(|(br, _)| r < *br) {
                best = Some((r, lambda));
            }
        }
        best.expect("LCP with PSD M and feasible data has a solution").1
    }

    #[test]
    fn dpj_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tight = DpjSettings { max_iterations: 1_000_000, absolute_tolerance: 1e-10, relative_tolerance: 0.0, damping: 0.5 };
        for _ in 0..50 {
            let lcp = random_lcp(&mut rng);
            let oracle = enumerate_lcp(&lcp);
            let out = dpj_solve(&lcp, &tight);
            for (a, b) in out.lambda.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", out.lambda, oracle);
            }
            assert!(out.lambda.iter().all(|&l| l >= 0.0));
            let capped = dpj_solve(&lcp, &DpjSettings::default());
            assert!(capped.residual <= capped.initial_residual);
        }
    }

    #[test]
    fn dpj_residual_is_mostly_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut monotone = 0;
        let trials = 200;
        for _ in 0..trials {
            let lcp = random_lcp(&mut rng);
            let mut prev = f64::INFINITY;
            let mut ok = true;
            for j in 0..=20 {
                let s = DpjSettings { max_iterations: j, relative_tolerance: 0.0, absolute_tolerance: 0.0, damping: 0.5 };
                let r = dpj_solve(&lcp, &s).residual;
                if r > prev * (1.0 + 1e-12) {
                    ok = false;
                }
                prev = r;
            }
            monotone += usize::from(ok);
        }
        assert!(monotone as f64 >= 0.95 * trials as f64, "{monotone} of {trials} monotone");
    }
}
