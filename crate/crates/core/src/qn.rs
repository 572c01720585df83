//! Limited-memory inverse proxies.
//!
//! [`BlendedProxy`] runs the L-BFGS two-loop recursion over stored
//! `(s, z)` pairs on top of a base operator, either the inverse scalar
//! Laplacian applied per coordinate or a scaled identity. Vectors use the
//! mesh's free-DOF layout: vertex-major with `d` interleaved coordinates.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use crate::mesh::{Mesh, MeshError};
use crate::numerics::{dot, norm, normest, CsrMatrix, SpdFactor};

/// Number of stored pairs.
pub const DEFAULT_HISTORY: usize = 5;
/// Pairs with `s^T z <= CURVATURE_GUARD * |s| |z|` are dropped.
pub const CURVATURE_GUARD: f64 = 1e-12;

/// Scalar rest-shape Laplacian over the free vertices with its factor.
#[derive(Debug)]
pub struct Laplacian {
    dim: usize,
    matrix: CsrMatrix,
    factor: SpdFactor,
    norm: f64,
}

impl Laplacian {
    pub fn new(mesh: &Mesh) -> Result<Self, MeshError> {
        let matrix = mesh.assemble_laplacian()?;
        let factor = SpdFactor::factorize(&matrix).map_err(|_| MeshError::NotPositiveDefinite)?;
        let norm = normest(&matrix);
        Ok(Self { dim: mesh.dim(), matrix, factor, norm })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Cached power-iteration estimate of `|L|_2`.
    pub fn norm_estimate(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn per_coordinate(&self, v: &[f64], op: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Vec<f64> {
        let d = self.dim;
        let n = self.matrix.nrows();
        assert_eq!(v.len(), n * d, "vector length does not match the free DOF count");
        let columns: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|c| {
                let strided: Vec<f64> = (0..n).map(|k| v[k * d + c]).collect();
                op(&strided)
            })
            .collect();
        let mut out = vec![0.0; n * d];
        for (c, col) in columns.iter().enumerate() {
            for k in 0..n {
                out[k * d + c] = col[k];
            }
        }
        out
    }

    /// `L v`, one coordinate at a time.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.per_coordinate(v, |x| self.matrix.mul_vec(x))
    }

    /// `L^{-1} v`, one coordinate at a time.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.per_coordinate(v, |x| self.factor.solve(x))
    }
}

/// Initial inverse operator of the two-loop recursion.
#[derive(Clone, Debug)]
pub enum BaseOperator {
    /// `L^{-1}` applied per coordinate.
    Laplacian(Arc<Laplacian>),
    /// `gamma I` with `gamma = s^T z / z^T z` of the newest pair (1 when empty).
    ScaledIdentity,
}

/// How the blending weight is chosen.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Adaptive,
    Fixed(f64),
}

#[derive(Clone, Debug)]
struct Pair {
    s: Vec<f64>,
    z: Vec<f64>,
    rho: f64,
}

#[derive(Clone, Debug)]
pub struct BlendedProxy {
    base: BaseOperator,
    capacity: usize,
    history: VecDeque<Pair>,
    area_norm: f64,
}

/// Result of blending a secant pair.
#[derive(Clone, Debug)]
pub struct Blend {
    pub beta: f64,
    pub z: Vec<f64>,
}

impl BlendedProxy {
    pub fn new(base: BaseOperator, capacity: usize, mesh: &Mesh) -> Self {
        let d = mesh.dim() as f64;
        let area_norm = mesh.total_measure().powf(2.0 * (d - 1.0) / d);
        Self { base, capacity, history: VecDeque::with_capacity(capacity + 1), area_norm }
    }

    pub fn with_laplacian(laplacian: Arc<Laplacian>, mesh: &Mesh) -> Self {
        Self::new(BaseOperator::Laplacian(laplacian), DEFAULT_HISTORY, mesh)
    }

    /// `(sum_t a_t)^{2(d-1)/d}`.
    pub fn area_norm(&self) -> f64 {
        self.area_norm
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }

    fn laplacian(&self) -> &Laplacian {
        match &self.base {
            BaseOperator::Laplacian(l) => l,
            BaseOperator::ScaledIdentity => panic!("blending requires a Laplacian base operator"),
        }
    }

    /// `clamp(normest(L) y^T L s / A, 0, 1)`, given `ls = L s`.
    pub fn beta_from(&self, y: &[f64], ls: &[f64]) -> f64 {
        let raw = self.laplacian().norm_estimate() * dot(y, ls) / self.area_norm;
        if raw.is_nan() {
            0.0
        } else {
            raw.clamp(0.0, 1.0)
        }
    }

    pub fn blend_beta(&self, y: &[f64], s: &[f64]) -> f64 {
        self.beta_from(y, &self.laplacian().apply(s))
    }

    /// `z = (1 - beta) y + beta L s`.
    pub fn blend_vector(&self, y: &[f64], s: &[f64], mode: BetaMode) -> Blend {
        let ls = self.laplacian().apply(s);
        let beta = match mode {
            BetaMode::Adaptive => self.beta_from(y, &ls),
            BetaMode::Fixed(b) => b.clamp(0.0, 1.0),
        };
        let z = if beta == 0.0 {
            y.to_vec()
        } else if beta == 1.0 {
            ls
        } else {
            y.iter().zip(&ls).map(|(a, b)| (1.0 - beta) * a + beta * b).collect()
        };
        Blend { beta, z }
    }

    /// Appends a pair, evicting the oldest beyond capacity. Returns false
    /// when the pair fails the curvature guard and is skipped.
    pub fn push_pair(&mut self, s: Vec<f64>, z: Vec<f64>) -> bool {
        let sz = dot(&s, &z);
        if !(sz > CURVATURE_GUARD * norm(&s) * norm(&z)) || self.capacity == 0 {
            return false;
        }
        self.history.push_back(Pair { s, z, rho: 1.0 / sz });
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
        true
    }

    fn apply_base(&self, q: &[f64]) -> Vec<f64> {
        match &self.base {
            BaseOperator::Laplacian(l) => l.solve(q),
            BaseOperator::ScaledIdentity => {
                let gamma = self.history.back().map_or(1.0, |p| 1.0 / (p.rho * dot(&p.z, &p.z)));
                q.iter().map(|v| gamma * v).collect()
            }
        }
    }

    /// `D g` by the two-loop recursion.
    pub fn apply_inverse(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.history.len());
        for pair in self.history.iter().rev() {
            let a = pair.rho * dot(&pair.s, &q);
            q.iter_mut().zip(&pair.z).for_each(|(qi, zi)| *qi -= a * zi);
            alphas.push(a);
        }
        let mut r = self.apply_base(&q);
        for (pair, a) in self.history.iter().zip(alphas.iter().rev()) {
            let b = pair.rho * dot(&pair.z, &r);
            r.iter_mut().zip(&pair.s).for_each(|(ri, si)| *ri += (a - b) * si);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 4x4 grid on [0,1]^2 with the left column fixed: 20 free 2D DOFs.
    fn mesh() -> Mesh {
        let n = 4;
        let mut pos = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                pos.extend([i as f64 / n as f64, j as f64 / n as f64]);
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
        let fixed: Vec<usize> = (0..=n).map(|j| id(0, j)).collect();
        Mesh::new(2, pos, &tris, &fixed).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Dense `L (x) I_d` in the interleaved layout.
    fn dense_kron(l: &Laplacian) -> DMatrix<f64> {
        let d = l.dim();
        let ld = l.matrix().to_dense();
        let n = ld.nrows();
        DMatrix::from_fn(n * d, n * d, |r, c| if r % d == c % d { ld[(r / d, c / d)] } else { 0.0 })
    }

    fn setup() -> (Mesh, Arc<Laplacian>) {
        let m = mesh();
        let l = Arc::new(Laplacian::new(&m).unwrap());
        (m, l)
    }

    #[test]
    fn area_norm_of_unit_square() {
        let (m, l) = setup();
        let p = BlendedProxy::with_laplacian(l, &m);
        assert!((p.area_norm() - 1.0).abs() < 1e-14);
        // A [0,2] x [0,1] domain has total area 2 and area norm 2 in 2D.
        let stretched: Vec<f64> = m.rest_positions().chunks(2).flat_map(|q| [2.0 * q[0], q[1]]).collect();
        let elements: Vec<Vec<usize>> = m.elements().map(<[usize]>::to_vec).collect();
        let m2 = Mesh::new(2, stretched, &elements, &m.fixed_vertices()).unwrap();
        let p2 = BlendedProxy::with_laplacian(Arc::new(Laplacian::new(&m2).unwrap()), &m2);
        assert!((p2.area_norm() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn beta_clamps_and_matches_direct_formula() {
        let (m, l) = setup();
        let p = BlendedProxy::with_laplacian(l.clone(), &m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = m.n_free_dofs();
        let s = random_vec(&mut rng, n);
        let ls = dense_kron(&l) * DVector::from_vec(s.clone());
        // y anti-aligned with Ls gives a negative product.
        let y: Vec<f64> = ls.iter().map(|v| -v).collect();
        assert_eq!(p.blend_beta(&y, &s), 0.0);
        let y: Vec<f64> = ls.iter().map(|v| 1e3 * v).collect();
        assert_eq!(p.blend_beta(&y, &s), 1.0);
        let y: Vec<f64> = random_vec(&mut rng, n).iter().map(|v| 1e-3 * v).collect();
        let direct = (l.norm_estimate() * y.iter().zip(ls.iter()).map(|(a, b)| a * b).sum::<f64>() / p.area_norm()).clamp(0.0, 1.0);
        assert!((p.blend_beta(&y, &s) - direct).abs() < 1e-14);
    }

    #[test]
    fn blend_vector_endpoints() {
        let (m, l) = setup();
        let p = BlendedProxy::with_laplacian(l.clone(), &m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = m.n_free_dofs();
        let s = random_vec(&mut rng, n);
        let y = random_vec(&mut rng, n);
        assert_eq!(p.blend_vector(&y, &s, BetaMode::Fixed(0.0)).z, y);
        assert_eq!(p.blend_vector(&y, &s, BetaMode::Fixed(1.0)).z, l.apply(&s));
        let ls = l.apply(&s);
        let b = p.blend_vector(&ls, &s, BetaMode::Fixed(0.37));
        assert!(b.z.iter().zip(&ls).all(|(a, c)| (a - c).abs() < 1e-14));
    }

    #[test]
    fn ring_buffer_and_guard() {
        let (m, l) = setup();
        let mut p = BlendedProxy::with_laplacian(l, &m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = m.n_free_dofs();
        for _ in 0..6 {
            let s = random_vec(&mut rng, n);
            let z: Vec<f64> = s.iter().map(|v| 2.0 * v + 0.01).collect();
            assert!(p.push_pair(s, z));
        }
        assert_eq!(p.history_len(), 5);
        let mut s = vec![0.0; n];
        s[0] = 1.0;
        let mut z = vec![0.0; n];
        z[1] = 1.0;
        assert!(!p.push_pair(s, z));
        assert_eq!(p.history_len(), 5);
    }

    #[test]
    fn secant_equation_for_newest_pair() {
        let (m, l) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = m.n_free_dofs();
        for base in [BaseOperator::Laplacian(l.clone()), BaseOperator::ScaledIdentity] {
            let mut p = BlendedProxy::new(base, 5, &m);
            for _ in 0..8 {
                let s = random_vec(&mut rng, n);
                let z: Vec<f64> = l.apply(&s).iter().zip(random_vec(&mut rng, n)).map(|(a, b)| a + 0.1 * b).collect();
                if !p.push_pair(s.clone(), z.clone()) {
                    continue;
                }
                let dz = p.apply_inverse(&z);
                let err = dz.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm(&s);
                assert!(err < 1e-10, "secant error {err}");
            }
        }
    }

    #[test]
    fn empty_history_is_sobolev_gradient() {
        let (m, l) = setup();
        let p = BlendedProxy::with_laplacian(l.clone(), &m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_vec(&mut rng, m.n_free_dofs());
        assert_eq!(p.apply_inverse(&g), l.solve(&g));
        assert!(p.apply_inverse(&vec![0.0; g.len()]).iter().all(|&v| v == 0.0));
        let back = l.apply(&l.solve(&g));
        assert!(back.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn single_pair_matches_dense_formula() {
        let (m, l) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = m.n_free_dofs();
        assert_eq!(n, 40);
        let mut p = BlendedProxy::with_laplacian(l.clone(), &m);
        let s = random_vec(&mut rng, n);
        let z: Vec<f64> = l.apply(&s).iter().map(|v| v + 0.05).collect();
        assert!(p.push_pair(s.clone(), z.clone()));
        let g = random_vec(&mut rng, n);

        let linv = dense_kron(&l).try_inverse().unwrap();
        let sv = DVector::from_vec(s);
        let zv = DVector::from_vec(z);
        let rho = 1.0 / sv.dot(&zv);
        let v = DMatrix::identity(n, n) - &zv * sv.transpose() * rho;
        let d = v.transpose() * linv * &v + &sv * sv.transpose() * rho;
        let expected = d * DVector::from_vec(g.clone());
        let got = p.apply_inverse(&g);
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10 * expected.norm());
        }
    }

    #[test]
    fn guarded_history_is_positive_definite() {
        let (m, l) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = m.n_free_dofs();
        let mut p = BlendedProxy::with_laplacian(l.clone(), &m);
        for _ in 0..20 {
            let s = random_vec(&mut rng, n);
            // Often indefinite candidates; the guard must keep D SPD.
            let z = random_vec(&mut rng, n);
            p.push_pair(s, z);
            // Dense operator by columns.
            let dense = DMatrix::from_fn(n, n, |_, _| 0.0);
            let mut dense = dense;
            for c in 0..n {
                let mut e = vec![0.0; n];
                e[c] = 1.0;
                let col = p.apply_inverse(&e);
                for r in 0..n {
                    dense[(r, c)] = col[r];
                }
            }
            let sym = (&dense + dense.transpose()) * 0.5;
            assert!((&dense - &sym).norm() < 1e-9 * dense.norm());
            assert!(crate::numerics::min_eigenvalue(&sym) > 0.0);
            for _ in 0..5 {
                let g = random_vec(&mut rng, n);
                assert!(dot(&g, &p.apply_inverse(&g)) > 0.0);
            }
        }
    }
}
