//! Simplicial meshes with precomputed rest geometry.
//!
//! A mesh stores its rest shape, connectivity and the Dirichlet-constrained
//! vertex set. Configurations are plain `&[f64]` slices of length `d * n`,
//! vertex-major with interleaved coordinates. Quantities that live on the
//! unknowns (gradients, directions, the Laplacian) use the reduced ordering of
//! [`Mesh::free_vertices`], again vertex-major.

mod tutte;

pub use tutte::{boundary_loop, tutte_embed, BoundaryShape};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::numerics::{CsrMatrix, TripletBuilder};
use crate::small::SquareMat;

/// Degenerate-element threshold relative to `bbox^d`.
const DEGENERACY_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("element {element} has degenerate or inverted rest shape (measure {measure:e})")]
    DegenerateRestElement { element: usize, measure: f64 },
    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unsupported dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),
    #[error("element {element} has {found} vertices, expected {expected}")]
    WrongArity { element: usize, found: usize, expected: usize },
    #[error("rest position array has length {len}, not a multiple of {dim}")]
    BadPositionLength { len: usize, dim: usize },
    #[error("Laplacian is not positive definite: pin at least one vertex per connected component")]
    NotPositiveDefinite,
    #[error("mesh is not a topological disk: {0}")]
    NonDiskTopology(String),
}

#[derive(Clone, Debug)]
struct ElementRest {
    measure: f64,
    /// Gradient of each barycentric shape function, `d` entries used.
    shape_gradients: [[f64; 3]; 4],
    /// Measure of the facet opposite each local vertex.
    facet_measures: [f64; 4],
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    rest_dim: usize,
    rest_positions: Vec<f64>,
    elements: Vec<usize>,
    fixed: Vec<bool>,
    free_slot: Vec<Option<usize>>,
    free_vertices: Vec<usize>,
    rest: Vec<ElementRest>,
}

impl Mesh {
    /// Builds a planar (`dim = 2`) or volumetric (`dim = 3`) mesh whose rest
    /// shape is given by `rest_positions` in the same dimension.
    pub fn new(
        dim: usize,
        rest_positions: Vec<f64>,
        elements: &[Vec<usize>],
        fixed_vertices: &[usize],
    ) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::UnsupportedDimension(dim));
        }
        Self::build(dim, dim, rest_positions, elements, fixed_vertices)
    }

    /// Builds a triangle mesh embedded in 3D for parametrization: the
    /// unknowns are 2D, and each triangle's rest shape is its own isometric
    /// planar frame.
    pub fn from_surface(
        positions: Vec<f64>,
        triangles: &[Vec<usize>],
        fixed_vertices: &[usize],
    ) -> Result<Self, MeshError> {
        Self::build(2, 3, positions, triangles, fixed_vertices)
    }

    fn build(
        dim: usize,
        rest_dim: usize,
        rest_positions: Vec<f64>,
        elements: &[Vec<usize>],
        fixed_vertices: &[usize],
    ) -> Result<Self, MeshError> {
        if rest_positions.len() % rest_dim != 0 {
            return Err(MeshError::BadPositionLength { len: rest_positions.len(), dim: rest_dim });
        }
        let n = rest_positions.len() / rest_dim;
        let arity = dim + 1;
        let mut flat = Vec::with_capacity(elements.len() * arity);
        for (t, e) in elements.iter().enumerate() {
            if e.len() != arity {
                return Err(MeshError::WrongArity { element: t, found: e.len(), expected: arity });
            }
            for &v in e {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange { index: v, len: n });
                }
            }
            flat.extend_from_slice(e);
        }
        let mut fixed = vec![false; n];
        for &v in fixed_vertices {
            if v >= n {
                return Err(MeshError::IndexOutOfRange { index: v, len: n });
            }
            fixed[v] = true;
        }
        let mut free_slot = vec![None; n];
        let mut free_vertices = Vec::new();
        for v in 0..n {
            if !fixed[v] {
                free_slot[v] = Some(free_vertices.len());
                free_vertices.push(v);
            }
        }

        let extent = bounding_extent(&rest_positions, rest_dim);
        let tolerance = DEGENERACY_TOLERANCE * extent.powi(dim as i32);
        let mut rest = Vec::with_capacity(elements.len());
        for (t, e) in flat.chunks(arity).enumerate() {
            let local = local_rest_coordinates(&rest_positions, rest_dim, dim, e);
            let element = element_rest(dim, &local);
            if !(element.measure > tolerance) {
                return Err(MeshError::DegenerateRestElement { element: t, measure: element.measure });
            }
            rest.push(element);
        }

        Ok(Self { dim, rest_dim, rest_positions, elements: flat, fixed, free_slot, free_vertices, rest })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the stored rest positions: 3 for surfaces, `dim` otherwise.
    pub fn rest_dim(&self) -> usize {
        self.rest_dim
    }

    pub fn is_surface(&self) -> bool {
        self.rest_dim != self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.fixed.len()
    }

    pub fn n_elements(&self) -> usize {
        self.rest.len()
    }

    #[inline]
    pub fn element(&self, t: usize) -> &[usize] {
        let a = self.dim + 1;
        &self.elements[t * a..(t + 1) * a]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.elements.chunks(self.dim + 1)
    }

    pub fn rest_positions(&self) -> &[f64] {
        &self.rest_positions
    }

    pub fn rest_measure(&self, t: usize) -> f64 {
        self.rest[t].measure
    }

    pub fn total_measure(&self) -> f64 {
        self.rest.iter().map(|r| r.measure).sum()
    }

    pub fn is_fixed(&self, v: usize) -> bool {
        self.fixed[v]
    }

    pub fn fixed_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.fixed[v]).collect()
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    /// Position of vertex `v` among the free vertices, if it is free.
    #[inline]
    pub fn free_slot(&self, v: usize) -> Option<usize> {
        self.free_slot[v]
    }

    pub fn n_free_dofs(&self) -> usize {
        self.free_vertices.len() * self.dim
    }

    /// Returns a copy of this mesh with a different constrained vertex set.
    pub fn with_fixed_vertices(&self, fixed_vertices: &[usize]) -> Result<Self, MeshError> {
        let elements: Vec<Vec<usize>> = self.elements().map(<[usize]>::to_vec).collect();
        Self::build(self.dim, self.rest_dim, self.rest_positions.clone(), &elements, fixed_vertices)
    }

    /// Rest positions as a configuration; only meaningful when the rest shape
    /// lives in the unknowns' dimension.
    pub fn rest_configuration(&self) -> Option<Vec<f64>> {
        (!self.is_surface()).then(|| self.rest_positions.clone())
    }

    /// Extracts the free degrees of freedom from a full configuration.
    pub fn gather_free(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.n_free_dofs());
        for &v in &self.free_vertices {
            out.extend_from_slice(&x[v * d..(v + 1) * d]);
        }
        out
    }

    /// Writes free degrees of freedom back into a full configuration.
    pub fn scatter_free(&self, x: &mut [f64], free: &[f64]) {
        let d = self.dim;
        for (k, &v) in self.free_vertices.iter().enumerate() {
            x[v * d..(v + 1) * d].copy_from_slice(&free[k * d..(k + 1) * d]);
        }
    }

    /// Lifts a free-DOF direction to full length with zeros on fixed vertices.
    pub fn expand_direction(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_vertices() * self.dim];
        self.scatter_free(&mut full, free);
        full
    }

    /// `x + alpha * p` where `p` is a free-DOF direction.
    pub fn step(&self, x: &[f64], p: &[f64], alpha: f64) -> Vec<f64> {
        let d = self.dim;
        let mut out = x.to_vec();
        for (k, &v) in self.free_vertices.iter().enumerate() {
            for c in 0..d {
                out[v * d + c] += alpha * p[k * d + c];
            }
        }
        out
    }

    /// Shape-function gradients of element `t`, one row per local vertex.
    pub fn shape_gradients(&self, t: usize) -> &[[f64; 3]] {
        &self.rest[t].shape_gradients[..self.dim + 1]
    }

    pub fn deformation_gradient(&self, x: &[f64], t: usize) -> SquareMat {
        let d = self.dim;
        let mut f = SquareMat::zeros(d);
        for (&v, g) in self.element(t).iter().zip(self.shape_gradients(t)) {
            for i in 0..d {
                let xi = x[v * d + i];
                for j in 0..d {
                    f[(i, j)] += xi * g[j];
                }
            }
        }
        f
    }

    /// Dense `d^2 x d(d+1)` operator mapping the stacked element vertex
    /// positions to `vec(F_t)` (column-major).
    pub fn gradient_operator(&self, t: usize) -> DMatrix<f64> {
        let d = self.dim;
        let mut g = DMatrix::zeros(d * d, d * (d + 1));
        for (a, grad) in self.shape_gradients(t).iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    g[(i + j * d, a * d + i)] = grad[j];
                }
            }
        }
        g
    }

    /// Element orientations `det F_t(x)`.
    pub fn orientation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_elements())
            .into_par_iter()
            .map(|t| self.deformation_gradient(x, t).determinant())
            .collect()
    }

    pub fn min_orientation(&self, x: &[f64]) -> f64 {
        self.orientation(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Column-sparse Jacobian of `det F_t` for each `t` in `active`, with
    /// respect to the free degrees of freedom.
    pub fn orientation_jacobian(&self, x: &[f64], active: &[usize]) -> SparseColumns {
        let d = self.dim;
        let columns = active
            .par_iter()
            .map(|&t| {
                let cof = self.deformation_gradient(x, t).cofactor();
                let mut col = Vec::with_capacity(d * (d + 1));
                for (&v, g) in self.element(t).iter().zip(self.shape_gradients(t)) {
                    if let Some(slot) = self.free_slot[v] {
                        let dv = cof.mul_vec(g);
                        for i in 0..d {
                            col.push((slot * d + i, dv[i]));
                        }
                    }
                }
                col
            })
            .collect();
        SparseColumns { nrows: self.n_free_dofs(), columns }
    }

    /// Linear-FEM scalar Laplacian on the rest shape, restricted to the free
    /// vertices. In 2D the entries are the cotangent weights.
    pub fn assemble_laplacian(&self) -> Result<CsrMatrix, MeshError> {
        if self.free_vertices.len() == self.n_vertices() {
            return Err(MeshError::NotPositiveDefinite);
        }
        Ok(self.laplacian_with(|v| self.free_slot[v], self.free_vertices.len()))
    }

    /// The Laplacian over all vertices, ignoring constraints.
    pub fn assemble_full_laplacian(&self) -> CsrMatrix {
        self.laplacian_with(Some, self.n_vertices())
    }

    fn laplacian_with(&self, slot: impl Fn(usize) -> Option<usize>, size: usize) -> CsrMatrix {
        let arity = self.dim + 1;
        let mut b = TripletBuilder::with_capacity(size, size, self.n_elements() * arity * arity);
        for t in 0..self.n_elements() {
            let r = &self.rest[t];
            let e = self.element(t);
            for a in 0..arity {
                let Some(ia) = slot(e[a]) else { continue };
                for c in 0..arity {
                    let Some(ic) = slot(e[c]) else { continue };
                    let w: f64 = (0..self.dim).map(|k| r.shape_gradients[a][k] * r.shape_gradients[c][k]).sum();
                    b.push(ia, ic, r.measure * w);
                }
            }
        }
        let m = b.build();
        symmetrize(&m)
    }

    /// Per-vertex sum of the measures of facets opposite the vertex in its
    /// incident elements.
    pub fn one_ring_measure(&self) -> Vec<f64> {
        let mut ell = vec![0.0; self.n_vertices()];
        for t in 0..self.n_elements() {
            for (a, &v) in self.element(t).iter().enumerate() {
                ell[v] += self.rest[t].facet_measures[a];
            }
        }
        ell
    }

    /// Local free-DOF index of each element DOF (`a * d + i`), `None` when the
    /// vertex is fixed.
    pub fn element_dofs(&self, t: usize) -> Vec<Option<usize>> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * (d + 1));
        for &v in self.element(t) {
            for i in 0..d {
                out.push(self.free_slot[v].map(|s| s * d + i));
            }
        }
        out
    }
}

/// Sparse matrix stored as a list of columns of `(row, value)` pairs.
#[derive(Clone, Debug, Default)]
pub struct SparseColumns {
    nrows: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    pub fn new(nrows: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        Self { nrows, columns }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[(usize, f64)] {
        &self.columns[k]
    }

    pub fn column_norm_squared(&self, k: usize) -> f64 {
        self.columns[k].iter().map(|(_, v)| v * v).sum()
    }

    /// `C^T v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        self.columns.par_iter().map(|col| col.iter().map(|&(i, c)| c * v[i]).sum()).collect()
    }

    /// `C w`, accumulated column by column in order.
    pub fn mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (col, &wk) in self.columns.iter().zip(w) {
            if wk == 0.0 {
                continue;
            }
            for &(i, c) in col {
                out[i] += c * wk;
            }
        }
        out
    }

    /// Keeps only the columns for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(usize, &[(usize, f64)]) -> bool) {
        let mut k = 0;
        self.columns.retain(|c| {
            let r = keep(k, c);
            k += 1;
            r
        });
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols());
        for (k, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                m[(i, k)] += v;
            }
        }
        m
    }
}

fn symmetrize(m: &CsrMatrix) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(m.nrows(), m.ncols(), m.nnz());
    for i in 0..m.nrows() {
        for (j, v) in m.row(i) {
            if j >= i {
                let s = if i == j { v } else { 0.5 * (v + m.get(j, i)) };
                b.push(i, j, s);
                if j != i {
                    b.push(j, i, s);
                }
            }
        }
    }
    b.build()
}

fn bounding_extent(positions: &[f64], dim: usize) -> f64 {
    let mut extent = 0.0f64;
    for c in 0..dim {
        let (lo, hi) = positions
            .iter()
            .skip(c)
            .step_by(dim)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi >= lo {
            extent = extent.max(hi - lo);
        }
    }
    extent
}

/// Rest coordinates of an element's vertices in a `dim`-dimensional frame.
fn local_rest_coordinates(positions: &[f64], rest_dim: usize, dim: usize, element: &[usize]) -> Vec<[f64; 3]> {
    let point = |v: usize| {
        let mut p = [0.0; 3];
        p[..rest_dim].copy_from_slice(&positions[v * rest_dim..(v + 1) * rest_dim]);
        p
    };
    if rest_dim == dim {
        return element.iter().map(|&v| point(v)).collect();
    }
    // Surface triangle: isometric frame with vertex 0 at the origin and edge
    // 0->1 along the first axis.
    let p0 = point(element[0]);
    let e1 = sub3(point(element[1]), p0);
    let e2 = sub3(point(element[2]), p0);
    let l1 = norm3(e1);
    if l1 == 0.0 {
        return vec![[0.0; 3]; 3];
    }
    let u = [e1[0] / l1, e1[1] / l1, e1[2] / l1];
    let x2 = dot3(e2, u);
    let perp = sub3(e2, [u[0] * x2, u[1] * x2, u[2] * x2]);
    vec![[0.0, 0.0, 0.0], [l1, 0.0, 0.0], [x2, norm3(perp), 0.0]]
}

fn element_rest(dim: usize, local: &[[f64; 3]]) -> ElementRest {
    let mut edges = SquareMat::zeros(dim);
    for k in 0..dim {
        for i in 0..dim {
            edges[(i, k)] = local[k + 1][i] - local[0][i];
        }
    }
    let det = edges.determinant();
    let factorial = if dim == 2 { 2.0 } else { 6.0 };
    let measure = det / factorial;
    let mut shape_gradients = [[0.0; 3]; 4];
    if let Some(inv) = edges.inverse() {
        // Row k of the inverse edge matrix is the gradient of barycentric k+1.
        for k in 0..dim {
            for j in 0..dim {
                shape_gradients[k + 1][j] = inv[(k, j)];
                shape_gradients[0][j] -= inv[(k, j)];
            }
        }
    }
    let mut facet_measures = [0.0; 4];
    for (a, fm) in facet_measures.iter_mut().enumerate().take(dim + 1) {
        let others: Vec<[f64; 3]> = (0..=dim).filter(|&b| b != a).map(|b| local[b]).collect();
        *fm = if dim == 2 {
            norm3(sub3(others[1], others[0]))
        } else {
            0.5 * norm3(cross3(sub3(others[1], others[0]), sub3(others[2], others[0])))
        };
    }
    ElementRest { measure, shape_gradients, facet_measures }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
