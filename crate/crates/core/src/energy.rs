//! Deformation energy densities and their assembly over a mesh.
//!
//! Densities take the deformation gradient `F`. Gradients are `d x d`
//! matrices and Hessians are `d^2 x d^2` in column-major `vec(F)` ordering,
//! so entry `(k + l d, m + n d)` is `d^2 W / dF_kl dF_mn`.

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::numerics::symmetric_spectral_norm;
use crate::small::SquareMat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("non-positive determinant {det:e}{}", element.map(|t| format!(" at element {t}")).unwrap_or_default())]
    NonPositiveDeterminant { element: Option<usize>, det: f64 },
    #[error("{energy} is not defined for dimension {dim}")]
    UnsupportedDimension { energy: &'static str, dim: usize },
    #[error("invalid material parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyModel {
    /// Symmetric Dirichlet, `|F|^2 + |F^{-1}|^2`.
    Iso,
    /// `|F|^2 / det F`, planar only.
    Mips,
    /// Log-barrier neo-Hookean.
    NeoHookean { mu: f64, lambda: f64 },
    /// `|F - R|^2` with `R` the rotation factor of the polar decomposition.
    Arap,
    /// `|F|^2 / 2`. Quadratic, with the scalar Laplacian as its exact Hessian
    /// per coordinate.
    Dirichlet,
}

impl EnergyModel {
    pub fn neo_hookean(mu: f64, lambda: f64) -> Result<Self, EnergyError> {
        if !(mu > 0.0) || !(lambda >= 0.0) || !mu.is_finite() || !lambda.is_finite() {
            return Err(EnergyError::InvalidParameter(format!(
                "neo-Hookean needs mu > 0 and lambda >= 0, got mu = {mu}, lambda = {lambda}"
            )));
        }
        Ok(Self::NeoHookean { mu, lambda })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Iso => "iso",
            Self::Mips => "mips",
            Self::NeoHookean { .. } => "nh",
            Self::Arap => "arap",
            Self::Dirichlet => "dirichlet",
        }
    }

    /// Whether the density blows up as `det F -> 0+`.
    pub fn has_barrier(&self) -> bool {
        matches!(self, Self::Iso | Self::Mips | Self::NeoHookean { .. })
    }

    pub fn check_dimension(&self, dim: usize) -> Result<(), EnergyError> {
        match (self, dim) {
            (_, 2) | (Self::Iso | Self::NeoHookean { .. } | Self::Arap | Self::Dirichlet, 3) => Ok(()),
            _ => Err(EnergyError::UnsupportedDimension { energy: self.name(), dim }),
        }
    }

    fn barrier_inverse(&self, f: &SquareMat) -> Result<(f64, SquareMat), EnergyError> {
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(EnergyError::NonPositiveDeterminant { element: None, det });
        }
        Ok((det, f.inverse().expect("positive determinant")))
    }

    pub fn density(&self, f: &SquareMat) -> Result<f64, EnergyError> {
        self.check_dimension(f.dim())?;
        let d = f.dim() as f64;
        Ok(match *self {
            Self::Iso => {
                let (_, a) = self.barrier_inverse(f)?;
                f.norm_squared() + a.norm_squared()
            }
            Self::Mips => {
                let (j, _) = self.barrier_inverse(f)?;
                f.norm_squared() / j
            }
            Self::NeoHookean { mu, lambda } => {
                let (j, _) = self.barrier_inverse(f)?;
                let lj = j.ln();
                0.5 * mu * (f.norm_squared() - d) - mu * lj + 0.5 * lambda * lj * lj
            }
            Self::Arap => (*f - polar_rotation(f)).norm_squared(),
            Self::Dirichlet => 0.5 * f.norm_squared(),
        })
    }

    pub fn density_gradient(&self, f: &SquareMat) -> Result<SquareMat, EnergyError> {
        self.check_dimension(f.dim())?;
        Ok(match *self {
            Self::Iso => {
                let (_, a) = self.barrier_inverse(f)?;
                let at = a.transpose();
                f.scale(2.0) - (at * a * at).scale(2.0)
            }
            Self::Mips => {
                let (j, a) = self.barrier_inverse(f)?;
                f.scale(2.0 / j) - a.transpose().scale(f.norm_squared() / j)
            }
            Self::NeoHookean { mu, lambda } => {
                let (j, a) = self.barrier_inverse(f)?;
                f.scale(mu) + a.transpose().scale(lambda * j.ln() - mu)
            }
            Self::Arap => (*f - polar_rotation(f)).scale(2.0),
            Self::Dirichlet => *f,
        })
    }

    pub fn density_hessian(&self, f: &SquareMat) -> Result<DMatrix<f64>, EnergyError> {
        self.check_dimension(f.dim())?;
        let d = f.dim();
        let n = d * d;
        let idx = |i: usize, j: usize| i + j * d;
        let mut h = DMatrix::zeros(n, n);
        match *self {
            Self::Iso => {
                let (_, a) = self.barrier_inverse(f)?;
                let at = a.transpose();
                let ata = at * a;
                let aat = a * at;
                let p = ata * at;
                for (k, l, m, nn) in quad(d) {
                    h[(idx(k, l), idx(m, nn))] =
                        2.0 * (ata[(k, m)] * aat[(l, nn)] + a[(nn, k)] * p[(m, l)] + a[(l, m)] * p[(k, nn)]);
                }
                for r in 0..n {
                    h[(r, r)] += 2.0;
                }
            }
            Self::Mips => {
                let (j, a) = self.barrier_inverse(f)?;
                let norm2 = f.norm_squared();
                for (k, l, m, nn) in quad(d) {
                    let du_kl = -a[(l, k)] / j;
                    let du_mn = -a[(nn, m)] / j;
                    let ddu = (a[(l, m)] * a[(nn, k)] + a[(l, k)] * a[(nn, m)]) / j;
                    h[(idx(k, l), idx(m, nn))] =
                        2.0 * f[(k, l)] * du_mn + 2.0 * f[(m, nn)] * du_kl + norm2 * ddu;
                }
                for r in 0..n {
                    h[(r, r)] += 2.0 / j;
                }
            }
            Self::NeoHookean { mu, lambda } => {
                let (j, a) = self.barrier_inverse(f)?;
                let coeff = mu - lambda * j.ln();
                for (k, l, m, nn) in quad(d) {
                    h[(idx(k, l), idx(m, nn))] = coeff * a[(l, m)] * a[(nn, k)] + lambda * a[(l, k)] * a[(nn, m)];
                }
                for r in 0..n {
                    h[(r, r)] += mu;
                }
            }
            Self::Arap => {
                let r = polar_rotation(f);
                let s = r.transpose() * *f;
                for m in 0..d {
                    for nn in 0..d {
                        let mut e = SquareMat::zeros(d);
                        e[(m, nn)] = 1.0;
                        let dr = rotation_differential(&r, &s, &e);
                        for c in 0..n {
                            h[(c, idx(m, nn))] = 2.0 * (e.as_slice()[c] - dr.as_slice()[c]);
                        }
                    }
                }
                h = (&h + h.transpose()) * 0.5;
            }
            Self::Dirichlet => {
                for r in 0..n {
                    h[(r, r)] = 1.0;
                }
            }
        }
        Ok(h)
    }

    /// Spectral norm of the density Hessian at the identity.
    pub fn characteristic_scale(&self, dim: usize) -> Result<f64, EnergyError> {
        let h = self.density_hessian(&SquareMat::identity(dim))?;
        Ok(symmetric_spectral_norm(&h))
    }
}

fn quad(d: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..d).flat_map(move |k| {
        (0..d).flat_map(move |l| (0..d).flat_map(move |m| (0..d).map(move |n| (k, l, m, n))))
    })
}

/// Rotation factor `R` of `F = R S` with `det R = +1`; `S` is symmetric but
/// may be indefinite when `det F < 0`.
pub fn polar_rotation(f: &SquareMat) -> SquareMat {
    if f.dim() == 2 {
        let c = f[(0, 0)] + f[(1, 1)];
        let s = f[(1, 0)] - f[(0, 1)];
        let r = c.hypot(s);
        if r == 0.0 {
            return SquareMat::identity(2);
        }
        let (c, s) = (c / r, s / r);
        return SquareMat::from_rows(&[&[c, -s], &[s, c]]);
    }
    let m = Matrix3::from_column_slice(f.as_slice());
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        let mut smallest = 0;
        for i in 1..3 {
            if svd.singular_values[i] < svd.singular_values[smallest] {
                smallest = i;
            }
        }
        u2.column_mut(smallest).neg_mut();
        r = u2 * vt;
    }
    SquareMat::from_col_major(3, r.as_slice())
}

/// Directional derivative of the polar rotation, `dR = R [w]_x` with
/// `((tr S) I - S) w = axial(R^T dF - dF^T R)`.
fn rotation_differential(r: &SquareMat, s: &SquareMat, df: &SquareMat) -> SquareMat {
    let k = r.transpose() * *df - df.transpose() * *r;
    if r.dim() == 2 {
        let tr = s.trace();
        if tr == 0.0 {
            return SquareMat::zeros(2);
        }
        let w = k[(1, 0)] / tr;
        return *r * SquareMat::from_rows(&[&[0.0, -w], &[w, 0.0]]);
    }
    let axial = [k[(2, 1)], k[(0, 2)], k[(1, 0)]];
    let tr = s.trace();
    let mut sys = s.scale(-1.0);
    for i in 0..3 {
        sys[(i, i)] += tr;
    }
    let Some(inv) = sys.inverse() else {
        return SquareMat::zeros(3);
    };
    let w = inv.mul_vec(&axial);
    let skew = SquareMat::from_rows(&[&[0.0, -w[2], w[1]], &[w[2], 0.0, -w[0]], &[-w[1], w[0], 0.0]]);
    *r * skew
}

/// Energy value and gradient over the free degrees of freedom.
#[derive(Clone, Debug)]
pub struct EnergyEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn tag(t: usize) -> impl Fn(EnergyError) -> EnergyError {
    move |e| match e {
        EnergyError::NonPositiveDeterminant { det, .. } => {
            EnergyError::NonPositiveDeterminant { element: Some(t), det }
        }
        other => other,
    }
}

/// `E(x) = sum_t a_t W(F_t(x))`, summed in element order.
pub fn total_energy(mesh: &Mesh, model: &EnergyModel, x: &[f64]) -> Result<f64, EnergyError> {
    model.check_dimension(mesh.dim())?;
    let values: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| model.density(&mesh.deformation_gradient(x, t)).map(|w| mesh.rest_measure(t) * w).map_err(tag(t)))
        .collect::<Result<_, _>>()?;
    Ok(values.iter().sum())
}

pub fn total_gradient(mesh: &Mesh, model: &EnergyModel, x: &[f64]) -> Result<Vec<f64>, EnergyError> {
    Ok(evaluate(mesh, model, x)?.gradient)
}

/// Value and free-DOF gradient in one pass. Element contributions are
/// computed in parallel and reduced in element order.
pub fn evaluate(mesh: &Mesh, model: &EnergyModel, x: &[f64]) -> Result<EnergyEval, EnergyError> {
    model.check_dimension(mesh.dim())?;
    let d = mesh.dim();
    let per_element: Vec<(f64, SquareMat)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| {
            let f = mesh.deformation_gradient(x, t);
            let w = model.density(&f).map_err(tag(t))?;
            let p = model.density_gradient(&f).map_err(tag(t))?;
            let a = mesh.rest_measure(t);
            Ok((a * w, p.scale(a)))
        })
        .collect::<Result<_, EnergyError>>()?;
    let mut value = 0.0;
    let mut gradient = vec![0.0; mesh.n_free_dofs()];
    for (t, (w, p)) in per_element.iter().enumerate() {
        value += w;
        for (&v, g) in mesh.element(t).iter().zip(mesh.shape_gradients(t)) {
            if let Some(slot) = mesh.free_slot(v) {
                let pg = p.mul_vec(g);
                for i in 0..d {
                    gradient[slot * d + i] += pg[i];
                }
            }
        }
    }
    Ok(EnergyEval { value, gradient })
}

/// Per-element Hessian blocks `a_t G_t^T H G_t` over the element's
/// `d(d+1)` local DOFs, ordered `a * d + i`.
pub fn element_hessian(mesh: &Mesh, model: &EnergyModel, x: &[f64], t: usize) -> Result<DMatrix<f64>, EnergyError> {
    let f = mesh.deformation_gradient(x, t);
    let h = model.density_hessian(&f).map_err(tag(t))?;
    let g = mesh.gradient_operator(t);
    Ok(g.transpose() * h * g * mesh.rest_measure(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn models(d: usize) -> Vec<EnergyModel> {
        let mut m = vec![
            EnergyModel::Iso,
            EnergyModel::neo_hookean(1.0, 1.0).unwrap(),
            EnergyModel::neo_hookean(0.7, 3.0).unwrap(),
            EnergyModel::Arap,
            EnergyModel::Dirichlet,
        ];
        if d == 2 {
            m.push(EnergyModel::Mips);
        }
        m
    }

    pub(crate) fn random_f(rng: &mut ChaCha8Rng, d: usize) -> SquareMat {
        loop {
            let mut f = SquareMat::identity(d);
            for v in f.as_mut_slice() {
                *v += rng.gen_range(-0.8..0.8);
            }
            let det = f.determinant();
            if (0.2..=5.0).contains(&det) {
                return f;
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> SquareMat {
        let mut g = SquareMat::zeros(d);
        for v in g.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        if g.determinant() < 0.0 {
            for i in 0..d {
                g[(i, 0)] = -g[(i, 0)];
            }
        }
        polar_rotation(&g)
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den
    }

    fn fd_gradient(model: &EnergyModel, f: &SquareMat) -> Vec<f64> {
        let h = 1e-6;
        (0..f.dim() * f.dim())
            .map(|k| {
                let mut fp = *f;
                let mut fm = *f;
                fp.as_mut_slice()[k] += h;
                fm.as_mut_slice()[k] -= h;
                (model.density(&fp).unwrap() - model.density(&fm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn fd_hessian(model: &EnergyModel, f: &SquareMat) -> DMatrix<f64> {
        let h = 1e-6;
        let n = f.dim() * f.dim();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut fp = *f;
            let mut fm = *f;
            fp.as_mut_slice()[k] += h;
            fm.as_mut_slice()[k] -= h;
            let gp = model.density_gradient(&fp).unwrap();
            let gm = model.density_gradient(&fm).unwrap();
            for r in 0..n {
                out[(r, k)] = (gp.as_slice()[r] - gm.as_slice()[r]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn density_examples() {
        let i2 = SquareMat::identity(2);
        assert_eq!(EnergyModel::Iso.density(&i2).unwrap(), 4.0);
        assert_eq!(EnergyModel::Mips.density(&i2).unwrap(), 2.0);
        assert_eq!(EnergyModel::neo_hookean(1.0, 1.0).unwrap().density(&i2).unwrap(), 0.0);
        assert_eq!(EnergyModel::Iso.density(&i2.scale(2.0)).unwrap(), 8.5);
        assert!(EnergyModel::Arap.density(&i2).unwrap().abs() < 1e-30);
    }

    #[test]
    fn barrier_rejects_inverted() {
        let f = SquareMat::diagonal(&[1.0, -0.5]);
        for m in [EnergyModel::Iso, EnergyModel::Mips, EnergyModel::neo_hookean(1.0, 1.0).unwrap()] {
            assert!(matches!(m.density(&f), Err(EnergyError::NonPositiveDeterminant { element: None, .. })));
            assert!(m.density_gradient(&f).is_err());
            assert!(m.density_hessian(&f).is_err());
        }
        assert!(EnergyModel::Arap.density(&f).is_ok());
    }

    #[test]
    fn mips_is_planar_only() {
        assert!(matches!(
            EnergyModel::Mips.density(&SquareMat::identity(3)),
            Err(EnergyError::UnsupportedDimension { dim: 3, .. })
        ));
        assert!(EnergyModel::neo_hookean(0.0, 1.0).is_err());
        assert!(EnergyModel::neo_hookean(1.0, -1.0).is_err());
    }

    #[test]
    fn gradient_vanishes_at_identity_and_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2, 3] {
            for m in models(d) {
                if matches!(m, EnergyModel::Dirichlet) {
                    continue;
                }
                let g = m.density_gradient(&SquareMat::identity(d)).unwrap();
                assert!(g.norm_squared() < 1e-28, "{m:?}");
            }
            let r = random_rotation(&mut rng, d);
            assert!(EnergyModel::Arap.density_gradient(&r).unwrap().norm_squared() < 1e-26);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [2, 3] {
            for m in models(d) {
                for _ in 0..100 {
                    let f = random_f(&mut rng, d);
                    let g = m.density_gradient(&f).unwrap();
                    let eg = rel(&fd_gradient(&m, &f), g.as_slice());
                    assert!(eg < 1e-6, "{m:?} gradient rel err {eg}");
                    let h = m.density_hessian(&f).unwrap();
                    let eh = (fd_hessian(&m, &f) - &h).norm() / h.norm();
                    assert!(eh < 1e-5, "{m:?} hessian rel err {eh}");
                    assert!((&h - h.transpose()).norm() <= 1e-12 * h.norm());
                }
            }
        }
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3] {
            for m in models(d) {
                for _ in 0..50 {
                    let f = random_f(&mut rng, d);
                    let r = random_rotation(&mut rng, d);
                    let a = m.density(&f).unwrap();
                    let b = m.density(&(r * f)).unwrap();
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15, "{m:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn barrier_growth() {
        for d in [2, 3] {
            for m in models(d).into_iter().filter(EnergyModel::has_barrier) {
                let mut prev = 0.0;
                let mut first = None;
                for k in 0..30 {
                    let sigma = 0.1 * 0.7f64.powi(k);
                    let mut diag = vec![1.0; d];
                    diag[0] = sigma;
                    let w = m.density(&SquareMat::diagonal(&diag)).unwrap();
                    assert!(w > prev, "{m:?} not increasing at sigma = {sigma}");
                    prev = w;
                    first.get_or_insert(w);
                }
                assert!(prev > 10.0 * first.unwrap().abs(), "{m:?}");
            }
        }
    }

    #[test]
    fn characteristic_scale_matches_eigensolve() {
        for d in [2, 3] {
            for m in models(d) {
                let h = m.density_hessian(&SquareMat::identity(d)).unwrap();
                let eig = h.clone().symmetric_eigen();
                let oracle = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
                assert!((m.characteristic_scale(d).unwrap() - oracle).abs() < 1e-12 * oracle);
            }
        }
        // Closed forms: ISO has eigenvalue 8 on symmetric perturbations, NH
        // has 2 mu + d lambda on the dilation, ARAP 2 on symmetric ones.
        assert!((EnergyModel::Iso.characteristic_scale(2).unwrap() - 8.0).abs() < 1e-12);
        assert!((EnergyModel::Iso.characteristic_scale(3).unwrap() - 8.0).abs() < 1e-12);
        let nh = EnergyModel::neo_hookean(1.0, 2.0).unwrap();
        assert!((nh.characteristic_scale(3).unwrap() - 8.0).abs() < 1e-12);
        assert!((EnergyModel::Arap.characteristic_scale(2).unwrap() - 2.0).abs() < 1e-12);
        assert!((EnergyModel::Dirichlet.characteristic_scale(3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn arap_scale_from_finite_differences() {
        // Finite-difference Hessian at a point near I, eigensolved.
        let f = SquareMat::from_rows(&[&[1.0 + 1e-7, 0.0], &[0.0, 1.0]]);
        let h = fd_hessian(&EnergyModel::Arap, &f);
        let h = (&h + h.transpose()) * 0.5;
        let norm = symmetric_spectral_norm(&h);
        assert!((norm - EnergyModel::Arap.characteristic_scale(2).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn neo_hookean_hessian_at_identity() {
        // mu = 1, lambda = 0: I + T where T is the transpose permutation.
        for d in [2, 3] {
            let h = EnergyModel::neo_hookean(1.0, 0.0).unwrap().density_hessian(&SquareMat::identity(d)).unwrap();
            for k in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        for n in 0..d {
                            let expected = f64::from(u8::from(k == m && l == n)) + f64::from(u8::from(l == m && k == n));
                            assert!((h[(k + l * d, m + n * d)] - expected).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    fn square_mesh() -> Mesh {
        let pos = vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.4];
        let tris = vec![vec![0, 1, 4], vec![1, 2, 4], vec![2, 3, 4], vec![3, 0, 4]];
        Mesh::new(2, pos, &tris, &[0]).unwrap()
    }

    fn tet_mesh() -> Mesh {
        let pos = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        Mesh::new(3, pos, &[vec![0, 1, 2, 3], vec![1, 2, 3, 4]], &[0]).unwrap()
    }

    #[test]
    fn rest_totals() {
        let m = square_mesh();
        let x = m.rest_configuration().unwrap();
        assert!((total_energy(&m, &EnergyModel::Iso, &x).unwrap() - 4.0 * m.total_measure()).abs() < 1e-14);
        assert!(total_energy(&m, &EnergyModel::neo_hookean(1.0, 1.0).unwrap(), &x).unwrap().abs() < 1e-15);
        assert!(total_energy(&m, &EnergyModel::Arap, &x).unwrap().abs() < 1e-28);
        for mesh in [square_mesh(), tet_mesh()] {
            let x = mesh.rest_configuration().unwrap();
            let ell: f64 = mesh.one_ring_measure().iter().map(|v| v * v).sum::<f64>().sqrt();
            for model in models(mesh.dim()).into_iter().filter(|m| !matches!(m, EnergyModel::Dirichlet)) {
                let g = total_gradient(&mesh, &model, &x).unwrap();
                let scale = model.characteristic_scale(mesh.dim()).unwrap() * ell;
                assert!(g.iter().all(|v| v.abs() <= 1e-12 * scale), "{model:?}");
            }
        }
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mesh in [square_mesh(), tet_mesh()] {
            for model in models(mesh.dim()) {
                let x: Vec<f64> = mesh.rest_configuration().unwrap().iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
                let g = total_gradient(&mesh, &model, &x).unwrap();
                let h = 1e-6;
                let d = mesh.dim();
                let fd: Vec<f64> = mesh
                    .free_vertices()
                    .iter()
                    .flat_map(|&v| (0..d).map(move |i| v * d + i))
                    .map(|k| {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[k] += h;
                        xm[k] -= h;
                        (total_energy(&mesh, &model, &xp).unwrap() - total_energy(&mesh, &model, &xm).unwrap()) / (2.0 * h)
                    })
                    .collect();
                assert!(rel(&fd, &g) < 1e-6, "{model:?}");
            }
        }
    }

    #[test]
    fn inverted_element_is_reported_by_index() {
        let m = square_mesh();
        let mut x = m.rest_configuration().unwrap();
        x[8] = 0.5;
        x[9] = -0.2;
        match total_energy(&m, &EnergyModel::Iso, &x) {
            Err(EnergyError::NonPositiveDeterminant { element: Some(0), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn element_hessian_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mesh = Mesh::new(2, vec![0.0, 0.0, 1.0, 0.1, 0.2, 0.9], &[vec![0, 1, 2]], &[]).unwrap();
        let x: Vec<f64> = mesh.rest_positions().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
        let model = EnergyModel::Iso;
        let he = element_hessian(&mesh, &model, &x, 0).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let gp = total_gradient(&mesh, &model, &xp).unwrap();
            let gm = total_gradient(&mesh, &model, &xm).unwrap();
            for r in 0..6 {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                assert!((fd - he[(r, k)]).abs() < 1e-5 * he.norm());
            }
        }
    }
}
