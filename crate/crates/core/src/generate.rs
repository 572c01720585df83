//! Deterministic synthetic problems: bar shear, swirl, twisted bar and a
//! UV patch. Each returns the mesh, a locally injective starting
//! configuration and the energy it is meant to be solved with.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::mesh::{tutte_embed, BoundaryShape, Mesh, MeshError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Shear,
    Swirl,
    Twist,
    UvPatch,
    Hilbert,
}

impl SceneKind {
    pub const ALL: [SceneKind; 5] =
        [SceneKind::Shear, SceneKind::Swirl, SceneKind::Twist, SceneKind::UvPatch, SceneKind::Hilbert];

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Shear => "shear",
            SceneKind::Swirl => "swirl",
            SceneKind::Twist => "twist",
            SceneKind::UvPatch => "uv_patch",
            SceneKind::Hilbert => "hilbert",
        }
    }

    /// Inclusive resolution bounds.
    pub fn resolution_range(&self) -> (usize, usize) {
        match self {
            SceneKind::Shear => (1, 200),
            SceneKind::Swirl => (20, 400),
            SceneKind::Twist => (3, 40),
            SceneKind::UvPatch => (2, 400),
            SceneKind::Hilbert => (1, 60),
        }
    }

    pub fn build(&self, resolution: usize) -> Result<Scene, GenerateError> {
        let (lo, hi) = self.resolution_range();
        if resolution < lo || resolution > hi {
            return Err(GenerateError::UnsupportedResolution { kind: *self, resolution, min: lo, max: hi });
        }
        Ok(match self {
            SceneKind::Shear => shear(resolution)?,
            SceneKind::Swirl => swirl(resolution)?,
            SceneKind::Twist => twist(resolution)?,
            SceneKind::UvPatch => uv_patch(resolution)?,
            SceneKind::Hilbert => hilbert(resolution)?,
        })
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| format!("unknown scene kind '{s}' (expected shear, swirl, twist, uv_patch or hilbert)"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("resolution {resolution} unsupported for {kind}: must be in {min}..={max}")]
    UnsupportedResolution { kind: SceneKind, resolution: usize, min: usize, max: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub kind: SceneKind,
    pub resolution: usize,
    pub mesh: Mesh,
    pub initial: Vec<f64>,
    pub model: EnergyModel,
}

/// Triangulated `nx` by `ny` grid over `[x0, x0 + w] x [y0, y0 + h]`,
/// vertex `(i, j)` at index `j (nx + 1) + i`.
fn grid2(nx: usize, ny: usize, x0: f64, y0: f64, w: f64, h: f64) -> (Vec<f64>, Vec<Vec<usize>>) {
    let mut pos = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            pos.push(x0 + w * i as f64 / nx as f64);
            pos.push(y0 + h * j as f64 / ny as f64);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (pos, tris)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub const SHEAR_ASPECT: usize = 4;
pub const SHEAR_OFFSET: f64 = 3.0;

/// Bar of width 1 and height 4 with `n x 4n` cells (`8 n^2` triangles). The
/// bottom row is fixed at rest and the top row slides right by
/// `SHEAR_OFFSET`; every other vertex starts at rest. MIPS energy.
pub fn shear(n: usize) -> Result<Scene, GenerateError> {
    let ny = SHEAR_ASPECT * n;
    let (pos, tris) = grid2(n, ny, 0.0, 0.0, 1.0, SHEAR_ASPECT as f64);
    let top: Vec<usize> = (0..=n).map(|i| ny * (n + 1) + i).collect();
    let fixed: Vec<usize> = (0..=n).chain(top.iter().copied()).collect();
    let mesh = Mesh::new(2, pos.clone(), &tris, &fixed)?;
    let mut initial = pos;
    for v in top {
        initial[2 * v] += SHEAR_OFFSET;
    }
    Ok(Scene { kind: SceneKind::Shear, resolution: n, mesh, initial, model: EnergyModel::Mips })
}

pub const SWIRL_INNER_RADIUS: f64 = 0.25;
pub const SWIRL_OUTER_RADIUS: f64 = 0.95;
pub const SWIRL_ANGLE: f64 = PI / 2.0;

/// Square `[-1, 1]^2` with `n x n` cells. The outer boundary is fixed at
/// rest and the vertices inside radius 0.25 are fixed after a quarter turn.
/// The start rotates each vertex by `(pi / 2) s(r)`, where `s` falls
/// smoothly from 1 at the inner radius to 0 at radius 0.95. Below 20 cells
/// per side this start is not injective. ISO energy.
pub fn swirl(n: usize) -> Result<Scene, GenerateError> {
    let (pos, tris) = grid2(n, n, -1.0, -1.0, 2.0, 2.0);
    let nv = pos.len() / 2;
    let mut fixed = Vec::new();
    let mut initial = pos.clone();
    for v in 0..nv {
        let (i, j) = (v % (n + 1), v / (n + 1));
        let (x, y) = (pos[2 * v], pos[2 * v + 1]);
        let r = x.hypot(y);
        if i == 0 || j == 0 || i == n || j == n || r <= SWIRL_INNER_RADIUS {
            fixed.push(v);
        }
        let s = 1.0 - smoothstep((r - SWIRL_INNER_RADIUS) / (SWIRL_OUTER_RADIUS - SWIRL_INNER_RADIUS));
        let (sin, cos) = (SWIRL_ANGLE * s).sin_cos();
        initial[2 * v] = cos * x - sin * y;
        initial[2 * v + 1] = sin * x + cos * y;
    }
    let mesh = Mesh::new(2, pos, &tris, &fixed)?;
    Ok(Scene { kind: SceneKind::Swirl, resolution: n, mesh, initial, model: EnergyModel::Iso })
}

pub const TWIST_LENGTH: usize = 5;
pub const TWIST_ANGLE: f64 = 4.0 * PI;

/// Bar `[0,1]^2 x [0,5]` with `n x n x 5n` cubes, six tetrahedra each.
/// Both end caps are fixed at rest. The start twists each cross section by
/// `4 pi s(z / 5)` about the bar axis, with a smoothstep profile `s`, so the
/// bar carries two full turns. Below 3 cubes per side this start is not
/// injective. ISO energy.
pub fn twist(n: usize) -> Result<Scene, GenerateError> {
    let nz = TWIST_LENGTH * n;
    let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let mut pos = Vec::with_capacity(3 * (n + 1) * (n + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=n {
            for i in 0..=n {
                pos.extend([i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64]);
            }
        }
    }
    // Freudenthal split along the main diagonal of each cube.
    const PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * n * n * nz);
    for k in 0..nz {
        for j in 0..n {
            for i in 0..n {
                for path in PATHS {
                    let mut c = [i, j, k];
                    let mut tet = vec![id(c[0], c[1], c[2])];
                    for axis in path {
                        c[axis] += 1;
                        tet.push(id(c[0], c[1], c[2]));
                    }
                    // odd permutations walk a negatively oriented tet
                    let odd = matches!(path, [0, 2, 1] | [1, 0, 2] | [2, 1, 0]);
                    if odd {
                        tet.swap(1, 2);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    let layer = (n + 1) * (n + 1);
    let fixed: Vec<usize> = (0..layer).chain(nz * layer..(nz + 1) * layer).collect();
    let mesh = Mesh::new(3, pos.clone(), &tets, &fixed)?;
    let mut initial = pos;
    let length = TWIST_LENGTH as f64;
    for v in initial.chunks_mut(3) {
        let (x, y) = (v[0] - 0.5, v[1] - 0.5);
        let (sin, cos) = (TWIST_ANGLE * smoothstep(v[2] / length)).sin_cos();
        v[0] = 0.5 + cos * x - sin * y;
        v[1] = 0.5 + sin * x + cos * y;
    }
    Ok(Scene { kind: SceneKind::Twist, resolution: n, mesh, initial, model: EnergyModel::Iso })
}

pub const UV_BUMP_HEIGHT: f64 = 0.4;
pub const UV_BUMP_WIDTH: f64 = 0.2;

/// Height field over `[0,1]^2` with `n x n` cells and a Gaussian bump in the
/// middle, flattened with ISO energy. The start is the Tutte embedding onto
/// the unit circle and only the corner vertex 0 is pinned there.
pub fn uv_patch(n: usize) -> Result<Scene, GenerateError> {
    let (flat, tris) = grid2(n, n, 0.0, 0.0, 1.0, 1.0);
    let mut pos = Vec::with_capacity(flat.len() / 2 * 3);
    for p in flat.chunks(2) {
        let r2 = (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2);
        pos.extend([p[0], p[1], UV_BUMP_HEIGHT * (-r2 / (UV_BUMP_WIDTH * UV_BUMP_WIDTH)).exp()]);
    }
    let mesh = Mesh::from_surface(pos, &tris, &[0])?;
    let initial = tutte_embed(&mesh, &BoundaryShape::UnitCircle)?;
    Ok(Scene { kind: SceneKind::UvPatch, resolution: n, mesh, initial, model: EnergyModel::Iso })
}

/// Cell `d` along a Hilbert curve on an `n x n` lattice, `n` a power of two.
fn hilbert_cell(n: usize, mut d: usize) -> (usize, usize) {
    let (mut x, mut y) = (0, 0);
    let mut s = 1;
    while s < n {
        let rx = 1 & (d / 2);
        let ry = 1 & (d ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        d /= 4;
        s *= 2;
    }
    (x, y)
}

pub const HILBERT_ORDER: u32 = 2;

/// Planar strip following an order-2 Hilbert curve: 16 square blocks of
/// `n x n` unit cells joined by corridors of the same width and length
/// (`62 n^2` triangles). Flattened with ISO energy from the Tutte embedding
/// onto the unit circle, vertex 0 pinned.
pub fn hilbert(n: usize) -> Result<Scene, GenerateError> {
    let lattice = 1usize << HILBERT_ORDER;
    let pitch = 2 * n;
    let size = lattice * pitch;
    let mut occupied = vec![false; size * size];
    let mut fill = |x0: usize, y0: usize, w: usize, h: usize| {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                occupied[y * size + x] = true;
            }
        }
    };
    let mut prev: Option<(usize, usize)> = None;
    for d in 0..lattice * lattice {
        let (x, y) = hilbert_cell(lattice, d);
        fill(x * pitch, y * pitch, n, n);
        if let Some((px, py)) = prev {
            let (lx, ly) = (x.min(px), y.min(py));
            if px != x {
                fill(lx * pitch + n, ly * pitch, n, n);
            } else {
                fill(lx * pitch, ly * pitch + n, n, n);
            }
        }
        prev = Some((x, y));
    }
    let mut index = vec![usize::MAX; (size + 1) * (size + 1)];
    let mut pos = Vec::new();
    let mut vertex = |i: usize, j: usize, pos: &mut Vec<f64>| {
        let slot = &mut index[j * (size + 1) + i];
        if *slot == usize::MAX {
            *slot = pos.len() / 3;
            pos.extend([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
        }
        *slot
    };
    let mut tris = Vec::new();
    for y in 0..size {
        for x in 0..size {
            if occupied[y * size + x] {
                let a = vertex(x, y, &mut pos);
                let b = vertex(x + 1, y, &mut pos);
                let c = vertex(x + 1, y + 1, &mut pos);
                let d = vertex(x, y + 1, &mut pos);
                tris.push(vec![a, b, c]);
                tris.push(vec![a, c, d]);
            }
        }
    }
    let mesh = Mesh::from_surface(pos, &tris, &[0])?;
    let initial = tutte_embed(&mesh, &BoundaryShape::UnitCircle)?;
    Ok(Scene { kind: SceneKind::Hilbert, resolution: n, mesh, initial, model: EnergyModel::Iso })
}
