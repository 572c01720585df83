//! Uniform-weight (Tutte) embedding of disk-topology triangle meshes.

use std::collections::{BTreeMap, HashMap};

use super::{Mesh, MeshError};
use crate::numerics::{SpdFactor, TripletBuilder};

/// Where the boundary loop of a disk mesh is placed.
#[derive(Clone, Debug, Default)]
pub enum BoundaryShape {
    /// Unit circle, vertices spaced by rest arc length.
    #[default]
    UnitCircle,
    /// Explicit positions for every boundary vertex. Must describe a convex
    /// polygon for the embedding to be injective.
    Prescribed(Vec<(usize, [f64; 2])>),
}

/// The single boundary loop of a disk-topology triangle mesh, ordered so the
/// mesh interior lies to the left.
pub fn boundary_loop(mesh: &Mesh) -> Result<Vec<usize>, MeshError> {
    if mesh.dim() != 2 {
        return Err(MeshError::NonDiskTopology("only triangle meshes can be embedded".into()));
    }
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
        return Err(MeshError::NonDiskTopology(format!("edge {e:?} is shared by {c} triangles")));
    }
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for tri in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if edge_count[&(a.min(b), a.max(b))] == 1 && next.insert(a, b).is_some() {
                return Err(MeshError::NonDiskTopology(format!("vertex {a} is a boundary pinch point")));
            }
        }
    }
    let Some((&start, _)) = next.iter().next() else {
        return Err(MeshError::NonDiskTopology("mesh has no boundary".into()));
    };
    let mut cycle = vec![start];
    let mut v = next[&start];
    while v != start {
        cycle.push(v);
        v = *next
            .get(&v)
            .ok_or_else(|| MeshError::NonDiskTopology(format!("boundary is open at vertex {v}")))?;
        if cycle.len() > next.len() {
            return Err(MeshError::NonDiskTopology("boundary loop does not close".into()));
        }
    }
    if cycle.len() != next.len() {
        return Err(MeshError::NonDiskTopology(format!(
            "found {} boundary edges but the first loop has {}",
            next.len(),
            cycle.len()
        )));
    }
    let mut used = vec![false; mesh.n_vertices()];
    mesh.elements().flatten().for_each(|&v| used[v] = true);
    let vertices = used.iter().filter(|&&u| u).count() as i64;
    let euler = vertices - edge_count.len() as i64 + mesh.n_elements() as i64;
    if euler != 1 {
        return Err(MeshError::NonDiskTopology(format!("Euler characteristic is {euler}, expected 1")));
    }
    Ok(cycle)
}

/// Tutte embedding: boundary on a convex shape, each interior vertex at the
/// average of its neighbors. Returns a 2D configuration over all vertices.
pub fn tutte_embed(mesh: &Mesh, shape: &BoundaryShape) -> Result<Vec<f64>, MeshError> {
    let cycle = boundary_loop(mesh)?;
    let n = mesh.n_vertices();
    let mut x = vec![0.0; 2 * n];
    let mut on_boundary = vec![false; n];
    for &v in &cycle {
        on_boundary[v] = true;
    }

    match shape {
        BoundaryShape::UnitCircle => {
            let rd = mesh.rest_dim();
            let p = mesh.rest_positions();
            let dist = |a: usize, b: usize| {
                (0..rd).map(|c| (p[a * rd + c] - p[b * rd + c]).powi(2)).sum::<f64>().sqrt()
            };
            let mut arc = Vec::with_capacity(cycle.len());
            let mut total = 0.0;
            for k in 0..cycle.len() {
                arc.push(total);
                total += dist(cycle[k], cycle[(k + 1) % cycle.len()]);
            }
            for (k, &v) in cycle.iter().enumerate() {
                let theta = 2.0 * std::f64::consts::PI * arc[k] / total;
                x[2 * v] = theta.cos();
                x[2 * v + 1] = theta.sin();
            }
        }
        BoundaryShape::Prescribed(points) => {
            let mut placed = vec![false; n];
            for &(v, [px, py]) in points {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange { index: v, len: n });
                }
                x[2 * v] = px;
                x[2 * v + 1] = py;
                placed[v] = true;
            }
            if let Some(&v) = cycle.iter().find(|&&v| !placed[v]) {
                return Err(MeshError::NonDiskTopology(format!("boundary vertex {v} has no prescribed position")));
            }
        }
    }

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for tri in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    let interior: Vec<usize> = (0..n).filter(|&v| !on_boundary[v] && !neighbors[v].is_empty()).collect();
    if interior.is_empty() {
        return Ok(x);
    }
    let mut slot = vec![usize::MAX; n];
    for (k, &v) in interior.iter().enumerate() {
        slot[v] = k;
    }
    let m = interior.len();
    let mut b = TripletBuilder::new(m, m);
    let mut rhs = [vec![0.0; m], vec![0.0; m]];
    for (k, &v) in interior.iter().enumerate() {
        b.push(k, k, neighbors[v].len() as f64);
        for &u in &neighbors[v] {
            if on_boundary[u] {
                rhs[0][k] += x[2 * u];
                rhs[1][k] += x[2 * u + 1];
            } else {
                b.push(k, slot[u], -1.0);
            }
        }
    }
    let factor = SpdFactor::factorize(&b.build()).map_err(|_| {
        MeshError::NonDiskTopology("interior is not connected to the boundary".into())
    })?;
    for (c, r) in rhs.iter().enumerate() {
        let sol = factor.solve(r);
        for (k, &v) in interior.iter().enumerate() {
            x[2 * v + c] = sol[k];
        }
    }
    Ok(x)
}
