//! The `generate` subcommand: write a bundled problem as mesh files plus a
//! spec that runs it.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use meshopt::generate::{Scene, SceneKind};
use meshopt::io::{format_ele, format_node, format_obj, write_file};
use meshopt::solver::Method;

use crate::spec::{Constraint, Initializer, MeshSource, ProblemKind, RunSpec};

fn problem_kind(kind: SceneKind) -> ProblemKind {
    match kind {
        SceneKind::Shear | SceneKind::Swirl => ProblemKind::Deform2d,
        SceneKind::Twist => ProblemKind::Deform3d,
        SceneKind::UvPatch | SceneKind::Hilbert => ProblemKind::UvParam,
    }
}

fn write_positions(dir: &Path, stem: &str, kind: ProblemKind, positions: &[f64], elements: &[Vec<usize>]) -> Result<String> {
    Ok(match kind {
        ProblemKind::Deform3d => {
            write_file(&dir.join(format!("{stem}.node")), &format_node(positions, 3))?;
            write_file(&dir.join(format!("{stem}.ele")), &format_ele(elements))?;
            format!("{stem}.node")
        }
        ProblemKind::Deform2d => {
            write_file(&dir.join(format!("{stem}.obj")), &format_obj(positions, 2, None, elements))?;
            format!("{stem}.obj")
        }
        ProblemKind::UvParam => {
            write_file(&dir.join(format!("{stem}.obj")), &format_obj(positions, 3, None, elements))?;
            format!("{stem}.obj")
        }
    })
}

/// Builds the spec for a scene whose mesh lives at `mesh` and, when the free
/// vertices do not start at rest, whose start lives at `initial`.
pub fn scene_spec(scene: &Scene, mesh: PathBuf, initial: Option<PathBuf>, output: PathBuf) -> RunSpec {
    let kind = problem_kind(scene.kind);
    let d = kind.dim();
    let constraints = scene
        .mesh
        .fixed_vertices()
        .into_iter()
        .map(|v| Constraint { vertex: v, position: scene.initial[d * v..d * (v + 1)].to_vec() })
        .collect();
    let initializer = match (kind, initial) {
        (ProblemKind::UvParam, _) => Initializer::Tutte,
        (_, Some(path)) => Initializer::PrescribedFile { path },
        (_, None) => Initializer::AsGiven,
    };
    RunSpec {
        mesh: MeshSource { path: mesh, format: None },
        problem: kind,
        energy: scene.model,
        initializer,
        constraints,
        solvers: vec![Method::Bcqn, Method::Sgd, Method::Lbfgs, Method::Slbfgs, Method::Aqp, Method::Pn],
        epsilon: 1e-3,
        max_iterations: 10_000,
        output,
        seed: 0,
    }
}

/// Writes the scene files into `out` and returns the path of the spec.
pub fn generate(kind: SceneKind, resolution: usize, out: &Path) -> Result<PathBuf> {
    let scene = kind.build(resolution)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let stem = format!("{}_{resolution}", kind.name());
    let pk = problem_kind(kind);
    let elements: Vec<Vec<usize>> = scene.mesh.elements().map(<[usize]>::to_vec).collect();
    let mesh_name = write_positions(out, &stem, pk, scene.mesh.rest_positions(), &elements)?;

    let moved = pk != ProblemKind::UvParam
        && scene.mesh.free_vertices().iter().any(|&v| {
            let d = pk.dim();
            scene.initial[d * v..d * (v + 1)] != scene.mesh.rest_positions()[d * v..d * (v + 1)]
        });
    let initial_name = if moved {
        Some(PathBuf::from(write_positions(out, &format!("{stem}_initial"), pk, &scene.initial, &elements)?))
    } else {
        None
    };

    let spec = scene_spec(&scene, PathBuf::from(mesh_name), initial_name, PathBuf::from(format!("{stem}_out")));
    let spec_path = out.join(format!("{stem}.json"));
    write_file(&spec_path, &(serde_json::to_string_pretty(&spec)? + "\n"))?;
    Ok(spec_path)
}
