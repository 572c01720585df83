//! Run specification files and the problems they describe.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use meshopt::energy::EnergyModel;
use meshopt::io::{self, parse_ele, parse_node, parse_obj, ObjMesh};
use meshopt::mesh::{tutte_embed, BoundaryShape, Mesh};
use meshopt::solver::Method;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    UvParam,
    Deform2d,
    Deform3d,
}

impl ProblemKind {
    pub fn dim(self) -> usize {
        match self {
            Self::UvParam | Self::Deform2d => 2,
            Self::Deform3d => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    /// Wavefront OBJ, triangles only.
    Obj,
    /// TetGen `.node` with a sibling `.ele`.
    Node,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSource {
    pub path: PathBuf,
    /// Taken from the file extension when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<MeshFormat>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initializer {
    /// Mesh file positions (deformation) or its `vt` coordinates (UV).
    #[default]
    AsGiven,
    /// Uniform-weight embedding onto the unit circle. UV problems only.
    Tutte,
    /// Positions read from another mesh file with the same vertex count.
    PrescribedFile { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub vertex: usize,
    pub position: Vec<f64>,
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_max_iterations() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub mesh: MeshSource,
    pub problem: ProblemKind,
    pub energy: EnergyModel,
    #[serde(default)]
    pub initializer: Initializer,
    /// Pinned vertices. With none given, vertex 0 stays at its start.
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    pub solvers: Vec<Method>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunSpec {
    /// Parses a spec file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_file(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut spec: RunSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            anyhow::anyhow!("{}: field `{at}`: {}", path.display(), e.inner())
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        spec.mesh.path = resolve(&spec.mesh.path);
        if let Initializer::PrescribedFile { path } = &mut spec.initializer {
            *path = resolve(path);
        }
        spec.output = resolve(&spec.output);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.solvers.is_empty(), "solvers: at least one solver is required");
        ensure!(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon: must be positive, got {}", self.epsilon);
        if let EnergyModel::NeoHookean { mu, lambda } = self.energy {
            EnergyModel::neo_hookean(mu, lambda).context("energy")?;
        }
        self.energy.check_dimension(self.problem.dim()).context("energy")?;
        if self.initializer == Initializer::Tutte && self.problem != ProblemKind::UvParam {
            bail!("initializer: tutte applies only to uv_param problems");
        }
        for (i, c) in self.constraints.iter().enumerate() {
            ensure!(
                c.position.len() == self.problem.dim(),
                "constraints[{i}].position: expected {} coordinates, got {}",
                self.problem.dim(),
                c.position.len()
            );
            ensure!(c.position.iter().all(|v| v.is_finite()), "constraints[{i}].position: not finite");
            if let Some(j) = self.constraints[..i].iter().position(|o| o.vertex == c.vertex) {
                bail!("constraints[{i}].vertex: vertex {} already constrained by constraints[{j}]", c.vertex);
            }
        }
        Ok(())
    }

    pub fn mesh_format(&self) -> Result<MeshFormat> {
        if let Some(f) = self.mesh.format {
            return Ok(f);
        }
        format_from_extension(&self.mesh.path).with_context(|| format!("mesh.format: cannot infer from {}", self.mesh.path.display()))
    }
}

fn format_from_extension(path: &Path) -> Result<MeshFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => Ok(MeshFormat::Obj),
        Some("node") => Ok(MeshFormat::Node),
        _ => bail!("unknown mesh extension, expected .obj or .node"),
    }
}

/// Element connectivity and the positions stored in a mesh file.
struct MeshFile {
    positions: Vec<f64>,
    /// Coordinates per position: 2 or 3.
    dim: usize,
    elements: Vec<Vec<usize>>,
    uvs: Option<Vec<f64>>,
}

fn read_obj(path: &Path) -> Result<ObjMesh> {
    parse_obj(&io::read_file(path)?).with_context(|| path.display().to_string())
}

fn read_mesh_file(path: &Path, format: MeshFormat) -> Result<MeshFile> {
    match format {
        MeshFormat::Obj => {
            let obj = read_obj(path)?;
            let uvs = obj.flat_uvs();
            Ok(MeshFile { positions: obj.flat_positions(), dim: 3, elements: obj.triangles, uvs })
        }
        MeshFormat::Node => {
            let node = parse_node(&io::read_file(path)?).with_context(|| path.display().to_string())?;
            let ele_path = path.with_extension("ele");
            let elements = parse_ele(&io::read_file(&ele_path)?, node.first_index).with_context(|| ele_path.display().to_string())?;
            Ok(MeshFile { positions: node.positions, dim: node.dim, elements, uvs: None })
        }
    }
}

/// Drops the z coordinate of 3D positions, which must all be zero.
fn planar(positions: &[f64], dim: usize, what: &str) -> Result<Vec<f64>> {
    if dim == 2 {
        return Ok(positions.to_vec());
    }
    if let Some(v) = positions.chunks(3).position(|p| p[2] != 0.0) {
        bail!("{what}: planar problem needs z = 0, vertex {v} has z = {}", positions[3 * v + 2]);
    }
    Ok(positions.chunks(3).flat_map(|p| [p[0], p[1]]).collect())
}

/// A loaded problem, ready for the solvers.
pub struct Problem {
    pub kind: ProblemKind,
    pub mesh: Mesh,
    pub initial: Vec<f64>,
    pub model: EnergyModel,
    pub elements: Vec<Vec<usize>>,
    /// Surface positions of a UV problem, kept for export.
    pub surface: Option<Vec<f64>>,
}

impl Problem {
    pub fn load(spec: &RunSpec) -> Result<Self> {
        spec.validate()?;
        let format = spec.mesh_format()?;
        let kind = spec.problem;
        let dim = kind.dim();
        let file = read_mesh_file(&spec.mesh.path, format).context("mesh")?;
        let n = file.positions.len() / file.dim;
        let arity = if kind == ProblemKind::Deform3d { 4 } else { 3 };
        if let Some(t) = file.elements.iter().position(|e| e.len() != arity) {
            bail!("mesh: element {t} has {} vertices, {kind:?} needs {arity}", file.elements[t].len());
        }
        if kind == ProblemKind::Deform3d && file.dim != 3 {
            bail!("mesh: deform3d needs 3D positions, {} has {}", spec.mesh.path.display(), file.dim);
        }
        if kind == ProblemKind::UvParam && file.dim != 3 {
            bail!("mesh: uv_param needs a surface with 3D positions");
        }

        let mut fixed: Vec<usize> = spec.constraints.iter().map(|c| c.vertex).collect();
        if let Some((i, c)) = spec.constraints.iter().enumerate().find(|(_, c)| c.vertex >= n) {
            bail!("constraints[{i}].vertex: {} out of range for {n} vertices", c.vertex);
        }
        if fixed.is_empty() {
            fixed.push(0);
        }

        let (mesh, surface) = match kind {
            ProblemKind::UvParam => (Mesh::from_surface(file.positions.clone(), &file.elements, &fixed).context("mesh")?, Some(file.positions.clone())),
            _ => {
                let rest = if dim == 2 { planar(&file.positions, file.dim, "mesh")? } else { file.positions.clone() };
                (Mesh::new(dim, rest, &file.elements, &fixed).context("mesh")?, None)
            }
        };

        let mut initial = match &spec.initializer {
            Initializer::AsGiven => match kind {
                ProblemKind::UvParam => file.uvs.clone().context("initializer: as_given needs vt coordinates in the mesh file")?,
                _ => mesh.rest_positions().to_vec(),
            },
            Initializer::Tutte => tutte_embed(&mesh, &BoundaryShape::UnitCircle).context("initializer: tutte")?,
            Initializer::PrescribedFile { path } => {
                let f = read_mesh_file(path, format_from_extension(path).context("initializer.path")?).context("initializer.path")?;
                let pos = match (kind, f.uvs) {
                    (ProblemKind::UvParam, Some(uv)) => uv,
                    (ProblemKind::Deform3d, _) => {
                        ensure!(f.dim == 3, "initializer.path: deform3d needs 3D positions");
                        f.positions
                    }
                    _ => planar(&f.positions, f.dim, "initializer.path")?,
                };
                ensure!(
                    pos.len() == dim * n,
                    "initializer.path: {} has {} vertices, mesh has {n}",
                    path.display(),
                    pos.len() / dim
                );
                pos
            }
        };
        ensure!(initial.len() == dim * n, "initializer: expected {n} positions");
        for c in &spec.constraints {
            initial[dim * c.vertex..dim * (c.vertex + 1)].copy_from_slice(&c.position);
        }
        let model = spec.energy;
        Ok(Self { kind, mesh, initial, model, elements: file.elements, surface })
    }
}
