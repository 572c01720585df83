//! ASCII mesh formats: Wavefront OBJ (v, vt, f) and TetGen `.node`/`.ele`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Triangle mesh from an OBJ file. `uvs`, when present, holds one texture
/// coordinate per position (rows of `vt` reindexed through the faces).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<[f64; 3]>,
    pub uvs: Option<Vec<[f64; 2]>>,
    pub triangles: Vec<Vec<usize>>,
}

impl ObjMesh {
    pub fn flat_positions(&self) -> Vec<f64> {
        self.positions.iter().flatten().copied().collect()
    }

    /// Positions projected to the xy-plane.
    pub fn planar_positions(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn flat_uvs(&self) -> Option<Vec<f64>> {
        self.uvs.as_ref().map(|u| u.iter().flatten().copied().collect())
    }

    pub fn is_planar(&self) -> bool {
        self.positions.iter().all(|p| p[2] == 0.0)
    }
}

fn parse_floats<const N: usize>(parts: &[&str], line: usize) -> Result<[f64; N], IoError> {
    if parts.len() < N {
        return Err(parse_err(line, format!("expected {N} coordinates, found {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (o, s) in out.iter_mut().zip(parts) {
        *o = s.parse().map_err(|_| parse_err(line, format!("bad number '{s}'")))?;
    }
    Ok(out)
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn obj_index(s: &str, count: usize, line: usize) -> Result<usize, IoError> {
    let i: i64 = s.parse().map_err(|_| parse_err(line, format!("bad index '{s}'")))?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || resolved < 0 || resolved >= count as i64 {
        return Err(parse_err(line, format!("index {i} out of range (have {count})")));
    }
    Ok(resolved as usize)
}

pub fn parse_obj(text: &str) -> Result<ObjMesh, IoError> {
    let mut positions = Vec::new();
    let mut vts: Vec<[f64; 2]> = Vec::new();
    let mut triangles = Vec::new();
    let mut uv_of: Vec<Option<usize>> = Vec::new();
    let mut any_uv_ref = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let parts: Vec<&str> = content.split_whitespace().collect();
        let Some((&tag, rest)) = parts.split_first() else { continue };
        match tag {
            "v" => {
                let p: [f64; 3] = if rest.len() == 2 {
                    let q: [f64; 2] = parse_floats(rest, line)?;
                    [q[0], q[1], 0.0]
                } else {
                    parse_floats(rest, line)?
                };
                positions.push(p);
            }
            "vt" => vts.push(parse_floats(rest, line)?),
            "f" => {
                if rest.len() != 3 {
                    return Err(parse_err(line, format!("only triangles are supported, face has {} vertices", rest.len())));
                }
                uv_of.resize(positions.len(), None);
                let mut tri = Vec::with_capacity(3);
                for corner in rest {
                    let mut fields = corner.split('/');
                    let v = obj_index(fields.next().unwrap_or(""), positions.len(), line)?;
                    if let Some(t) = fields.next().filter(|s| !s.is_empty()) {
                        let t = obj_index(t, vts.len(), line)?;
                        any_uv_ref = true;
                        match uv_of[v] {
                            Some(prev) if vts[prev] != vts[t] => {
                                return Err(parse_err(line, format!("vertex {} has more than one texture coordinate (UV seams are unsupported)", v + 1)));
                            }
                            _ => uv_of[v] = Some(t),
                        }
                    }
                    tri.push(v);
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    uv_of.resize(positions.len(), None);
    let uvs = if any_uv_ref {
        let mut out = Vec::with_capacity(positions.len());
        for (v, t) in uv_of.iter().enumerate() {
            let t = t.ok_or_else(|| IoError::Invalid(format!("vertex {} has no texture coordinate", v + 1)))?;
            out.push(vts[t]);
        }
        Some(out)
    } else if !vts.is_empty() && vts.len() == positions.len() {
        Some(vts)
    } else {
        None
    };
    Ok(ObjMesh { positions, uvs, triangles })
}

/// Writes an OBJ. 2D positions are padded with z = 0. With `uvs`, faces
/// reference the texture coordinate of the same index.
pub fn format_obj(positions: &[f64], dim: usize, uvs: Option<&[f64]>, triangles: &[Vec<usize>]) -> String {
    let mut s = String::new();
    for p in positions.chunks(dim) {
        let z = if dim == 3 { p[2] } else { 0.0 };
        writeln!(s, "v {:e} {:e} {:e}", p[0], p[1], z).unwrap();
    }
    if let Some(uv) = uvs {
        for t in uv.chunks(2) {
            writeln!(s, "vt {:e} {:e}", t[0], t[1]).unwrap();
        }
    }
    for tri in triangles {
        let [a, b, c] = [tri[0] + 1, tri[1] + 1, tri[2] + 1];
        if uvs.is_some() {
            writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
        } else {
            writeln!(s, "f {a} {b} {c}").unwrap();
        }
    }
    s
}

/// Boundary faces of a tetrahedral mesh, outward oriented, for OBJ export.
pub fn tet_boundary(elements: &[Vec<usize>]) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let mut count: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    for e in elements {
        for f in [[e[1], e[2], e[3]], [e[0], e[3], e[2]], [e[0], e[1], e[3]], [e[0], e[2], e[1]]] {
            let mut key = f;
            key.sort_unstable();
            count.entry(key).or_insert((0, f)).0 += 1;
        }
    }
    let mut faces: Vec<Vec<usize>> = count.into_values().filter(|(c, _)| *c == 1).map(|(_, f)| f.to_vec()).collect();
    faces.sort();
    faces
}

/// Vertex table of a `.node` file, with the index of its first entry.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub first_index: usize,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let parts: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        (!parts.is_empty()).then_some((k + 1, parts))
    })
}

fn header_usize(parts: &[&str], i: usize, line: usize) -> Result<usize, IoError> {
    parts
        .get(i)
        .copied()
        .unwrap_or("0")
        .parse()
        .map_err(|_| parse_err(line, "bad header field"))
}

pub fn parse_node(text: &str) -> Result<NodeTable, IoError> {
    let mut lines = data_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| IoError::Invalid("empty .node file".into()))?;
    let n = header_usize(&header, 0, hl)?;
    let dim = header_usize(&header, 1, hl)?;
    if !(dim == 2 || dim == 3) {
        return Err(parse_err(hl, format!("dimension must be 2 or 3, got {dim}")));
    }
    let mut positions = vec![0.0; n * dim];
    let mut first_index = None;
    let mut seen = vec![false; n];
    for _ in 0..n {
        let (line, parts) = lines.next().ok_or_else(|| IoError::Invalid(format!(".node file declares {n} vertices but ends early")))?;
        let idx: usize = parts[0].parse().map_err(|_| parse_err(line, "bad vertex index"))?;
        let base = *first_index.get_or_insert(idx);
        if base > 1 {
            return Err(parse_err(line, "vertex numbering must start at 0 or 1"));
        }
        let v = idx.checked_sub(base).filter(|&v| v < n).ok_or_else(|| parse_err(line, format!("vertex index {idx} out of range")))?;
        if std::mem::replace(&mut seen[v], true) {
            return Err(parse_err(line, format!("duplicate vertex index {idx}")));
        }
        let coords = &parts[1..];
        if coords.len() < dim {
            return Err(parse_err(line, format!("expected {dim} coordinates")));
        }
        for i in 0..dim {
            positions[v * dim + i] = coords[i].parse().map_err(|_| parse_err(line, format!("bad number '{}'", coords[i])))?;
        }
    }
    Ok(NodeTable { dim, positions, first_index: first_index.unwrap_or(1) })
}

/// Parses a `.ele` file; `first_index` comes from the matching `.node`.
pub fn parse_ele(text: &str, first_index: usize) -> Result<Vec<Vec<usize>>, IoError> {
    let mut lines = data_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| IoError::Invalid("empty .ele file".into()))?;
    let m = header_usize(&header, 0, hl)?;
    let k = header_usize(&header, 1, hl)?;
    if !(k == 3 || k == 4) {
        return Err(parse_err(hl, format!("only linear elements are supported, got {k} nodes per element")));
    }
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, parts) = lines.next().ok_or_else(|| IoError::Invalid(format!(".ele file declares {m} elements but ends early")))?;
        if parts.len() < k + 1 {
            return Err(parse_err(line, format!("expected {k} vertex indices")));
        }
        let mut e = Vec::with_capacity(k);
        for s in &parts[1..=k] {
            let i: usize = s.parse().map_err(|_| parse_err(line, format!("bad index '{s}'")))?;
            e.push(i.checked_sub(first_index).ok_or_else(|| parse_err(line, format!("index {i} below base {first_index}")))?);
        }
        out.push(e);
    }
    Ok(out)
}

pub fn format_node(positions: &[f64], dim: usize) -> String {
    let mut s = format!("{} {dim} 0 0\n", positions.len() / dim);
    for (v, p) in positions.chunks(dim).enumerate() {
        write!(s, "{}", v + 1).unwrap();
        for c in p {
            write!(s, " {c:e}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn format_ele(elements: &[Vec<usize>]) -> String {
    let k = elements.first().map_or(4, Vec::len);
    let mut s = format!("{} {k} 0\n", elements.len());
    for (t, e) in elements.iter().enumerate() {
        write!(s, "{}", t + 1).unwrap();
        for v in e {
            write!(s, " {}", v + 1).unwrap();
        }
        s.push('\n');
    }
    s
}
