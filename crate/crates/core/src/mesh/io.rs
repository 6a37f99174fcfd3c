//! ASCII mesh format.
//!
//! ```text
//! NV NT NB
//! x y            (NV lines)
//! v0 v1 v2       (NT lines, counterclockwise)
//! v0 v1 TAG      (NB lines, TAG is D or A)
//! ```
//! Indices are 0-based. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{BoundaryEdge, BoundaryTag, Location, Mesh};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, path)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh(mesh))?;
    Ok(())
}

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:?} {:?}", v[0], v[1]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    for e in &mesh.boundary_edges {
        let _ = writeln!(out, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.code());
    }
    out
}

/// Parses the ASCII format; `origin` is used in error messages only.
pub fn parse_mesh(text: &str, origin: &Path) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::MeshFormat {
        path: PathBuf::from(origin),
        line,
        message,
    };
    let eof_line = text.lines().count() + 1;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(hline, format!("bad header: {e}")))?;
    let [nv, nt, nb] = counts[..] else {
        return Err(err(hline, format!("header needs 3 counts, found {}", counts.len())));
    };

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(eof_line, format!("unexpected end of file while reading {what}")))
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertices")?;
        let xy: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad coordinate: {e}")))?;
        let [x, y] = xy[..] else {
            return Err(err(ln, format!("expected 2 coordinates, found {}", xy.len())));
        };
        vertices.push([x, y]);
    }

    let mut triangles = Vec::with_capacity(nt);
    let mut tri_lines = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = next("triangles")?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad vertex index: {e}")))?;
        let [a, b, c] = idx[..] else {
            return Err(err(ln, format!("expected 3 vertex indices, found {}", idx.len())));
        };
        triangles.push([a, b, c]);
        tri_lines.push(ln);
    }

    let mut boundary = Vec::with_capacity(nb);
    let mut bnd_lines = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = next("boundary edges")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let [a, b, tag] = parts[..] else {
            return Err(err(ln, format!("expected `v0 v1 TAG`, found {} fields", parts.len())));
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|e| err(ln, format!("bad vertex index: {e}")));
        let tag = match tag {
            "D" => BoundaryTag::Dirichlet,
            "A" => BoundaryTag::Absorbing,
            other => return Err(err(ln, format!("unknown boundary tag `{other}`"))),
        };
        boundary.push(BoundaryEdge {
            vertices: [parse(a)?, parse(b)?],
            tag,
        });
        bnd_lines.push(ln);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "trailing data after declared counts".into()));
    }

    Mesh::build(vertices, triangles, boundary, None).map_err(|(loc, msg)| match loc {
        Location::Triangle(t) => err(tri_lines[t], msg),
        Location::Boundary(b) => err(bnd_lines[b], msg),
        Location::Global => err(hline, msg),
    })
}
