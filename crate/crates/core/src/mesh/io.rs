use std::fmt::Write as _;
use std::path::Path;

use super::{Point3, SurfaceMesh, VolumeMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFormat {
    Obj,
    Off,
}

impl SurfaceFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(SurfaceFormat::Obj),
            "off" => Some(SurfaceFormat::Off),
            _ => None,
        }
    }
}

pub fn load_surface(path: &Path, format: SurfaceFormat) -> Result<SurfaceMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    match format {
        SurfaceFormat::Obj => parse_obj(&text, &ctx),
        SurfaceFormat::Off => parse_off(&text, &ctx),
    }
}

fn parse_f64(tok: Option<&str>, ctx: &str, line: usize) -> Result<f64> {
    tok.ok_or_else(|| Error::parse(ctx, format!("line {line}: missing number")))?
        .parse()
        .map_err(|e| Error::parse(ctx, format!("line {line}: {e}")))
}

fn parse_index(tok: &str, ctx: &str, line: usize) -> Result<usize> {
    // OBJ allows "v/vt/vn"; only the vertex index matters.
    let head = tok.split('/').next().unwrap_or(tok);
    head.parse().map_err(|e| Error::parse(ctx, format!("line {line}: bad index {tok:?}: {e}")))
}

/// Wavefront OBJ: `v` and `f` records, 1-based indices, polygons fan-split.
pub fn parse_obj(text: &str, ctx: &str) -> Result<SurfaceMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), ctx, line)?;
                let y = parse_f64(toks.next(), ctx, line)?;
                let z = parse_f64(toks.next(), ctx, line)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<usize> = toks
                    .map(|t| parse_index(t, ctx, line))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 || idx.iter().any(|&i| i == 0) {
                    return Err(Error::parse(ctx, format!("line {line}: malformed face")));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0] - 1, idx[k] - 1, idx[k + 1] - 1]);
                }
            }
            _ => {}
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Object File Format: `OFF` header, counts, vertices, then `n i j k ...` faces.
pub fn parse_off(text: &str, ctx: &str) -> Result<SurfaceMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(ctx, "empty file"))?;
    let mut counts_line = None;
    if header.starts_with("OFF") {
        let rest = header[3..].trim();
        if !rest.is_empty() {
            counts_line = Some((1, rest));
        }
    } else {
        return Err(Error::parse(ctx, "missing OFF header"));
    }
    let (cl, counts) = match counts_line {
        Some(c) => c,
        None => lines.next().ok_or_else(|| Error::parse(ctx, "missing counts"))?,
    };
    let mut it = counts.split_whitespace();
    let nv: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| Error::parse(ctx, format!("line {cl}: bad counts")))?;
    let nf: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| Error::parse(ctx, format!("line {cl}: bad counts")))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or_else(|| Error::parse(ctx, "truncated vertex list"))?;
        let mut t = l.split_whitespace();
        let x = parse_f64(t.next(), ctx, line)?;
        let y = parse_f64(t.next(), ctx, line)?;
        let z = parse_f64(t.next(), ctx, line)?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or_else(|| Error::parse(ctx, "truncated face list"))?;
        let nums: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::parse(ctx, format!("line {line}: {e}"))))
            .collect::<Result<_>>()?;
        let k = *nums.first().ok_or_else(|| Error::parse(ctx, format!("line {line}: empty face")))?;
        if k < 3 || nums.len() < k + 1 {
            return Err(Error::parse(ctx, format!("line {line}: malformed face")));
        }
        let idx = &nums[1..=k];
        for j in 1..k - 1 {
            triangles.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

pub fn write_obj(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn load_volume(path: &Path) -> Result<VolumeMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_volume(&text, &path.display().to_string())
}

/// Plain-text volume: `v x y z`, `t i j k l` (0-based), `f x y z` per tet.
pub fn parse_volume(text: &str, ctx: &str) -> Result<VolumeMesh> {
    let mut vertices = Vec::new();
    let mut tets = Vec::new();
    let mut fibers = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") | Some("f") => {
                let tag = raw.trim_start().as_bytes()[0];
                let x = parse_f64(toks.next(), ctx, line)?;
                let y = parse_f64(toks.next(), ctx, line)?;
                let z = parse_f64(toks.next(), ctx, line)?;
                if tag == b'v' {
                    vertices.push(Point3::new(x, y, z));
                } else {
                    fibers.push(Point3::new(x, y, z));
                }
            }
            Some("t") => {
                let mut tet = [0usize; 4];
                for slot in &mut tet {
                    let tok = toks.next().ok_or_else(|| Error::parse(ctx, format!("line {line}: tet needs 4 indices")))?;
                    *slot = parse_index(tok, ctx, line)?;
                }
                tets.push(tet);
            }
            Some(tok) if tok.starts_with('#') => {}
            None => {}
            Some(other) => return Err(Error::parse(ctx, format!("line {line}: unknown record {other:?}"))),
        }
    }
    VolumeMesh::new(vertices, tets, fibers)
}

pub fn write_volume(mesh: &VolumeMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} vertices, {} tets", mesh.vertices.len(), mesh.tets.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.tets {
        let _ = writeln!(out, "t {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    for f in &mesh.fibers {
        let _ = writeln!(out, "f {} {} {}", f.x, f.y, f.z);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAN_OBJ: &str = "# fan\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0.5 0.5 0\nf 1 2 5\nf 2/2 3/3 5/5\nf 3 4 5\nf 4 1 5\n";

    #[test]
    fn obj_and_off_agree() {
        let a = parse_obj(FAN_OBJ, "fan.obj").unwrap();
        let off = "OFF\n5 4 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0.5 0.5 0\n3 0 1 4\n3 1 2 4\n3 2 3 4\n3 3 0 4\n";
        let b = parse_off(off, "fan.off").unwrap();
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.boundary_loop, b.boundary_loop);
    }

    #[test]
    fn obj_roundtrip() {
        let a = parse_obj(FAN_OBJ, "fan.obj").unwrap();
        let b = parse_obj(&write_obj(&a), "again").unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
    }

    #[test]
    fn garbage_is_a_parse_error() {
        let err = parse_obj("v 0 0 zero\n", "bad.obj").unwrap_err();
        assert_eq!(err.kind(), "parse");
        assert!(parse_off("NOT OFF\n", "x").is_err());
    }

    #[test]
    fn volume_roundtrip() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nt 0 1 2 3\nf 1 0 0\n";
        let m = parse_volume(text, "unit").unwrap();
        let again = parse_volume(&write_volume(&m), "again").unwrap();
        assert_eq!(m.tets, again.tets);
        assert_eq!(m.vertices, again.vertices);
        assert!(parse_volume("v 0 0 0\nq 1\n", "bad").is_err());
    }
}
