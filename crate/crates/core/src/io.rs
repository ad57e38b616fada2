//! OFF / OBJ mesh files and per-face phase-label sidecars.
//!
//! Only positions and triangular faces are read; other records (normals,
//! texture coordinates, colors, groups) are ignored. Writers emit shortest
//! round-trip float representations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::mesh::{MeshError, TriMesh};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported mesh format {0:?} (expected .off or .obj)")]
    UnknownFormat(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, s: &str) -> Result<(), IoError> {
    fs::write(path, s).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

type RawMesh = (Vec<Vector3<f64>>, Vec<[usize; 3]>);

pub fn parse_off(text: &str) -> Result<RawMesh, IoError> {
    let mut tokens = text.lines().enumerate().flat_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        l.split_whitespace().map(move |t| (i + 1, t))
    });
    let (line, head) = tokens.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut first_count = None;
    if head != "OFF" {
        // "OFF" may be glued to the counts line in some exporters
        if let Some(rest) = head.strip_prefix("OFF") {
            first_count = Some(rest.to_string());
        } else {
            return Err(parse_err(line, "missing OFF header"));
        }
    }
    let mut next_num = |what: &str| -> Result<(usize, String), IoError> {
        if let Some(s) = first_count.take() {
            if !s.is_empty() {
                return Ok((line, s));
            }
        }
        tokens
            .next()
            .map(|(l, t)| (l, t.to_string()))
            .ok_or_else(|| parse_err(line, format!("unexpected end of file reading {what}")))
    };
    let parse_usize = |(l, t): (usize, String)| -> Result<usize, IoError> {
        t.parse()
            .map_err(|_| parse_err(l, format!("expected integer, got {t:?}")))
    };
    let parse_f64 = |(l, t): (usize, String)| -> Result<f64, IoError> {
        t.parse()
            .map_err(|_| parse_err(l, format!("expected number, got {t:?}")))
    };
    let nv = parse_usize(next_num("vertex count")?)?;
    let nf = parse_usize(next_num("face count")?)?;
    let _ne = parse_usize(next_num("edge count")?)?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_f64(next_num("x")?)?;
        let y = parse_f64(next_num("y")?)?;
        let z = parse_f64(next_num("z")?)?;
        verts.push(Vector3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, t) = next_num("face arity")?;
        let k = parse_usize((l, t))?;
        if k != 3 {
            return Err(parse_err(l, format!("only triangles are supported, got {k}-gon")));
        }
        let a = parse_usize(next_num("index")?)?;
        let b = parse_usize(next_num("index")?)?;
        let c = parse_usize(next_num("index")?)?;
        faces.push([a, b, c]);
    }
    Ok((verts, faces))
}

pub fn parse_obj(text: &str) -> Result<RawMesh, IoError> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("");
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let t = it.next().ok_or_else(|| parse_err(line, "vertex needs 3 coordinates"))?;
                    *slot = t
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad coordinate {t:?}")))?;
                }
                verts.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(parse_err(
                        line,
                        format!("only triangles are supported, got {}-gon", idx.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (slot, t) in tri.iter_mut().zip(idx) {
                    let head = t.split('/').next().unwrap_or("");
                    let k: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad face index {t:?}")))?;
                    let resolved = if k > 0 {
                        k - 1
                    } else if k < 0 {
                        verts.len() as i64 + k
                    } else {
                        return Err(parse_err(line, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(line, format!("face index {k} out of range")));
                    }
                    *slot = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

pub fn format_off(mesh: &TriMesh) -> String {
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} 0", mesh.n_vertices(), mesh.n_faces()).unwrap();
    for x in mesh.vertices() {
        writeln!(s, "{} {} {}", x.x, x.y, x.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    s
}

pub fn format_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for x in mesh.vertices() {
        writeln!(s, "v {} {} {}", x.x, x.y, x.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Read and validate a mesh; the format follows the file extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh, IoError> {
    let text = read_to_string(path)?;
    let (v, f) = match extension(path).as_str() {
        "off" => parse_off(&text)?,
        "obj" => parse_obj(&text)?,
        other => return Err(IoError::UnknownFormat(other.to_string())),
    };
    Ok(TriMesh::build(v, f)?)
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<(), IoError> {
    let s = match extension(path).as_str() {
        "off" => format_off(mesh),
        "obj" => format_obj(mesh),
        other => return Err(IoError::UnknownFormat(other.to_string())),
    };
    write_string(path, &s)
}

/// One positive integer label per line; blank lines and `#` comments skipped.
pub fn parse_labels(text: &str) -> Result<Vec<u32>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let v: u32 = l
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad phase label {l:?}")))?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>, IoError> {
    parse_labels(&read_to_string(path)?)
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<(), IoError> {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        writeln!(s, "{l}").unwrap();
    }
    write_string(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use proptest::prelude::*;

    #[test]
    fn off_ignores_comments_and_rejects_quads() {
        let text = "OFF # header\n# comment\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(matches!(parse_off(text), Err(IoError::Parse { line: 8, .. })));
    }

    #[test]
    fn obj_handles_slashes_and_negative_indices() {
        let text = "o thing\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nvt 0 0\nf 1/1/1 2//1 -1\n";
        let (v, f) = parse_obj(text).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("1\n2\n\n# x\n2\n").unwrap(), vec![1, 2, 2]);
        assert!(parse_labels("1\n-2\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn off_and_obj_round_trip_exactly(level in 0u32..3, amp in 0.0f64..0.2, seed in 0u64..1000) {
            let m = shapes::jitter(&shapes::icosphere(level), amp * 0.05, seed);
            for text_mesh in [parse_off(&format_off(&m)).unwrap(), parse_obj(&format_obj(&m)).unwrap()] {
                prop_assert_eq!(&text_mesh.0[..], m.vertices());
                prop_assert_eq!(&text_mesh.1[..], m.faces());
            }
        }
    }
}
