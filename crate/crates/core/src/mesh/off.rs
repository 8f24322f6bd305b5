//! ASCII OFF reader and writer (triangles only).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Reads an ASCII OFF file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_off(&text, path)
}

/// Parses OFF text. `path` is only used in error messages.
pub fn parse_off(text: &str, path: &Path) -> Result<TriangleMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    // (1-based line number, tokens) for every non-empty, non-comment line
    let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then(|| (i + 1, content.split_whitespace().collect::<Vec<_>>()))
    });

    match lines.next() {
        Some((_, tokens)) if tokens == ["OFF"] => {}
        Some((line, _)) => return Err(err(line, "expected header \"OFF\"".into())),
        None => return Err(err(0, "empty file".into())),
    }

    let (line, counts) = lines
        .next()
        .ok_or_else(|| err(0, "missing counts line".into()))?;
    if counts.len() != 3 {
        return Err(err(line, "counts line must hold \"K T E\"".into()));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| err(line, format!("invalid count {s:?}")))
    };
    let k = parse_count(counts[0])?;
    let t = parse_count(counts[1])?;
    parse_count(counts[2])?;

    let mut vertices = Vec::with_capacity(k);
    for idx in 0..k {
        let (line, tokens) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {k} vertices, found {idx}")))?;
        if tokens.len() != 3 {
            return Err(err(line, "vertex line must hold 3 coordinates".into()));
        }
        let mut xyz = [0.0; 3];
        for (c, tok) in xyz.iter_mut().zip(&tokens) {
            *c = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("invalid coordinate {tok:?}")))?;
        }
        vertices.push(Vector3::from(xyz));
    }

    let mut triangles = Vec::with_capacity(t);
    for idx in 0..t {
        let (line, tokens) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {t} faces, found {idx}")))?;
        if tokens.first() != Some(&"3") || tokens.len() != 4 {
            return Err(err(line, "face line must be \"3 i j k\"".into()));
        }
        let mut tri = [0usize; 3];
        for (v, tok) in tri.iter_mut().zip(&tokens[1..]) {
            *v = tok
                .parse::<usize>()
                .map_err(|_| err(line, format!("invalid vertex index {tok:?}")))?;
            if *v >= k {
                return Err(err(
                    line,
                    format!("vertex index {v} out of range for {k} vertices"),
                ));
            }
        }
        triangles.push(tri);
    }
    if let Some((line, _)) = lines.next() {
        return Err(err(line, "trailing content after face list".into()));
    }

    TriangleMesh::new(vertices, triangles)
}

/// Serializes a mesh to OFF text.
pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let edges = mesh.edge_count();
    let _ = writeln!(out, "OFF");
    let _ = writeln!(
        out,
        "{} {} {}",
        mesh.vertex_count(),
        mesh.triangle_count(),
        edges
    );
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::TopologyKind;
    use crate::mesh::unit_sphere_mesh;

    const TETRA: &str = "OFF
# regular tetrahedron
4 4 6
1 1 1
1 -1 -1

-1 1 -1
-1 -1 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
";

    #[test]
    fn parses_tetrahedron() {
        let m = parse_off(TETRA, Path::new("t.off")).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.triangle_count(), 4);
        assert!(m.is_closed());
    }

    #[test]
    fn out_of_range_index_is_parse_error() {
        let mut text = String::from("OFF\n10 1 0\n");
        for i in 0..10 {
            text.push_str(&format!("{i} 0 {}\n", i * i));
        }
        text.push_str("3 0 1 999\n");
        let err = parse_off(&text, Path::new("bad.off")).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 13);
                assert!(message.contains("999"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        for text in [
            "",
            "PLY\n",
            "OFF\n1 0\n",
            "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1\n3 0 1 2\n",
            "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n",
            "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 x\n",
            "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n",
        ] {
            assert!(
                matches!(
                    parse_off(text, Path::new("m.off")),
                    Err(Error::Parse { .. })
                ),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn topology_errors_surface_from_parser() {
        let text = TETRA.replace("3 0 3 2", "3 0 2 3");
        assert!(matches!(
            parse_off(&text, Path::new("t.off")),
            Err(Error::Topology {
                kind: TopologyKind::InconsistentOrientation,
                ..
            })
        ));
    }

    #[test]
    fn write_then_read() {
        let m = unit_sphere_mesh(1).unwrap();
        let back = parse_off(&write_off(&m), Path::new("s.off")).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
    }
}
