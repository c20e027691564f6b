//! Plain-text mesh format for plotting and debugging:
//!
//! ```text
//! dnnmg-mesh 1
//! level <l>
//! vertices <n>
//! <x> <y>                       (n lines)
//! cells <m>
//! <v0> <v1> <v2> <v3>           (m lines, counterclockwise)
//! boundary <k>
//! <va> <vb> <tag> <cell> <edge> (k lines, tag ∈ inflow|wall|outflow|obstacle)
//! ```

use std::io::{BufRead, Write};

use super::{BoundaryEdge, BoundaryTag, MeshLevel};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn write_mesh_text<T: Real, W: Write>(mesh: &MeshLevel<T>, mut w: W) -> Result<()> {
    writeln!(w, "dnnmg-mesh 1")?;
    writeln!(w, "level {}", mesh.level)?;
    writeln!(w, "vertices {}", mesh.vertices.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{} {}", v[0], v[1])?;
    }
    writeln!(w, "cells {}", mesh.cells.len())?;
    for c in &mesh.cells {
        writeln!(w, "{} {} {} {}", c[0], c[1], c[2], c[3])?;
    }
    writeln!(w, "boundary {}", mesh.boundary.len())?;
    for e in &mesh.boundary {
        writeln!(
            w,
            "{} {} {} {} {}",
            e.vertices[0],
            e.vertices[1],
            e.tag.as_str(),
            e.cell,
            e.local_edge
        )?;
    }
    Ok(())
}

pub fn read_mesh_text<T: Real, R: BufRead>(r: R) -> Result<MeshLevel<T>> {
    let mut lines = r.lines();
    let mut next = move || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of mesh file".into()))?
            .map_err(Error::from)
    };
    let bad = |what: &str| Error::Format(format!("malformed mesh file: {what}"));
    if next()?.trim() != "dnnmg-mesh 1" {
        return Err(bad("header"));
    }
    let count = |line: String, key: &str| -> Result<usize> {
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(bad(key));
        }
        it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(key))
    };
    let level = count(next()?, "level")?;
    let nv = count(next()?, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let l = next()?;
        let v: Vec<f64> = l.split_whitespace().map(|s| s.parse().map_err(|_| bad("vertex"))).collect::<Result<_>>()?;
        if v.len() != 2 {
            return Err(bad("vertex"));
        }
        vertices.push([T::lit(v[0]), T::lit(v[1])]);
    }
    let nc = count(next()?, "cells")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let l = next()?;
        let v: Vec<usize> = l.split_whitespace().map(|s| s.parse().map_err(|_| bad("cell"))).collect::<Result<_>>()?;
        if v.len() != 4 || v.iter().any(|&i| i >= nv) {
            return Err(bad("cell"));
        }
        cells.push([v[0], v[1], v[2], v[3]]);
    }
    let nb = count(next()?, "boundary")?;
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let l = next()?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad("boundary edge"));
        }
        let p = |s: &str| s.parse::<usize>().map_err(|_| bad("boundary edge"));
        boundary.push(BoundaryEdge {
            vertices: [p(f[0])?, p(f[1])?],
            tag: BoundaryTag::parse(f[2]).ok_or_else(|| bad("boundary tag"))?,
            cell: p(f[3])?,
            local_edge: p(f[4])? as u8,
        });
    }
    MeshLevel::finish(level, vertices, cells, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_channel_mesh, GeometryConfig};

    #[test]
    fn text_round_trip() {
        let m = build_channel_mesh(&GeometryConfig::<f64>::benchmark()).unwrap();
        let mut buf = Vec::new();
        write_mesh_text(&m, &mut buf).unwrap();
        let back: MeshLevel<f64> = read_mesh_text(buf.as_slice()).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.boundary, m.boundary);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_mesh_text::<f64, _>("dnnmg-mesh 1\nlevel x\n".as_bytes()).is_err());
        assert!(read_mesh_text::<f64, _>("nope\n".as_bytes()).is_err());
    }
}
