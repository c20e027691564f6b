use std::collections::HashMap;

use super::{BoundaryEdge, BoundaryTag, Ellipse, MeshLevel, RefinementLink, VertexOrigin};
use crate::error::Result;
use crate::scalar::Real;

/// Splits every quad into four. New midpoints of obstacle edges are snapped
/// onto the ellipse; child boundary edges inherit the parent's tag.
pub fn refine_uniform<T: Real>(
    mesh: &MeshLevel<T>,
    obstacle: Option<&Ellipse<T>>,
) -> Result<(MeshLevel<T>, RefinementLink)> {
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);

    let obstacle_edges: HashMap<(usize, usize), ()> = mesh
        .boundary
        .iter()
        .filter(|e| e.tag == BoundaryTag::Obstacle)
        .map(|e| (key(e.vertices[0], e.vertices[1]), ()))
        .collect();

    let mut vertices = mesh.vertices.clone();
    let mut origin: Vec<VertexOrigin> = (0..nv).map(VertexOrigin::Vertex).collect();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edge_vertex = |a: usize, b: usize, vertices: &mut Vec<[T; 2]>, origin: &mut Vec<VertexOrigin>| -> usize {
        let k = key(a, b);
        if let Some(&m) = midpoint.get(&k) {
            return m;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let mut p = [half * (pa[0] + pb[0]), half * (pa[1] + pb[1])];
        if let (Some(ell), true) = (obstacle, obstacle_edges.contains_key(&k)) {
            p = ell.snap(p);
        }
        let id = vertices.len();
        vertices.push(p);
        origin.push(VertexOrigin::EdgeMidpoint(k.0, k.1));
        midpoint.insert(k, id);
        id
    };

    let mut cells = Vec::with_capacity(4 * nc);
    let mut parent = Vec::with_capacity(4 * nc);
    let mut quadrant = Vec::with_capacity(4 * nc);
    let mut children = Vec::with_capacity(nc);
    let mut cell_mid = Vec::with_capacity(nc);
    for (c, v) in mesh.cells.iter().enumerate() {
        let m: Vec<usize> = (0..4)
            .map(|e| edge_vertex(v[e], v[(e + 1) % 4], &mut vertices, &mut origin))
            .collect();
        let x = mesh.cell_coords(c);
        let center = [
            quarter * (x[0][0] + x[1][0] + x[2][0] + x[3][0]),
            quarter * (x[0][1] + x[1][1] + x[2][1] + x[3][1]),
        ];
        let cid = vertices.len();
        vertices.push(center);
        origin.push(VertexOrigin::CellCenter(c));
        cell_mid.push(m.clone());

        let base = cells.len();
        cells.push([v[0], m[0], cid, m[3]]);
        cells.push([m[0], v[1], m[1], cid]);
        cells.push([cid, m[1], v[2], m[2]]);
        cells.push([m[3], cid, m[2], v[3]]);
        for q in 0..4u8 {
            parent.push(c);
            quadrant.push(q);
        }
        children.push([base, base + 1, base + 2, base + 3]);
    }

    let mut boundary = Vec::with_capacity(2 * mesh.boundary.len());
    for e in &mesh.boundary {
        let le = e.local_edge as usize;
        let kids = children[e.cell];
        let mid = cell_mid[e.cell][le];
        // Children holding the first and second half of parent edge `le`.
        let (first, second) = match le {
            0 => (kids[0], kids[1]),
            1 => (kids[1], kids[2]),
            2 => (kids[2], kids[3]),
            _ => (kids[3], kids[0]),
        };
        boundary.push(BoundaryEdge {
            vertices: [e.vertices[0], mid],
            tag: e.tag,
            cell: first,
            local_edge: e.local_edge,
        });
        boundary.push(BoundaryEdge {
            vertices: [mid, e.vertices[1]],
            tag: e.tag,
            cell: second,
            local_edge: e.local_edge,
        });
    }

    let fine = MeshLevel::finish(mesh.level + 1, vertices, cells, boundary)?;
    Ok((
        fine,
        RefinementLink {
            parent,
            quadrant,
            children,
            vertex_origin: origin,
        },
    ))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

#[cfg(test)]
mod tests {
    use super::super::{build_channel_mesh, GeometryConfig};
    use super::*;

    #[test]
    fn one_cell_becomes_four() {
        let m = build_channel_mesh(&GeometryConfig::<f64>::unit_square(1, 1)).unwrap();
        let (f, link) = refine_uniform(&m, None).unwrap();
        assert_eq!(f.num_cells(), 4);
        assert_eq!(f.num_vertices(), 9);
        assert_eq!(f.boundary.len(), 8);
        assert_eq!(link.children[0], [0, 1, 2, 3]);
        assert_eq!(link.vertex_origin[8], VertexOrigin::CellCenter(0));
    }

    #[test]
    fn twice_is_sixteen_times() {
        let m = build_channel_mesh(&GeometryConfig::<f64>::benchmark()).unwrap();
        let (f1, _) = refine_uniform(&m, None).unwrap();
        let (f2, _) = refine_uniform(&f1, None).unwrap();
        assert_eq!(f2.num_cells(), 16 * m.num_cells());
    }

    #[test]
    fn tags_are_inherited_and_obstacle_midpoints_snapped() {
        let g = GeometryConfig::<f64>::benchmark();
        let m = build_channel_mesh(&g).unwrap();
        let ell = g.obstacle.unwrap();
        let (f, link) = refine_uniform(&m, Some(&ell)).unwrap();
        for tag in [BoundaryTag::Inflow, BoundaryTag::Wall, BoundaryTag::Outflow, BoundaryTag::Obstacle] {
            let nc = m.boundary.iter().filter(|e| e.tag == tag).count();
            let nf = f.boundary.iter().filter(|e| e.tag == tag).count();
            assert_eq!(nf, 2 * nc);
        }
        for e in f.boundary.iter().filter(|e| e.tag == BoundaryTag::Obstacle) {
            // fine edge's cell is a child of the coarse cell adjacent to the obstacle
            let p = link.parent[e.cell];
            assert!(m.boundary.iter().any(|ce| ce.cell == p && ce.tag == BoundaryTag::Obstacle));
            for &v in &e.vertices {
                let x = f.vertices[v];
                let q = ((x[0] - 0.2) / 0.05).powi(2) + ((x[1] - 0.2) / 0.05).powi(2);
                assert!((q - 1.0).abs() < 1e-12);
            }
        }
    }
}
