use super::{BoundaryEdge, BoundaryTag, GeometryConfig, MeshLevel};
use crate::error::Result;
use crate::scalar::Real;

/// Builds the base (level 0) mesh of the channel.
///
/// With an obstacle the box `[0, 2·cx] × [0, H]` around the ellipse is meshed
/// as an O-grid whose spokes run from the ellipse to uniformly spaced points
/// on the box boundary; the rest of the channel is a structured grid that
/// matches the box on its right side. Ellipse vertices lie exactly on the
/// ellipse.
pub fn build_channel_mesh<T: Real>(cfg: &GeometryConfig<T>) -> Result<MeshLevel<T>> {
    cfg.validate()?;
    match cfg.obstacle {
        None => structured(cfg),
        Some(_) => o_grid(cfg),
    }
}

fn structured<T: Real>(cfg: &GeometryConfig<T>) -> Result<MeshLevel<T>> {
    let nx = cfg.resolution.cells_x;
    let ny = cfg.resolution.cells_y;
    let dx = cfg.channel_length / T::from_usize_lossy(nx);
    let dy = cfg.channel_height / T::from_usize_lossy(ny);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([T::from_usize_lossy(i) * dx, T::from_usize_lossy(j) * dy]);
        }
    }
    let mut cells = Vec::with_capacity(nx * ny);
    let mut boundary = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let c = cells.len();
            let v = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
            cells.push(v);
            if j == 0 {
                boundary.push(edge(v, 0, c, BoundaryTag::Wall));
            }
            if i == nx - 1 {
                boundary.push(edge(v, 1, c, BoundaryTag::Outflow));
            }
            if j == ny - 1 {
                boundary.push(edge(v, 2, c, BoundaryTag::Wall));
            }
            if i == 0 {
                boundary.push(edge(v, 3, c, BoundaryTag::Inflow));
            }
        }
    }
    MeshLevel::finish(0, vertices, cells, boundary)
}

fn edge(v: [usize; 4], e: u8, cell: usize, tag: BoundaryTag) -> BoundaryEdge {
    BoundaryEdge {
        vertices: [v[e as usize], v[(e as usize + 1) % 4]],
        tag,
        cell,
        local_edge: e,
    }
}

fn o_grid<T: Real>(cfg: &GeometryConfig<T>) -> Result<MeshLevel<T>> {
    let ellipse = cfg.obstacle.expect("obstacle present");
    let res = cfg.resolution;
    let n = res.cells_y;
    let nr = res.ring_layers;
    let nx = res.cells_x;
    let h = cfg.channel_height;
    let bx = ellipse.center[0] + ellipse.center[0];
    let loop_len = 4 * n;

    // Counterclockwise loop around the box starting at its lower left corner.
    let nf = T::from_usize_lossy(n);
    let box_point = |j: usize| -> [T; 2] {
        let side = j / n;
        let s = T::from_usize_lossy(j % n) / nf;
        match side {
            0 => [s * bx, T::zero()],
            1 => [bx, s * h],
            2 => [bx - s * bx, h],
            _ => [T::zero(), h - s * h],
        }
    };
    let g = res.ring_grading;
    let layer_param = |i: usize| -> T {
        if (g - T::one()).abs() < T::lit(1e-12) {
            T::from_usize_lossy(i) / T::from_usize_lossy(nr)
        } else {
            (g.powi(i as i32) - T::one()) / (g.powi(nr as i32) - T::one())
        }
    };

    let mut vertices = Vec::with_capacity(loop_len * (nr + 1) + nx * (n + 1));
    for i in 0..=nr {
        let t = layer_param(i);
        for j in 0..loop_len {
            let q = box_point(j);
            let e = ellipse.snap(q);
            vertices.push(if i == 0 {
                e
            } else if i == nr {
                q
            } else {
                [e[0] + t * (q[0] - e[0]), e[1] + t * (q[1] - e[1])]
            });
        }
    }
    let ring = |i: usize, j: usize| i * loop_len + (j % loop_len);

    let mut cells = Vec::new();
    let mut boundary = Vec::new();
    for i in 0..nr {
        for j in 0..loop_len {
            let c = cells.len();
            let v = [ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1)];
            cells.push(v);
            if i == 0 {
                boundary.push(edge(v, 3, c, BoundaryTag::Obstacle));
            }
            if i == nr - 1 {
                let tag = match j / n {
                    0 | 2 => Some(BoundaryTag::Wall),
                    3 => Some(BoundaryTag::Inflow),
                    _ => None,
                };
                if let Some(tag) = tag {
                    boundary.push(edge(v, 1, c, tag));
                }
            }
        }
    }

    // Downstream block; its first column is the right side of the box.
    let dx = (cfg.channel_length - bx) / T::from_usize_lossy(nx);
    let first_new = vertices.len();
    for iy in 0..=n {
        for ix in 1..=nx {
            vertices.push([bx + T::from_usize_lossy(ix) * dx, T::from_usize_lossy(iy) * h / nf]);
        }
    }
    let grid = |ix: usize, iy: usize| {
        if ix == 0 {
            ring(nr, n + iy)
        } else {
            first_new + iy * nx + (ix - 1)
        }
    };
    for iy in 0..n {
        for ix in 0..nx {
            let c = cells.len();
            let v = [grid(ix, iy), grid(ix + 1, iy), grid(ix + 1, iy + 1), grid(ix, iy + 1)];
            cells.push(v);
            if iy == 0 {
                boundary.push(edge(v, 0, c, BoundaryTag::Wall));
            }
            if iy == n - 1 {
                boundary.push(edge(v, 2, c, BoundaryTag::Wall));
            }
            if ix == nx - 1 {
                boundary.push(edge(v, 1, c, BoundaryTag::Outflow));
            }
        }
    }
    MeshLevel::finish(0, vertices, cells, boundary)
}

#[cfg(test)]
mod tests {
    use super::super::{Ellipse, MeshResolution};
    use super::*;

    #[test]
    fn unit_square_two_by_two() {
        let m = build_channel_mesh(&GeometryConfig::<f64>::unit_square(2, 2)).unwrap();
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.boundary.len(), 8);
        let inflow = m.boundary.iter().filter(|e| e.tag == BoundaryTag::Inflow).count();
        let outflow = m.boundary.iter().filter(|e| e.tag == BoundaryTag::Outflow).count();
        assert_eq!((inflow, outflow), (2, 2));
    }

    #[test]
    fn benchmark_resolution_counts() {
        let cfg = GeometryConfig {
            resolution: MeshResolution {
                cells_x: 36,
                cells_y: 8,
                ring_layers: 11,
                ring_grading: 1.1,
            },
            ..GeometryConfig::<f64>::benchmark()
        };
        let m = build_channel_mesh(&cfg).unwrap();
        assert_eq!(m.num_cells(), 640);
        assert_eq!(m.num_vertices(), 708);
        assert_eq!(3 * m.num_vertices(), 2124);
    }

    #[test]
    fn every_boundary_edge_is_on_exactly_one_cell_side() {
        let m = build_channel_mesh(&GeometryConfig::<f64>::benchmark()).unwrap();
        use std::collections::HashMap;
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in &m.cells {
            for e in 0..4 {
                let (a, b) = (cell[e], cell[(e + 1) % 4]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let exposed: Vec<_> = count.iter().filter(|(_, &n)| n == 1).map(|(k, _)| *k).collect();
        assert_eq!(exposed.len(), m.boundary.len());
        for e in &m.boundary {
            let [a, b] = e.vertices;
            assert_eq!(count[&(a.min(b), a.max(b))], 1);
        }
    }

    #[test]
    fn disc_mesh_is_mirror_symmetric() {
        let h = 0.4;
        let cfg = GeometryConfig {
            channel_length: 1.5,
            channel_height: h,
            obstacle: Some(Ellipse::new([0.2, 0.2], [0.05, 0.05])),
            resolution: MeshResolution {
                cells_x: 6,
                cells_y: 4,
                ring_layers: 3,
                ring_grading: 1.3,
            },
        };
        let m = build_channel_mesh(&cfg).unwrap();
        for v in &m.vertices {
            let mirrored = [v[0], h - v[1]];
            let best = m
                .vertices
                .iter()
                .map(|w: &[f64; 2]| (w[0] - mirrored[0]).abs().max((w[1] - mirrored[1]).abs()))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-12, "no mirror image for {v:?}");
        }
    }

    #[test]
    fn obstacle_vertices_on_ellipse() {
        let mut cfg = GeometryConfig::<f64>::benchmark();
        cfg.obstacle = Some(Ellipse::new([0.2, 0.2], [0.07, 0.035]));
        let m = build_channel_mesh(&cfg).unwrap();
        for e in m.boundary.iter().filter(|e| e.tag == BoundaryTag::Obstacle) {
            for &v in &e.vertices {
                let p = m.vertices[v];
                let q = ((p[0] - 0.2) / 0.07).powi(2) + ((p[1] - 0.2) / 0.035).powi(2);
                assert!((q - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn builds_in_single_precision() {
        let m = build_channel_mesh(&GeometryConfig::<f32>::benchmark()).unwrap();
        assert_eq!(m.num_cells(), 4 * 2 + 6 * 2);
    }
}
