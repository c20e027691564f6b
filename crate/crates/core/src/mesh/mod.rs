//! Quadrilateral meshes of the channel, their nested refinement and the
//! coarse-to-fine transfer operators.

mod build;
mod export;
mod patch;
mod refine;
mod transfer;

pub use build::build_channel_mesh;
pub use export::{read_mesh_text, write_mesh_text};
pub use patch::{build_patches, Patch, PatchSet};
pub use refine::refine_uniform;
pub use transfer::{build_transfer, TransferOps};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boundary parts of the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Inflow,
    Wall,
    Outflow,
    Obstacle,
}

impl BoundaryTag {
    /// Velocity is prescribed everywhere except on the do-nothing outflow.
    pub fn is_dirichlet(self) -> bool {
        !matches!(self, BoundaryTag::Outflow)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Inflow => "inflow",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Outflow => "outflow",
            BoundaryTag::Obstacle => "obstacle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inflow" => Some(BoundaryTag::Inflow),
            "wall" => Some(BoundaryTag::Wall),
            "outflow" => Some(BoundaryTag::Outflow),
            "obstacle" => Some(BoundaryTag::Obstacle),
            _ => None,
        }
    }

    /// Precedence when a node touches several boundary parts.
    pub(crate) fn priority(self) -> u8 {
        match self {
            BoundaryTag::Outflow => 0,
            BoundaryTag::Inflow => 1,
            BoundaryTag::Wall => 2,
            BoundaryTag::Obstacle => 3,
        }
    }
}

/// Axis-aligned elliptical obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse<T> {
    pub center: [T; 2],
    pub semi_axes: [T; 2],
}

impl<T: Real> Ellipse<T> {
    pub fn new(center: [T; 2], semi_axes: [T; 2]) -> Self {
        Self { center, semi_axes }
    }

    /// Radial projection from the center onto the ellipse.
    pub fn snap(&self, p: [T; 2]) -> [T; 2] {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let q = (dx / self.semi_axes[0]).powi(2) + (dy / self.semi_axes[1]).powi(2);
        let s = T::one() / q.sqrt();
        [self.center[0] + s * dx, self.center[1] + s * dy]
    }

    pub fn aspect_ratio(&self) -> T {
        self.semi_axes[0] / self.semi_axes[1]
    }
}

/// Element counts of the base mesh.
///
/// With an obstacle, `cells_y` is both the number of cells across the channel
/// and the number of cells on each side of the O-grid box around the obstacle;
/// `cells_x` counts cells downstream of that box and `ring_layers` the radial
/// layers of the O-grid. Without an obstacle the mesh is a plain
/// `cells_x × cells_y` grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshResolution<T> {
    pub cells_x: usize,
    pub cells_y: usize,
    pub ring_layers: usize,
    /// Ratio between consecutive radial layer thicknesses, 1 for uniform.
    pub ring_grading: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryConfig<T> {
    pub channel_length: T,
    pub channel_height: T,
    pub obstacle: Option<Ellipse<T>>,
    pub resolution: MeshResolution<T>,
}

impl<T: Real> GeometryConfig<T> {
    /// Channel 2.2 × 0.41 with a disc of radius 0.05 centered at (0.2, 0.2).
    pub fn benchmark() -> Self {
        Self {
            channel_length: T::lit(2.2),
            channel_height: T::lit(0.41),
            obstacle: Some(Ellipse::new(
                [T::lit(0.2), T::lit(0.2)],
                [T::lit(0.05), T::lit(0.05)],
            )),
            resolution: MeshResolution {
                cells_x: 6,
                cells_y: 2,
                ring_layers: 1,
                ring_grading: T::one(),
            },
        }
    }

    pub fn unit_square(cells_x: usize, cells_y: usize) -> Self {
        Self {
            channel_length: T::one(),
            channel_height: T::one(),
            obstacle: None,
            resolution: MeshResolution {
                cells_x,
                cells_y,
                ring_layers: 1,
                ring_grading: T::one(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let res = &self.resolution;
        if !(self.channel_length > zero && self.channel_height > zero) {
            return Err(Error::Geometry("channel dimensions must be positive".into()));
        }
        if res.cells_x == 0 || res.cells_y == 0 {
            return Err(Error::Geometry("base mesh needs at least one element".into()));
        }
        if let Some(e) = &self.obstacle {
            let [cx, cy] = e.center;
            let [a, b] = e.semi_axes;
            if !(a > zero && b > zero) {
                return Err(Error::Geometry("ellipse semi-axes must be positive".into()));
            }
            if res.ring_layers == 0 || !(res.ring_grading > zero) {
                return Err(Error::Geometry("O-grid needs ring_layers ≥ 1 and grading > 0".into()));
            }
            if !(cx - a > zero) {
                return Err(Error::Geometry("obstacle touches the inflow boundary".into()));
            }
            if !(cy - b > zero && cy + b < self.channel_height) {
                return Err(Error::Geometry("obstacle touches a channel wall".into()));
            }
            if !(cx + cx < self.channel_length) {
                return Err(Error::Geometry(
                    "obstacle box [0, 2·cx] must end before the outflow".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub cell: usize,
    /// Local edge `e` joins local vertices `e` and `(e + 1) % 4`.
    pub local_edge: u8,
}

/// One level of the quadrilateral mesh. Cells list their vertices
/// counterclockwise.
#[derive(Clone, Debug)]
pub struct MeshLevel<T> {
    pub level: usize,
    pub vertices: Vec<[T; 2]>,
    pub cells: Vec<[usize; 4]>,
    pub boundary: Vec<BoundaryEdge>,
    pub diameters: Vec<T>,
}

impl<T: Real> MeshLevel<T> {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_coords(&self, c: usize) -> [[T; 2]; 4] {
        let v = self.cells[c];
        [
            self.vertices[v[0]],
            self.vertices[v[1]],
            self.vertices[v[2]],
            self.vertices[v[3]],
        ]
    }

    pub(crate) fn finish(level: usize, vertices: Vec<[T; 2]>, cells: Vec<[usize; 4]>, boundary: Vec<BoundaryEdge>) -> Result<Self> {
        let mut mesh = Self {
            level,
            vertices,
            cells,
            boundary,
            diameters: Vec::new(),
        };
        mesh.diameters = (0..mesh.cells.len()).map(|c| cell_diameter(&mesh.cell_coords(c))).collect();
        mesh.check()?;
        Ok(mesh)
    }

    /// Positive Jacobian on every cell. The Jacobian determinant of a
    /// bilinear map is affine in each reference variable, so the corners
    /// decide.
    pub fn check(&self) -> Result<()> {
        for c in 0..self.cells.len() {
            let x = self.cell_coords(c);
            for k in 0..4 {
                let prev = x[(k + 3) % 4];
                let here = x[k];
                let next = x[(k + 1) % 4];
                let cross = (next[0] - here[0]) * (prev[1] - here[1])
                    - (next[1] - here[1]) * (prev[0] - here[0]);
                if !(cross > T::zero()) {
                    return Err(Error::Geometry(format!(
                        "cell {c} on level {} is not convex counterclockwise at corner {k}",
                        self.level
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn cell_diameter<T: Real>(x: &[[T; 2]; 4]) -> T {
    let d = |a: [T; 2], b: [T; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(x[0], x[2]).max(d(x[1], x[3]))
}

/// Where a vertex of level ℓ+1 comes from on level ℓ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexOrigin {
    Vertex(usize),
    EdgeMidpoint(usize, usize),
    CellCenter(usize),
}

/// Parent/child relation between level ℓ and level ℓ+1.
#[derive(Clone, Debug)]
pub struct RefinementLink {
    pub parent: Vec<usize>,
    /// Quadrant of each child inside its parent: 0 = (0,0), 1 = (½,0),
    /// 2 = (½,½), 3 = (0,½) in the parent's reference square.
    pub quadrant: Vec<u8>,
    pub children: Vec<[usize; 4]>,
    pub vertex_origin: Vec<VertexOrigin>,
}

/// Reference-square offset of a child quadrant.
pub fn quadrant_offset<T: Real>(q: u8) -> [T; 2] {
    let h = T::lit(0.5);
    match q {
        0 => [T::zero(), T::zero()],
        1 => [h, T::zero()],
        2 => [h, h],
        _ => [T::zero(), h],
    }
}

/// Nested levels 0..=top built by repeated quadrisection of a base mesh.
#[derive(Clone, Debug)]
pub struct MeshHierarchy<T> {
    pub geometry: GeometryConfig<T>,
    pub levels: Vec<MeshLevel<T>>,
    pub links: Vec<RefinementLink>,
}

impl<T: Real> MeshHierarchy<T> {
    pub fn new(geometry: GeometryConfig<T>, num_levels: usize) -> Result<Self> {
        if num_levels == 0 {
            return Err(Error::Config("hierarchy needs at least one level".into()));
        }
        let base = build_channel_mesh(&geometry)?;
        let mut hier = Self {
            geometry,
            levels: vec![base],
            links: Vec::new(),
        };
        for _ in 1..num_levels {
            hier.refine()?;
        }
        Ok(hier)
    }

    pub fn refine(&mut self) -> Result<()> {
        let top = self.levels.last().expect("non-empty hierarchy");
        let (fine, link) = refine_uniform(top, self.geometry.obstacle.as_ref())?;
        self.levels.push(fine);
        self.links.push(link);
        Ok(())
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> Result<&MeshLevel<T>> {
        self.levels
            .get(l)
            .ok_or_else(|| Error::Level(format!("level {l} not in hierarchy of {} levels", self.levels.len())))
    }

    /// Link between level `l` and `l + 1`.
    pub fn link(&self, l: usize) -> Result<&RefinementLink> {
        self.links
            .get(l)
            .ok_or_else(|| Error::Level(format!("no refinement link above level {l}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_obstacle_touching_wall() {
        let mut g = GeometryConfig::<f64>::benchmark();
        g.obstacle = Some(Ellipse::new([0.2, 0.2], [0.05, 0.21]));
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("wall"), "{err}");
        g.obstacle = Some(Ellipse::new([0.2, 0.2], [0.0, 0.05]));
        assert!(g.validate().is_err());
        g.obstacle = Some(Ellipse::new([0.04, 0.2], [0.05, 0.05]));
        assert!(g.validate().is_err());
    }

    #[test]
    fn snapping_lands_on_ellipse() {
        let e = Ellipse::new([0.2, 0.2], [0.08, 0.03]);
        for k in 0..17 {
            let t = k as f64 * 0.37;
            let p = e.snap([0.2 + 0.5 * t.cos(), 0.2 + 0.11 * t.sin()]);
            let q = ((p[0] - 0.2) / 0.08).powi(2) + ((p[1] - 0.2) / 0.03).powi(2);
            assert!((q - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn hierarchy_levels_quadruple() {
        let h = MeshHierarchy::<f64>::new(GeometryConfig::benchmark(), 3).unwrap();
        let n0 = h.levels[0].num_cells();
        assert_eq!(h.levels[1].num_cells(), 4 * n0);
        assert_eq!(h.levels[2].num_cells(), 16 * n0);
        assert!(h.level(3).is_err());
    }
}
