use super::{quadrant_offset, MeshHierarchy};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::scalar::Real;

/// A coarse cell on level L together with its four children on level L+1.
#[derive(Clone, Debug)]
pub struct Patch<T> {
    pub id: usize,
    pub coarse_cell: usize,
    pub fine_cells: [usize; 4],
    /// Fine scalar nodes in lexicographic order over the patch's
    /// `(2r+1) × (2r+1)` lattice in the parent reference square.
    pub nodes: Vec<usize>,
    /// Coarse cell corners, counterclockwise.
    pub corners: [[T; 2]; 4],
    pub diameter: T,
    pub aspect_ratio: T,
}

impl<T: Real> Patch<T> {
    /// Global velocity DoFs on the patch, component-major.
    pub fn velocity_dofs(&self, space: &FeSpace<T>) -> Vec<usize> {
        (0..2)
            .flat_map(|c| self.nodes.iter().map(move |&n| space.v_dof(c, n)))
            .collect()
    }

    pub fn pressure_dofs(&self, space: &FeSpace<T>) -> Vec<usize> {
        self.nodes.iter().map(|&n| space.p_dof(n)).collect()
    }

    pub fn centroid(&self) -> [T; 2] {
        let q = T::lit(0.25);
        let c = &self.corners;
        [
            q * (c[0][0] + c[1][0] + c[2][0] + c[3][0]),
            q * (c[0][1] + c[1][1] + c[2][1] + c[3][1]),
        ]
    }
}

/// All patches of the two-level pair (L, L+1) with the number of patches
/// sharing each fine node.
#[derive(Clone, Debug)]
pub struct PatchSet<T> {
    pub coarse_level: usize,
    pub patches: Vec<Patch<T>>,
    pub multiplicity: Vec<usize>,
}

impl<T: Real> PatchSet<T> {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn nodes_per_patch(&self) -> usize {
        self.patches.first().map_or(0, |p| p.nodes.len())
    }
}

/// Aspect ratio of a quad from the lengths of its two midlines.
pub(crate) fn quad_aspect_ratio<T: Real>(c: &[[T; 2]; 4]) -> T {
    let h = T::lit(0.5);
    let mid = |a: [T; 2], b: [T; 2]| [h * (a[0] + b[0]), h * (a[1] + b[1])];
    let dist = |a: [T; 2], b: [T; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let horizontal = dist(mid(c[0], c[3]), mid(c[1], c[2]));
    let vertical = dist(mid(c[0], c[1]), mid(c[3], c[2]));
    horizontal.max(vertical) / horizontal.min(vertical)
}

/// One patch per coarse cell of `fine.level − 1`.
pub fn build_patches<T: Real>(hier: &MeshHierarchy<T>, fine: &FeSpace<T>) -> Result<PatchSet<T>> {
    if fine.level == 0 {
        return Err(Error::Level("patches need a coarse level below the fine space".into()));
    }
    let coarse_level = fine.level - 1;
    let coarse = hier.level(coarse_level)?;
    let link = hier.link(coarse_level)?;
    let r = fine.degree;
    let n1 = r + 1;
    let side = 2 * r + 1;
    let mut patches = Vec::with_capacity(coarse.num_cells());
    let mut multiplicity = vec![0usize; fine.num_nodes()];
    for (id, kids) in link.children.iter().enumerate() {
        let mut nodes = vec![usize::MAX; side * side];
        for &k in kids {
            let off: [T; 2] = quadrant_offset(link.quadrant[k]);
            let ox = if off[0] > T::zero() { r } else { 0 };
            let oy = if off[1] > T::zero() { r } else { 0 };
            for (a, &n) in fine.cell_nodes(k).iter().enumerate() {
                nodes[(oy + a / n1) * side + ox + a % n1] = n;
            }
        }
        for &n in &nodes {
            multiplicity[n] += 1;
        }
        let corners = coarse.cell_coords(id);
        patches.push(Patch {
            id,
            coarse_cell: id,
            fine_cells: *kids,
            nodes,
            corners,
            diameter: coarse.diameters[id],
            aspect_ratio: quad_aspect_ratio(&corners),
        });
    }
    Ok(PatchSet {
        coarse_level,
        patches,
        multiplicity,
    })
}
