//! Degree-of-freedom handling for equal-order Q_r velocity/pressure spaces.

use std::collections::HashMap;

use super::reference::{bilinear_map, CellMap, Quadrature, ReferenceElement};
use crate::error::{Error, Result};
use crate::mesh::{quadrant_offset, BoundaryEdge, BoundaryTag, MeshHierarchy};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Number of solution fields: pressure and two velocity components.
pub const FIELDS: usize = 3;

/// Pressure-stabilization group: a set of nodes and the assembled
/// `Σ_T h_T² Fᵀ K_T F` over its cells, where `F` maps group pressures to the
/// fluctuation `p − π_h p` on cell `T`.
#[derive(Clone, Debug)]
pub struct LpsGroup<T> {
    pub nodes: Vec<usize>,
    pub matrix: Vec<T>,
}

/// Scalar Q_r space on one mesh level plus the pressure-first system layout
/// `x = (p, v¹, v²)`, each block of length `num_nodes`.
#[derive(Clone, Debug)]
pub struct FeSpace<T> {
    pub degree: usize,
    pub level: usize,
    pub element: ReferenceElement,
    num_nodes: usize,
    node_coords: Vec<[T; 2]>,
    node_tag: Vec<Option<BoundaryTag>>,
    cell_nodes: Vec<usize>,
    cell_coords: Vec<[[T; 2]; 4]>,
    diameters: Vec<T>,
    boundary: Vec<BoundaryEdge>,
    quad: Quadrature<T>,
    ref_values: Vec<Vec<T>>,
    jxw: Vec<T>,
    grads: Vec<[T; 2]>,
    points: Vec<[T; 2]>,
    lps: Vec<LpsGroup<T>>,
    pattern: CsrMatrix<T>,
    cell_positions: Vec<usize>,
    lps_positions: Vec<Vec<usize>>,
}

impl<T: Real> FeSpace<T> {
    pub fn new(hier: &MeshHierarchy<T>, level: usize, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(Error::Config(format!("polynomial degree {degree} not supported (1 or 2)")));
        }
        let mesh = hier.level(level)?;
        let element = ReferenceElement::new(degree);
        let nloc = element.num_nodes();
        let n1 = degree + 1;
        let nv = mesh.num_vertices();

        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cell_nodes = Vec::with_capacity(mesh.num_cells() * nloc);
        let mut next_edge = 0usize;
        let mut num_nodes = nv;
        if degree == 2 {
            for cell in &mesh.cells {
                for e in 0..4 {
                    let (a, b) = (cell[e], cell[(e + 1) % 4]);
                    edge_ids.entry((a.min(b), a.max(b))).or_insert_with(|| {
                        next_edge += 1;
                        next_edge - 1
                    });
                }
            }
            num_nodes = nv + next_edge + mesh.num_cells();
        }
        for (c, cell) in mesh.cells.iter().enumerate() {
            for a in 0..nloc {
                let (i, j) = (a % n1, a / n1);
                let node = match (degree, i, j) {
                    (_, 0, 0) => cell[0],
                    (1, 1, 0) | (2, 2, 0) => cell[1],
                    (1, 1, 1) | (2, 2, 2) => cell[2],
                    (1, 0, 1) | (2, 0, 2) => cell[3],
                    (2, 1, 1) => nv + next_edge + c,
                    (2, _, _) => {
                        let (p, q) = match (i, j) {
                            (1, 0) => (cell[0], cell[1]),
                            (2, 1) => (cell[1], cell[2]),
                            (1, 2) => (cell[2], cell[3]),
                            _ => (cell[3], cell[0]),
                        };
                        nv + edge_ids[&(p.min(q), p.max(q))]
                    }
                    _ => unreachable!(),
                };
                cell_nodes.push(node);
            }
        }

        let cell_coords: Vec<[[T; 2]; 4]> = (0..mesh.num_cells()).map(|c| mesh.cell_coords(c)).collect();
        let mut node_coords = vec![[T::nan(); 2]; num_nodes];
        let mut seen = vec![false; num_nodes];
        for c in 0..mesh.num_cells() {
            for a in 0..nloc {
                let n = cell_nodes[c * nloc + a];
                if !seen[n] {
                    seen[n] = true;
                    node_coords[n] = if n < nv {
                        mesh.vertices[n]
                    } else {
                        bilinear_map(&cell_coords[c], element.node(a)).point
                    };
                }
            }
        }

        let mut node_tag: Vec<Option<BoundaryTag>> = vec![None; num_nodes];
        for e in &mesh.boundary {
            for a in edge_local_nodes(degree, e.local_edge) {
                let n = cell_nodes[e.cell * nloc + a];
                let t = &mut node_tag[n];
                if t.map_or(true, |old| e.tag.priority() > old.priority()) {
                    *t = Some(e.tag);
                }
            }
        }

        let quad = Quadrature::tensor(degree + 1);
        let ref_eval: Vec<(Vec<T>, Vec<[T; 2]>)> = quad.points.iter().map(|&p| element.eval(p)).collect();
        let nq = quad.len();
        let mut jxw = Vec::with_capacity(mesh.num_cells() * nq);
        let mut grads = Vec::with_capacity(mesh.num_cells() * nq * nloc);
        let mut points = Vec::with_capacity(mesh.num_cells() * nq);
        for x in &cell_coords {
            for (q, p) in quad.points.iter().enumerate() {
                let map = bilinear_map(x, *p);
                jxw.push(map.det * quad.weights[q]);
                points.push(map.point);
                for g in &ref_eval[q].1 {
                    grads.push(map.grad(*g));
                }
            }
        }

        let mut space = Self {
            degree,
            level,
            element,
            num_nodes,
            node_coords,
            node_tag,
            cell_nodes,
            cell_coords,
            diameters: mesh.diameters.clone(),
            boundary: mesh.boundary.clone(),
            ref_values: ref_eval.into_iter().map(|e| e.0).collect(),
            quad,
            jxw,
            grads,
            points,
            lps: Vec::new(),
            pattern: CsrMatrix::from_pattern(0, Vec::new()),
            cell_positions: Vec::new(),
            lps_positions: Vec::new(),
        };
        space.lps = space.build_lps_groups(hier)?;
        space.build_layout();
        Ok(space)
    }

    fn build_lps_groups(&self, hier: &MeshHierarchy<T>) -> Result<Vec<LpsGroup<T>>> {
        let nloc = self.nodes_per_cell();
        let q1 = ReferenceElement::new(1);
        let half = T::lit(0.5);
        // Members of one group: (cell, lattice coordinates of its local nodes).
        let mut groups: Vec<Vec<(usize, Vec<(usize, usize)>)>> = Vec::new();
        if self.degree == 2 {
            for c in 0..self.num_cells() {
                let lat = (0..9).map(|a| (a % 3, a / 3)).collect();
                groups.push(vec![(c, lat)]);
            }
        } else if self.level > 0 {
            let link = hier.link(self.level - 1)?;
            for kids in &link.children {
                let members = kids
                    .iter()
                    .map(|&k| {
                        let off: [T; 2] = quadrant_offset(link.quadrant[k]);
                        let (ox, oy) = (usize::from(off[0] > T::zero()), usize::from(off[1] > T::zero()));
                        (k, (0..4).map(|a| (ox + a % 2, oy + a / 2)).collect())
                    })
                    .collect();
                groups.push(members);
            }
        } else {
            // Coarsest Q1 level has no macro cells: project onto constants.
            return Ok((0..self.num_cells())
                .map(|c| {
                    let h2 = self.diameters[c] * self.diameters[c];
                    let k = self.cell_stiffness(c);
                    LpsGroup {
                        nodes: self.cell_nodes(c).to_vec(),
                        matrix: k.into_iter().map(|v| v * h2).collect(),
                    }
                })
                .collect());
        }

        let mut out = Vec::with_capacity(groups.len());
        for members in groups {
            // 3×3 lattice of group nodes.
            let mut lattice_node = [usize::MAX; 9];
            for (cell, lat) in &members {
                for (a, &(i, j)) in lat.iter().enumerate() {
                    lattice_node[j * 3 + i] = self.cell_nodes(*cell)[a];
                }
            }
            let ng = 9;
            let mut s = vec![T::zero(); ng * ng];
            for (cell, lat) in &members {
                let mut f = vec![T::zero(); nloc * ng];
                for (a, &(i, j)) in lat.iter().enumerate() {
                    f[a * ng + j * 3 + i] += T::one();
                    let pos = [T::from_usize_lossy(i) * half, T::from_usize_lossy(j) * half];
                    let (psi, _) = q1.eval(pos);
                    for (b, pb) in psi.iter().enumerate() {
                        let corner = (2 * (b % 2), 2 * (b / 2));
                        f[a * ng + corner.1 * 3 + corner.0] -= *pb;
                    }
                }
                let k = self.cell_stiffness(*cell);
                let h2 = self.diameters[*cell] * self.diameters[*cell];
                // s += h² Fᵀ K F
                let mut kf = vec![T::zero(); nloc * ng];
                for a in 0..nloc {
                    for b in 0..nloc {
                        let kab = k[a * nloc + b];
                        if kab != T::zero() {
                            for g in 0..ng {
                                kf[a * ng + g] += kab * f[b * ng + g];
                            }
                        }
                    }
                }
                for a in 0..nloc {
                    for g in 0..ng {
                        let fag = f[a * ng + g];
                        if fag != T::zero() {
                            for h in 0..ng {
                                s[g * ng + h] += h2 * fag * kf[a * ng + h];
                            }
                        }
                    }
                }
            }
            out.push(LpsGroup {
                nodes: lattice_node.to_vec(),
                matrix: s,
            });
        }
        Ok(out)
    }

    fn cell_stiffness(&self, c: usize) -> Vec<T> {
        let nloc = self.nodes_per_cell();
        let mut k = vec![T::zero(); nloc * nloc];
        for q in 0..self.quad.len() {
            let w = self.jxw(c, q);
            let g = self.grads(c, q);
            for a in 0..nloc {
                for b in 0..nloc {
                    k[a * nloc + b] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
        k
    }

    fn build_layout(&mut self) {
        let n = self.num_nodes;
        let nloc = self.nodes_per_cell();
        let mut scalar: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in 0..self.num_cells() {
            let nodes = self.cell_nodes(c);
            for &a in nodes {
                scalar[a].extend_from_slice(nodes);
            }
        }
        for g in &self.lps {
            for &a in &g.nodes {
                scalar[a].extend_from_slice(&g.nodes);
            }
        }
        for row in scalar.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        let mut rows = Vec::with_capacity(FIELDS * n);
        for _fi in 0..FIELDS {
            for row in &scalar {
                let mut r = Vec::with_capacity(FIELDS * row.len());
                for fj in 0..FIELDS {
                    r.extend(row.iter().map(|&j| fj * n + j));
                }
                rows.push(r);
            }
        }
        self.pattern = CsrMatrix::from_pattern(FIELDS * n, rows);

        let nl = FIELDS * nloc;
        let mut cell_positions = Vec::with_capacity(self.num_cells() * nl * nl);
        for c in 0..self.num_cells() {
            let nodes = self.cell_nodes(c);
            let global: Vec<usize> = (0..nl).map(|k| (k / nloc) * n + nodes[k % nloc]).collect();
            for &gi in &global {
                for &gj in &global {
                    cell_positions.push(self.pattern.find(gi, gj).expect("cell entry in pattern"));
                }
            }
        }
        self.cell_positions = cell_positions;
        self.lps_positions = self
            .lps
            .iter()
            .map(|g| {
                let mut pos = Vec::with_capacity(g.nodes.len() * g.nodes.len());
                for &a in &g.nodes {
                    for &b in &g.nodes {
                        pos.push(self.pattern.find(a, b).expect("LPS entry in pattern"));
                    }
                }
                pos
            })
            .collect();
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Pressure unknowns N_p.
    pub fn num_pressure(&self) -> usize {
        self.num_nodes
    }

    /// Velocity unknowns N_v = 2 · scalar nodes.
    pub fn num_velocity(&self) -> usize {
        2 * self.num_nodes
    }

    pub fn num_dofs(&self) -> usize {
        FIELDS * self.num_nodes
    }

    pub fn num_cells(&self) -> usize {
        self.cell_coords.len()
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.element.num_nodes()
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        let n = self.nodes_per_cell();
        &self.cell_nodes[c * n..(c + 1) * n]
    }

    pub fn cell_coords(&self, c: usize) -> &[[T; 2]; 4] {
        &self.cell_coords[c]
    }

    pub fn diameter(&self, c: usize) -> T {
        self.diameters[c]
    }

    pub fn node_coords(&self) -> &[[T; 2]] {
        &self.node_coords
    }

    pub fn node_tag(&self, n: usize) -> Option<BoundaryTag> {
        self.node_tag[n]
    }

    pub fn is_dirichlet_node(&self, n: usize) -> bool {
        self.node_tag[n].is_some_and(|t| t.is_dirichlet())
    }

    /// Global index of the pressure at `node`.
    #[inline]
    pub fn p_dof(&self, node: usize) -> usize {
        node
    }

    /// Global index of velocity component `comp` ∈ {0, 1} at `node`.
    #[inline]
    pub fn v_dof(&self, comp: usize, node: usize) -> usize {
        (1 + comp) * self.num_nodes + node
    }

    /// Mask over all system DoFs marking constrained velocity entries.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let n = self.num_nodes;
        let mut m = vec![false; FIELDS * n];
        for node in 0..n {
            if self.is_dirichlet_node(node) {
                m[n + node] = true;
                m[2 * n + node] = true;
            }
        }
        m
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn quadrature(&self) -> &Quadrature<T> {
        &self.quad
    }

    #[inline]
    pub fn ref_values(&self, q: usize) -> &[T] {
        &self.ref_values[q]
    }

    #[inline]
    pub fn jxw(&self, c: usize, q: usize) -> T {
        self.jxw[c * self.quad.len() + q]
    }

    #[inline]
    pub fn grads(&self, c: usize, q: usize) -> &[[T; 2]] {
        let nloc = self.nodes_per_cell();
        let start = (c * self.quad.len() + q) * nloc;
        &self.grads[start..start + nloc]
    }

    #[inline]
    pub fn quad_point(&self, c: usize, q: usize) -> [T; 2] {
        self.points[c * self.quad.len() + q]
    }

    pub fn lps_groups(&self) -> &[LpsGroup<T>] {
        &self.lps
    }

    /// Zero matrix with the full system sparsity pattern.
    pub fn system_pattern(&self) -> CsrMatrix<T> {
        self.pattern.clone()
    }

    pub(crate) fn cell_positions(&self, c: usize) -> &[usize] {
        let nl = FIELDS * self.nodes_per_cell();
        &self.cell_positions[c * nl * nl..(c + 1) * nl * nl]
    }

    pub(crate) fn lps_positions(&self, g: usize) -> &[usize] {
        &self.lps_positions[g]
    }

    /// Geometry, basis values and physical gradients at reference point `xi`
    /// of cell `c`.
    pub fn eval_at(&self, c: usize, xi: [T; 2]) -> (CellMap<T>, Vec<T>, Vec<[T; 2]>) {
        let map = bilinear_map(&self.cell_coords[c], xi);
        let (v, g) = self.element.eval(xi);
        let g = g.into_iter().map(|g| map.grad(g)).collect();
        (map, v, g)
    }

    /// Nodal interpolation of a vector field and a scalar field into a
    /// system vector.
    pub fn interpolate(&self, velocity: impl Fn([T; 2]) -> [T; 2], pressure: impl Fn([T; 2]) -> T) -> Vec<T> {
        let n = self.num_nodes;
        let mut x = vec![T::zero(); FIELDS * n];
        for (node, &p) in self.node_coords.iter().enumerate() {
            let v = velocity(p);
            x[node] = pressure(p);
            x[n + node] = v[0];
            x[2 * n + node] = v[1];
        }
        x
    }
}

/// Local nodes (lexicographic numbering) lying on local edge `e`.
pub(crate) fn edge_local_nodes(degree: usize, e: u8) -> Vec<usize> {
    let n1 = degree + 1;
    (0..n1)
        .map(|k| match e {
            0 => k,
            1 => k * n1 + degree,
            2 => degree * n1 + (degree - k),
            _ => (degree - k) * n1,
        })
        .collect()
}
