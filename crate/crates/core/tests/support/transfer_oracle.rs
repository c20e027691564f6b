//! Independent checks of the grid transfer: explicit transpose and coarse
//! basis functions evaluated at fine node positions on an axis-aligned mesh.

use dnnmg_core::fem::ReferenceElement;
use dnnmg_core::mesh::{GeometryConfig, TransferOps};
use dnnmg_core::{Discretization, FeSpaceF64};

/// Largest `|R_ij − P_ji|` over both patterns.
pub fn transpose_defect(t: &TransferOps<f64>) -> f64 {
    let (p, r) = (t.prolongation().to_dense(), t.restriction().to_dense());
    let mut worst = 0.0f64;
    for (i, row) in r.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            worst = worst.max((v - p[j][i]).abs());
        }
    }
    worst
}

/// Coarse basis function `i` at physical point `x`, for a mesh of
/// axis-aligned rectangles.
fn basis_at(space: &FeSpaceF64, i: usize, x: [f64; 2]) -> f64 {
    let el = ReferenceElement::new(space.degree);
    for c in 0..space.num_cells() {
        let v = space.cell_coords(c);
        let (x0, x1) = (v[0][0].min(v[2][0]), v[0][0].max(v[2][0]));
        let (y0, y1) = (v[0][1].min(v[2][1]), v[0][1].max(v[2][1]));
        let tol = 1e-12;
        if x[0] < x0 - tol || x[0] > x1 + tol || x[1] < y0 - tol || x[1] > y1 + tol {
            continue;
        }
        let xi = [(x[0] - v[0][0]) / (v[1][0] - v[0][0]), (x[1] - v[0][1]) / (v[3][1] - v[0][1])];
        let (vals, _) = el.eval(xi);
        return space.cell_nodes(c).iter().zip(&vals).filter(|(&n, _)| n == i).map(|(_, &v)| v).sum::<f64>();
    }
    panic!("point {x:?} outside the mesh")
}

/// Largest deviation of `P e_i` from `φ_i(x_f)` over all coarse basis
/// functions and fine nodes, on a unit-square hierarchy.
pub fn basis_reproduction_defect(degree: usize) -> f64 {
    let disc = Discretization::new(GeometryConfig::unit_square(3, 2), 2, degree).unwrap();
    let mut worst = 0.0f64;
    for level in 0..2 {
        let (coarse, fine) = (disc.space(level).unwrap(), disc.space(level + 1).unwrap());
        let t = disc.transfer(level).unwrap();
        for i in 0..coarse.num_nodes() {
            let mut e = vec![0.0; coarse.num_nodes()];
            e[i] = 1.0;
            let pe = t.prolongate(&e);
            for (f, &val) in pe.iter().enumerate() {
                worst = worst.max((val - basis_at(coarse, i, fine.node_coords()[f])).abs());
            }
        }
    }
    worst
}
