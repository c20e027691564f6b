use super::{quadrant_offset, MeshHierarchy};
use crate::error::{Error, Result};
use crate::fem::{FeSpace, FIELDS};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Scalar prolongation `P` (coarse → fine interpolation) and restriction
/// `R = Pᵀ` between two consecutive levels; system vectors are transferred
/// block by block.
#[derive(Clone, Debug)]
pub struct TransferOps<T> {
    pub coarse_level: usize,
    pub degree: usize,
    prolongation: CsrMatrix<T>,
    restriction: CsrMatrix<T>,
    injection: Vec<usize>,
}

/// Builds the transfer between `coarse` (level ℓ) and `fine` (level ℓ+1).
///
/// Fine nodes are located through their position in the parent's reference
/// square, so nodes snapped onto the obstacle take the value the coarse
/// function has at the unsnapped position.
pub fn build_transfer<T: Real>(hier: &MeshHierarchy<T>, coarse: &FeSpace<T>, fine: &FeSpace<T>) -> Result<TransferOps<T>> {
    if coarse.degree != fine.degree {
        return Err(Error::Config(format!(
            "transfer between degree {} and degree {} spaces",
            coarse.degree, fine.degree
        )));
    }
    if fine.level != coarse.level + 1 {
        return Err(Error::Level(format!(
            "transfer needs consecutive levels, got {} and {}",
            coarse.level, fine.level
        )));
    }
    let link = hier.link(coarse.level)?;
    if link.parent.len() != fine.num_cells() || link.children.len() != coarse.num_cells() {
        return Err(Error::Level("spaces do not match the mesh hierarchy".into()));
    }
    let el = coarse.element;
    let nloc = el.num_nodes();
    let half = T::lit(0.5);
    let mut rows: Vec<Option<Vec<(usize, T)>>> = vec![None; fine.num_nodes()];
    for fc in 0..fine.num_cells() {
        let parent = link.parent[fc];
        let off: [T; 2] = quadrant_offset(link.quadrant[fc]);
        let cnodes = coarse.cell_nodes(parent);
        for (a, &fnode) in fine.cell_nodes(fc).iter().enumerate() {
            if rows[fnode].is_some() {
                continue;
            }
            let eta: [T; 2] = el.node(a);
            let xi = [off[0] + half * eta[0], off[1] + half * eta[1]];
            let (psi, _) = el.eval(xi);
            let row = (0..nloc).filter(|&b| psi[b] != T::zero()).map(|b| (cnodes[b], psi[b])).collect();
            rows[fnode] = Some(row);
        }
    }
    let mut triplets = Vec::new();
    for (f, row) in rows.into_iter().enumerate() {
        for (c, v) in row.expect("every fine node lies in some fine cell") {
            triplets.push((f, c, v));
        }
    }
    let prolongation = CsrMatrix::from_triplets(fine.num_nodes(), coarse.num_nodes(), &triplets);
    let restriction = prolongation.transpose();

    let mut injection = vec![usize::MAX; coarse.num_nodes()];
    for f in 0..prolongation.nrows() {
        let (cols, vals) = prolongation.row(f);
        if cols.len() == 1 && vals[0] == T::one() {
            injection[cols[0]] = f;
        }
    }
    if injection.contains(&usize::MAX) {
        return Err(Error::Level("coarse node without a coinciding fine node".into()));
    }
    Ok(TransferOps {
        coarse_level: coarse.level,
        degree: coarse.degree,
        prolongation,
        restriction,
        injection,
    })
}

impl<T: Real> TransferOps<T> {
    pub fn prolongation(&self) -> &CsrMatrix<T> {
        &self.prolongation
    }

    pub fn restriction(&self) -> &CsrMatrix<T> {
        &self.restriction
    }

    pub fn num_coarse(&self) -> usize {
        self.prolongation.ncols()
    }

    pub fn num_fine(&self) -> usize {
        self.prolongation.nrows()
    }

    /// Fine node coinciding with each coarse node.
    pub fn injection(&self) -> &[usize] {
        &self.injection
    }

    fn blockwise(&self, op: &CsrMatrix<T>, x: &[T], blocks: usize) -> Vec<T> {
        let (nin, nout) = (op.ncols(), op.nrows());
        assert_eq!(x.len(), blocks * nin, "transfer input length");
        let mut y = vec![T::zero(); blocks * nout];
        for b in 0..blocks {
            op.matvec(&x[b * nin..(b + 1) * nin], &mut y[b * nout..(b + 1) * nout]);
        }
        y
    }

    /// Scalar coarse → fine.
    pub fn prolongate(&self, x: &[T]) -> Vec<T> {
        self.blockwise(&self.prolongation, x, 1)
    }

    /// Scalar fine → coarse with `Pᵀ`.
    pub fn restrict(&self, y: &[T]) -> Vec<T> {
        self.blockwise(&self.restriction, y, 1)
    }

    pub fn prolongate_system(&self, x: &[T]) -> Vec<T> {
        self.blockwise(&self.prolongation, x, FIELDS)
    }

    pub fn restrict_system(&self, y: &[T]) -> Vec<T> {
        self.blockwise(&self.restriction, y, FIELDS)
    }

    /// Coarse nodal values read off the fine state (states, not residuals).
    pub fn inject_system(&self, y: &[T]) -> Vec<T> {
        let (nc, nf) = (self.num_coarse(), self.num_fine());
        assert_eq!(y.len(), FIELDS * nf, "injection input length");
        let mut x = Vec::with_capacity(FIELDS * nc);
        for b in 0..FIELDS {
            x.extend(self.injection.iter().map(|&f| y[b * nf + f]));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::GeometryConfig;

    fn setup(degree: usize) -> (MeshHierarchy<f64>, FeSpace<f64>, FeSpace<f64>) {
        let h = MeshHierarchy::new(GeometryConfig::benchmark(), 2).unwrap();
        let c = FeSpace::new(&h, 0, degree).unwrap();
        let f = FeSpace::new(&h, 1, degree).unwrap();
        (h, c, f)
    }

    #[test]
    fn constants_are_preserved() {
        for degree in [1, 2] {
            let (h, c, f) = setup(degree);
            let t = build_transfer(&h, &c, &f).unwrap();
            let y = t.prolongate(&vec![1.0; c.num_nodes()]);
            assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn linear_functions_reproduced_on_unsnapped_nodes() {
        let h = MeshHierarchy::new(GeometryConfig::<f64>::unit_square(3, 2), 2).unwrap();
        for degree in [1, 2] {
            let c = FeSpace::new(&h, 0, degree).unwrap();
            let f = FeSpace::new(&h, 1, degree).unwrap();
            let t = build_transfer(&h, &c, &f).unwrap();
            let lin = |p: &[f64; 2]| 0.3 + 2.0 * p[0] - 1.5 * p[1];
            let xc: Vec<f64> = c.node_coords().iter().map(lin).collect();
            let yf = t.prolongate(&xc);
            for (v, p) in yf.iter().zip(f.node_coords()) {
                assert!((v - lin(p)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let (h, c, f) = setup(1);
        let f2 = FeSpace::new(&h, 1, 2).unwrap();
        assert!(build_transfer(&h, &c, &f2).is_err());
        assert!(build_transfer(&h, &f, &c).is_err());
    }

    #[test]
    fn injection_reads_coinciding_nodes() {
        let (h, c, f) = setup(1);
        let t = build_transfer(&h, &c, &f).unwrap();
        for (cn, &fnode) in t.injection().iter().enumerate() {
            let (a, b) = (c.node_coords()[cn], f.node_coords()[fnode]);
            assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() < 1e-15);
        }
    }
}
