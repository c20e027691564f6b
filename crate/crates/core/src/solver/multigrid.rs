use super::gmres::Preconditioner;
use super::smoother::{smooth, Smoother, SmootherHints, SmootherKind};
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::fem::{apply_dirichlet_matrix, assemble_jacobian, FeSpace, ProblemParams, FIELDS};
use crate::scalar::Real;
use crate::sparse::{CsrMatrix, DenseLu};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoarseOperator {
    /// Jacobian re-assembled at the injected coarse state.
    Reassemble,
    /// `R A P` with identity rows at constrained DoFs.
    Galerkin,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSettings {
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    pub smoother: SmootherKind,
    pub coarse_operator: CoarseOperator,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self {
            pre_sweeps: 2,
            post_sweeps: 2,
            smoother: SmootherKind::Ilu0,
            coarse_operator: CoarseOperator::Reassemble,
        }
    }
}

#[derive(Clone, Debug)]
struct MgLevel<T> {
    matrix: CsrMatrix<T>,
    mask: Vec<bool>,
    smoother: Option<Smoother<T>>,
}

/// Level operators, smoothers and transfers for one V-cycle preconditioner.
#[derive(Clone, Debug)]
pub struct MultigridContext<T> {
    levels: Vec<MgLevel<T>>,
    prolongations: Vec<CsrMatrix<T>>,
    restrictions: Vec<CsrMatrix<T>>,
    coarse: DenseLu<T>,
    settings: CycleSettings,
}

/// Reorders pressure-first system DoFs node by node as (v₁, v₂, p).
pub fn node_interleaving(dim: usize) -> Vec<usize> {
    let n = dim / FIELDS;
    interleave_nodes(n, 0..n)
}

fn interleave_nodes(n: usize, nodes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut perm = Vec::with_capacity(FIELDS * n);
    for node in nodes {
        perm.extend([n + node, 2 * n + node, node]);
    }
    perm
}

/// Smoother ordering for a system on `space`: nodes sorted streamwise
/// (by x, then y), each node's DoFs interleaved.
pub fn streamwise_ordering<T: Real>(space: &FeSpace<T>) -> Vec<usize> {
    let xy = space.node_coords();
    let mut nodes: Vec<usize> = (0..space.num_nodes()).collect();
    nodes.sort_by(|&a, &b| {
        xy[a][0]
            .partial_cmp(&xy[b][0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(xy[a][1].partial_cmp(&xy[b][1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    interleave_nodes(space.num_nodes(), nodes.into_iter())
}

/// Cells sorted streamwise by centroid, each as its pressure-first system DoFs.
pub fn cell_blocks<T: Real>(space: &FeSpace<T>) -> Vec<Vec<usize>> {
    let n = space.num_nodes();
    let centroid = |c: usize| {
        let x = space.cell_coords(c);
        let q = T::lit(0.25);
        [q * (x[0][0] + x[1][0] + x[2][0] + x[3][0]), q * (x[0][1] + x[1][1] + x[2][1] + x[3][1])]
    };
    let mut cells: Vec<(usize, [T; 2])> = (0..space.num_cells()).map(|c| (c, centroid(c))).collect();
    cells.sort_by(|a, b| {
        a.1[0]
            .partial_cmp(&b.1[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1[1].partial_cmp(&b.1[1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    cells
        .into_iter()
        .map(|(c, _)| {
            let nodes = space.cell_nodes(c);
            (0..FIELDS).flat_map(|f| nodes.iter().map(move |&v| f * n + v)).collect()
        })
        .collect()
}

fn smoother_hints<T: Real>(space: &FeSpace<T>, kind: SmootherKind) -> SmootherHints {
    match kind {
        SmootherKind::Ilu0 => SmootherHints {
            ordering: Some(streamwise_ordering(space)),
            blocks: None,
        },
        SmootherKind::Vanka { .. } => SmootherHints {
            ordering: None,
            blocks: Some(cell_blocks(space)),
        },
        _ => SmootherHints::default(),
    }
}

impl<T: Real> MultigridContext<T> {
    /// `matrices[l]` is the operator on level `l`, `prolongations[l]` maps
    /// level `l` to `l + 1`; `hints[l]` carries the smoother ordering or
    /// blocks of level `l`.
    pub fn from_levels(
        matrices: Vec<CsrMatrix<T>>,
        masks: Vec<Vec<bool>>,
        prolongations: Vec<CsrMatrix<T>>,
        hints: Vec<SmootherHints>,
        settings: CycleSettings,
    ) -> Result<Self> {
        if matrices.is_empty()
            || masks.len() != matrices.len()
            || hints.len() != matrices.len()
            || prolongations.len() + 1 != matrices.len()
        {
            return Err(Error::Level("multigrid needs one matrix and mask per level and one transfer between levels".into()));
        }
        for (l, p) in prolongations.iter().enumerate() {
            if p.ncols() != matrices[l].nrows() || p.nrows() != matrices[l + 1].nrows() {
                return Err(Error::dim("multigrid prolongation", matrices[l + 1].nrows(), p.nrows()));
            }
        }
        let coarse = DenseLu::from_csr(&matrices[0])?;
        let mut levels = Vec::with_capacity(matrices.len());
        for (l, ((matrix, mask), hint)) in matrices.into_iter().zip(masks).zip(hints).enumerate() {
            if mask.len() != matrix.nrows() {
                return Err(Error::dim("multigrid Dirichlet mask", matrix.nrows(), mask.len()));
            }
            let smoother = if l == 0 {
                None
            } else {
                Some(Smoother::new(settings.smoother, &matrix, hint)?)
            };
            levels.push(MgLevel { matrix, mask, smoother });
        }
        let restrictions = prolongations.iter().map(|p| p.transpose()).collect();
        Ok(Self {
            levels,
            prolongations,
            restrictions,
            coarse,
            settings,
        })
    }

    /// Preconditioner for the Jacobian `top_matrix` (constraints applied) of
    /// level `top` linearized at `x_top`, descending to
    /// [`Discretization::coarsest_mg_level`].
    pub fn for_system(
        disc: &Discretization<T>,
        params: &ProblemParams<T>,
        top: usize,
        x_top: &[T],
        top_matrix: CsrMatrix<T>,
        settings: CycleSettings,
    ) -> Result<Self> {
        let space = disc.space(top)?;
        if x_top.len() != space.num_dofs() || top_matrix.nrows() != space.num_dofs() {
            return Err(Error::dim("multigrid top level", space.num_dofs(), top_matrix.nrows()));
        }
        let mut matrices = vec![top_matrix];
        let mut masks = vec![space.dirichlet_mask()];
        let mut hints = vec![smoother_hints(space, settings.smoother)];
        let mut prolongations = Vec::with_capacity(top);
        let mut x = x_top.to_vec();
        let bottom = disc.coarsest_mg_level().min(top);
        for l in (bottom..top).rev() {
            let coarse_space = disc.space(l)?;
            let mask = coarse_space.dirichlet_mask();
            let p = disc.system_prolongation(l)?;
            let mut a = match settings.coarse_operator {
                CoarseOperator::Reassemble => {
                    x = disc.transfer(l)?.inject_system(&x);
                    assemble_jacobian(coarse_space, params, &x)?
                }
                CoarseOperator::Galerkin => {
                    let fine = matrices.last().expect("at least the top level");
                    p.transpose().matmul(&fine.matmul(p))
                }
            };
            apply_dirichlet_matrix(&mut a, &mask);
            matrices.push(a);
            masks.push(mask);
            hints.push(smoother_hints(coarse_space, settings.smoother));
            prolongations.push(p.clone());
        }
        matrices.reverse();
        masks.reverse();
        prolongations.reverse();
        hints.reverse();
        Self::from_levels(matrices, masks, prolongations, hints, settings)
    }

    /// Index of the finest level within this context (the coarsest is 0).
    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn matrix(&self, level: usize) -> &CsrMatrix<T> {
        &self.levels[level].matrix
    }

    pub fn settings(&self) -> &CycleSettings {
        &self.settings
    }

    /// One V-cycle on level `level` from a zero initial guess.
    pub fn vcycle_apply(&self, b: &[T], level: usize) -> Result<Vec<T>> {
        if level > self.top_level() {
            return Err(Error::Level(format!("V-cycle on level {level}, top is {}", self.top_level())));
        }
        let lev = &self.levels[level];
        if b.len() != lev.matrix.nrows() {
            return Err(Error::dim("V-cycle right-hand side", lev.matrix.nrows(), b.len()));
        }
        if level == 0 {
            return Ok(self.coarse.solve(b));
        }
        let smoother = lev.smoother.as_ref().expect("smoother on every non-coarsest level");
        let mut x = vec![T::zero(); b.len()];
        smooth(smoother, &lev.matrix, b, &mut x, self.settings.pre_sweeps);
        let mut r = lev.matrix.mul_vec(&x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let mut rc = self.restrictions[level - 1].mul_vec(&r);
        for (v, &m) in rc.iter_mut().zip(&self.levels[level - 1].mask) {
            if m {
                *v = T::zero();
            }
        }
        let ec = self.vcycle_apply(&rc, level - 1)?;
        let e = self.prolongations[level - 1].mul_vec(&ec);
        for ((xi, ei), &m) in x.iter_mut().zip(&e).zip(&lev.mask) {
            if !m {
                *xi += *ei;
            }
        }
        smooth(smoother, &lev.matrix, b, &mut x, self.settings.post_sweeps);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("V-cycle on level {level}")));
        }
        Ok(x)
    }
}

impl<T: Real> Preconditioner<T> for MultigridContext<T> {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        self.vcycle_apply(r, self.top_level())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::GeometryConfig;
    use crate::scalar::norm2;

    /// Q1 Laplacian with identity rows on the boundary.
    fn laplacian(space: &FeSpace<f64>) -> (CsrMatrix<f64>, Vec<bool>) {
        let mut t = Vec::new();
        for c in 0..space.num_cells() {
            let nodes = space.cell_nodes(c);
            for q in 0..space.quadrature().len() {
                let g = space.grads(c, q);
                let w = space.jxw(c, q);
                for a in 0..nodes.len() {
                    for b in 0..nodes.len() {
                        t.push((nodes[a], nodes[b], w * (g[a][0] * g[b][0] + g[a][1] * g[b][1])));
                    }
                }
            }
        }
        let n = space.num_nodes();
        let mut a = CsrMatrix::from_triplets(n, n, &t);
        let mask: Vec<bool> = (0..n).map(|i| space.node_tag(i).is_some()).collect();
        apply_dirichlet_matrix(&mut a, &mask);
        (a, mask)
    }

    fn poisson_context(levels: usize, smoother: SmootherKind) -> MultigridContext<f64> {
        let disc = Discretization::new(GeometryConfig::unit_square(4, 4), levels - 1, 1).unwrap();
        let mut mats = Vec::new();
        let mut masks = Vec::new();
        for l in 0..levels {
            let (a, m) = laplacian(disc.space(l).unwrap());
            mats.push(a);
            masks.push(m);
        }
        let ps = (0..levels - 1).map(|l| disc.transfer(l).unwrap().prolongation().clone()).collect();
        let settings = CycleSettings { smoother, ..CycleSettings::default() };
        MultigridContext::from_levels(mats, masks, ps, vec![SmootherHints::default(); levels], settings).unwrap()
    }

    #[test]
    fn single_level_is_direct_solve() {
        let ctx = poisson_context(1, SmootherKind::Ilu0);
        let n = ctx.matrix(0).nrows();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = ctx.vcycle_apply(&b, 0).unwrap();
        let r: Vec<f64> = ctx.matrix(0).mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn zero_rhs_maps_to_zero() {
        let ctx = poisson_context(2, SmootherKind::Ilu0);
        let n = ctx.matrix(1).nrows();
        assert_eq!(ctx.vcycle_apply(&vec![0.0; n], 1).unwrap(), vec![0.0; n]);
    }

    #[test]
    fn poisson_error_contracts_below_half() {
        for smoother in [SmootherKind::Ilu0, SmootherKind::Jacobi { damping: 2.0 / 3.0 }] {
            let ctx = poisson_context(3, smoother);
            let top = ctx.top_level();
            let a = ctx.matrix(top);
            let n = a.nrows();
            let b: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
            let exact = DenseLu::from_csr(a).unwrap().solve(&b);
            let mut x = vec![0.0; n];
            let mut err = norm2(&exact);
            for _ in 0..4 {
                let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, bi)| bi - ax).collect();
                let c = ctx.vcycle_apply(&r, top).unwrap();
                x.iter_mut().zip(&c).for_each(|(xi, ci)| *xi += ci);
                let e = norm2(&x.iter().zip(&exact).map(|(p, q)| p - q).collect::<Vec<_>>());
                assert!(e / err < 0.5, "{smoother:?}: contraction {}", e / err);
                err = e;
            }
        }
    }

    #[test]
    fn vcycle_is_deterministic_and_linear() {
        let ctx = poisson_context(2, SmootherKind::Ilu0);
        let n = ctx.matrix(1).nrows();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b2: Vec<f64> = b.iter().map(|v| 3.0 * v).collect();
        let x = ctx.vcycle_apply(&b, 1).unwrap();
        assert_eq!(x, ctx.vcycle_apply(&b, 1).unwrap());
        let x2 = ctx.vcycle_apply(&b2, 1).unwrap();
        for (p, q) in x.iter().zip(&x2) {
            assert!((3.0 * p - q).abs() < 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn interleaving_is_a_permutation() {
        let mut p = node_interleaving(12);
        assert_eq!(&p[..3], &[4, 8, 0]);
        p.sort_unstable();
        assert_eq!(p, (0..12).collect::<Vec<_>>());
    }
}
