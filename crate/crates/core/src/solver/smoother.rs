use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::{CsrMatrix, DenseLu};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmootherKind {
    /// Incomplete LU without fill-in.
    Ilu0,
    Jacobi { damping: f64 },
    /// Multiplicative block Gauss-Seidel over small overlapping DoF blocks
    /// (one block per cell), each solved exactly.
    Vanka { damping: f64 },
    /// Dense LU of the level matrix; only sensible on small levels.
    Exact,
}

/// Level information a smoother may need besides the matrix.
#[derive(Clone, Debug, Default)]
pub struct SmootherHints {
    /// ILU(0) elimination order, `perm[new] = old`.
    pub ordering: Option<Vec<usize>>,
    /// Vanka blocks in sweep order.
    pub blocks: Option<Vec<Vec<usize>>>,
}

impl SmootherKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ilu0" => Some(Self::Ilu0),
            "jacobi" => Some(Self::Jacobi { damping: 2.0 / 3.0 }),
            "vanka" => Some(Self::Vanka { damping: 1.0 }),
            "exact" => Some(Self::Exact),
            _ => None,
        }
    }
}

/// ILU(0) factors stored on the pattern of the (permuted) matrix.
#[derive(Clone, Debug)]
pub struct Ilu0<T> {
    lu: CsrMatrix<T>,
    diag: Vec<usize>,
    perm: Option<Vec<usize>>,
    pub shifted_pivots: usize,
}

impl<T: Real> Ilu0<T> {
    /// Factorizes `A[perm, perm]`; `perm[new] = old`.
    pub fn new(a: &CsrMatrix<T>, perm: Option<Vec<usize>>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim("ILU(0) of non-square matrix", a.nrows(), a.ncols()));
        }
        let mut lu = match &perm {
            Some(p) => a.permute_symmetric(p),
            None => a.clone(),
        };
        let n = lu.nrows();
        let row_ptr = lu.row_ptr().to_vec();
        let cols = lu.col_idx().to_vec();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::Singular(format!("ILU(0): row {i} has no diagonal entry")));
            }
        }
        let vals = lu.values_mut();
        let mut pos = vec![usize::MAX; n];
        let mut shifted = 0;
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[cols[k]] = k;
            }
            for k in row_ptr[i]..diag[i] {
                let kc = cols[k];
                let f = vals[k] / vals[diag[kc]];
                vals[k] = f;
                for m in diag[kc] + 1..row_ptr[kc + 1] {
                    let p = pos[cols[m]];
                    if p != usize::MAX {
                        vals[p] -= f * vals[m];
                    }
                }
            }
            let scale = (row_ptr[i]..row_ptr[i + 1]).map(|k| vals[k].abs()).fold(T::zero(), T::max);
            let d = vals[diag[i]];
            let floor = T::lit(1e-12) * scale.max(T::min_positive_value());
            if d.abs() <= floor {
                let shift = T::lit(1e-8) * scale.max(T::one());
                vals[diag[i]] = if d < T::zero() { d - shift } else { d + shift };
                shifted += 1;
            }
            if !vals[diag[i]].is_finite() {
                return Err(Error::NonFinite(format!("ILU(0) pivot {i}")));
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[cols[k]] = usize::MAX;
            }
        }
        if shifted > 0 {
            log::warn!("ILU(0): shifted {shifted} near-zero pivots");
        }
        Ok(Self { lu, diag, perm, shifted_pivots: shifted })
    }

    /// `(LU)⁻¹ r`.
    pub fn solve(&self, r: &[T]) -> Vec<T> {
        let n = self.diag.len();
        let mut y: Vec<T> = match &self.perm {
            Some(p) => p.iter().map(|&o| r[o]).collect(),
            None => r.to_vec(),
        };
        let (rp, ci, v) = (self.lu.row_ptr(), self.lu.col_idx(), self.lu.values());
        for i in 0..n {
            let mut s = y[i];
            for k in rp[i]..self.diag[i] {
                s -= v[k] * y[ci[k]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in self.diag[i] + 1..rp[i + 1] {
                s -= v[k] * y[ci[k]];
            }
            y[i] = s / v[self.diag[i]];
        }
        match &self.perm {
            Some(p) => {
                let mut out = vec![T::zero(); n];
                for (new, &old) in p.iter().enumerate() {
                    out[old] = y[new];
                }
                out
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
enum Prepared<T> {
    Ilu(Ilu0<T>),
    Jacobi { inv_diag: Vec<T>, damping: T },
    Vanka {
        blocks: Vec<Vec<usize>>,
        lus: Vec<DenseLu<T>>,
        damping: T,
    },
    Exact(DenseLu<T>),
}

/// Smoother prepared for one level matrix.
#[derive(Clone, Debug)]
pub struct Smoother<T> {
    prepared: Prepared<T>,
}

impl<T: Real> Smoother<T> {
    pub fn new(kind: SmootherKind, a: &CsrMatrix<T>, hints: SmootherHints) -> Result<Self> {
        let prepared = match kind {
            SmootherKind::Ilu0 => Prepared::Ilu(Ilu0::new(a, hints.ordering)?),
            SmootherKind::Vanka { damping } => {
                let blocks = hints
                    .blocks
                    .ok_or_else(|| Error::Config("Vanka smoother needs DoF blocks".into()))?;
                let mut lus = Vec::with_capacity(blocks.len());
                for b in &blocks {
                    let m = b.len();
                    let mut dense = vec![T::zero(); m * m];
                    for (i, &gi) in b.iter().enumerate() {
                        for (j, &gj) in b.iter().enumerate() {
                            dense[i * m + j] = a.get(gi, gj);
                        }
                    }
                    lus.push(DenseLu::factor(m, dense)?);
                }
                Prepared::Vanka {
                    blocks,
                    lus,
                    damping: T::lit(damping),
                }
            }
            SmootherKind::Jacobi { damping } => {
                let diag = a.diagonal();
                if let Some(i) = diag.iter().position(|d| *d == T::zero()) {
                    return Err(Error::Singular(format!("Jacobi smoother: zero diagonal in row {i}")));
                }
                Prepared::Jacobi {
                    inv_diag: diag.iter().map(|d| T::one() / *d).collect(),
                    damping: T::lit(damping),
                }
            }
            SmootherKind::Exact => Prepared::Exact(DenseLu::from_csr(a)?),
        };
        Ok(Self { prepared })
    }

    fn correction(&self, r: &[T]) -> Vec<T> {
        match &self.prepared {
            Prepared::Ilu(ilu) => ilu.solve(r),
            Prepared::Jacobi { inv_diag, damping } => r.iter().zip(inv_diag).map(|(a, d)| *damping * *a * *d).collect(),
            Prepared::Exact(lu) => lu.solve(r),
            Prepared::Vanka { .. } => unreachable!("Vanka sweeps update in place"),
        }
    }

    fn vanka_sweep(&self, a: &CsrMatrix<T>, b: &[T], x: &mut [T]) {
        let Prepared::Vanka { blocks, lus, damping } = &self.prepared else {
            return;
        };
        let mut r = Vec::new();
        for (blk, lu) in blocks.iter().zip(lus) {
            r.clear();
            for &i in blk {
                let (cols, vals) = a.row(i);
                let mut s = b[i];
                for (&j, &v) in cols.iter().zip(vals) {
                    s -= v * x[j];
                }
                r.push(s);
            }
            let d = lu.solve(&r);
            for (&i, di) in blk.iter().zip(&d) {
                x[i] += *damping * *di;
            }
        }
    }
}

/// `sweeps` smoothing steps; each is `x ← x + M⁻¹(b − A x)` or, for Vanka,
/// one pass over all blocks.
pub fn smooth<T: Real>(smoother: &Smoother<T>, a: &CsrMatrix<T>, b: &[T], x: &mut [T], sweeps: usize) {
    if matches!(smoother.prepared, Prepared::Vanka { .. }) {
        for _ in 0..sweeps {
            smoother.vanka_sweep(a, b, x);
        }
        return;
    }
    let mut r = vec![T::zero(); b.len()];
    for _ in 0..sweeps {
        a.matvec(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let c = smoother.correction(&r);
        for (xi, ci) in x.iter_mut().zip(&c) {
            *xi += *ci;
        }
    }
}
