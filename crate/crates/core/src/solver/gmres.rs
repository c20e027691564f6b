use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};
use crate::sparse::CsrMatrix;

/// Restarted GMRES parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovSettings<T> {
    pub rel_tol: T,
    pub max_iters: usize,
    pub restart: usize,
}

impl<T: Real> Default for KrylovSettings<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-4),
            max_iters: 100,
            restart: 30,
        }
    }
}

impl<T: Real> KrylovSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero() && self.rel_tol < T::one()) {
            return Err(Error::Config("GMRES tolerance must lie in (0, 1)".into()));
        }
        if self.restart == 0 || self.max_iters == 0 {
            return Err(Error::Config("GMRES restart and iteration limit must be positive".into()));
        }
        Ok(())
    }
}

pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
}

impl<T: Real> LinearOperator<T> for CsrMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matvec(x, y)
    }
}

/// Approximate inverse `M⁻¹`; must be a fixed linear map for one solve.
pub trait Preconditioner<T> {
    fn apply(&self, r: &[T]) -> Result<Vec<T>>;
}

pub struct IdentityPreconditioner;

impl<T: Real> Preconditioner<T> for IdentityPreconditioner {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        Ok(r.to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Residual norms `‖b − A x_j‖`, starting with `‖b‖`.
    pub history: Vec<T>,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES from a zero initial guess.
pub fn gmres_solve<T: Real>(
    a: &dyn LinearOperator<T>,
    b: &[T],
    precond: &dyn Preconditioner<T>,
    s: &KrylovSettings<T>,
) -> Result<GmresOutcome<T>> {
    s.validate()?;
    let n = a.dim();
    if b.len() != n {
        return Err(Error::dim("GMRES right-hand side", n, b.len()));
    }
    let bnorm = norm2(b);
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("GMRES right-hand side".into()));
    }
    let mut x = vec![T::zero(); n];
    let mut history = vec![bnorm];
    if bnorm == T::zero() {
        return Ok(GmresOutcome { x, iterations: 0, history, converged: true });
    }
    let target = s.rel_tol * bnorm;
    let m = s.restart;
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut ax = vec![T::zero(); n];
    while iterations < s.max_iters {
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        let mut zs: Vec<Vec<T>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|&v| v / beta).collect());
        // Columns of the Hessenberg matrix after the Givens rotations.
        let mut h: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<T> = Vec::with_capacity(m);
        let mut sn: Vec<T> = Vec::with_capacity(m);
        let mut g = vec![beta];
        let mut done = false;
        while zs.len() < m && iterations < s.max_iters {
            let j = zs.len();
            let z = precond.apply(&basis[j])?;
            let mut w = vec![T::zero(); n];
            a.apply(&z, &mut w);
            zs.push(z);
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = dot(&w, v);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * *vi;
                }
                col.push(hij);
            }
            let hnext = norm2(&w);
            if !hnext.is_finite() {
                return Err(Error::NonFinite("GMRES Arnoldi vector".into()));
            }
            col.push(hnext);
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
            if denom == T::zero() {
                return Err(Error::Breakdown("singular Hessenberg column".into()));
            }
            let (c, sv) = (col[j] / denom, col[j + 1] / denom);
            col[j] = denom;
            col[j + 1] = T::zero();
            cs.push(c);
            sn.push(sv);
            let gj = g[j];
            g[j] = c * gj;
            g.push(-sv * gj);
            h.push(col);
            iterations += 1;
            let res = g[j + 1].abs();
            history.push(res);
            let happy = hnext <= T::epsilon() * bnorm;
            if res <= target || happy {
                done = true;
                break;
            }
            basis.push(w.iter().map(|&v| v / hnext).collect());
        }
        // Back substitution for the least-squares coefficients.
        let k = h.len();
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut sum = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                sum -= h[jj][i] * *yj;
            }
            y[i] = sum / h[i][i];
        }
        for (yi, z) in y.iter().zip(&zs) {
            for (xv, zv) in x.iter_mut().zip(z) {
                *xv += *yi * *zv;
            }
        }
        a.apply(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        beta = norm2(&r);
        if !beta.is_finite() {
            return Err(Error::NonFinite("GMRES iterate".into()));
        }
        if done || beta <= target {
            let converged = beta <= target || history.last().is_some_and(|&v| v <= target);
            return Ok(GmresOutcome { x, iterations, history, converged });
        }
    }
    log::debug!("GMRES stopped after {iterations} iterations at residual {:e}", beta.to_f64_lossy());
    Ok(GmresOutcome { x, iterations, history, converged: false })
}
