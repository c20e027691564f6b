use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings<T> {
    pub abs_tol: T,
    /// Relative to the residual of the initial guess.
    pub rel_tol: T,
    pub max_iters: usize,
    pub max_halvings: usize,
}

impl<T: Real> Default for NewtonSettings<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10),
            rel_tol: T::lit(1e-8),
            max_iters: 20,
            max_halvings: 8,
        }
    }
}

impl<T: Real> NewtonSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > T::zero() && self.rel_tol > T::zero()) || self.max_iters == 0 {
            return Err(Error::Config("Newton tolerances must be positive and max_iters ≥ 1".into()));
        }
        Ok(())
    }
}

/// Solution of one linearized system `J δ = r`.
#[derive(Clone, Debug)]
pub struct LinearStep<T> {
    pub delta: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

pub trait NewtonProblem<T> {
    fn residual(&self, x: &[T]) -> Result<Vec<T>>;
    fn solve_linearized(&self, x: &[T], r: &[T]) -> Result<LinearStep<T>>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonStats<T> {
    pub iterations: usize,
    pub linear_iterations: usize,
    /// Residual norms of the accepted iterates, starting with the initial guess.
    pub residuals: Vec<T>,
    /// Damping factor ε of each accepted step.
    pub damping: Vec<T>,
    pub linear_failures: usize,
    pub converged: bool,
    pub diverged: bool,
}

impl<T: Real> NewtonStats<T> {
    pub fn initial_residual(&self) -> T {
        self.residuals.first().copied().unwrap_or(T::zero())
    }

    pub fn final_residual(&self) -> T {
        self.residuals.last().copied().unwrap_or(T::zero())
    }
}

/// `x ← x − ε δ` with `J δ = r`; ε starts at 1 and is halved until the
/// residual norm decreases.
pub fn newton_solve<T: Real>(problem: &dyn NewtonProblem<T>, x0: Vec<T>, s: &NewtonSettings<T>) -> Result<(Vec<T>, NewtonStats<T>)> {
    s.validate()?;
    let mut x = x0;
    let mut r = problem.residual(&x)?;
    let mut rn = norm2(&r);
    let mut stats = NewtonStats {
        residuals: vec![rn],
        ..Default::default()
    };
    if !rn.is_finite() {
        stats.diverged = true;
        return Ok((x, stats));
    }
    let tol = s.abs_tol.max(s.rel_tol * rn);
    let half = T::lit(0.5);
    while rn > tol {
        if stats.iterations == s.max_iters {
            return Ok((x, stats));
        }
        let step = problem.solve_linearized(&x, &r)?;
        stats.linear_iterations += step.iterations;
        if !step.converged {
            stats.linear_failures += 1;
        }
        let mut eps = T::one();
        let mut accepted = None;
        for _ in 0..=s.max_halvings {
            let trial: Vec<T> = x.iter().zip(&step.delta).map(|(xi, di)| *xi - eps * *di).collect();
            let rt = problem.residual(&trial)?;
            let rtn = norm2(&rt);
            if rtn.is_finite() && rtn < rn {
                accepted = Some((trial, rt, rtn));
                break;
            }
            eps = eps * half;
        }
        let Some((xt, rt, rtn)) = accepted else {
            stats.diverged = true;
            return Ok((x, stats));
        };
        x = xt;
        r = rt;
        rn = rtn;
        stats.iterations += 1;
        stats.residuals.push(rn);
        stats.damping.push(eps);
    }
    stats.converged = true;
    Ok((x, stats))
}
