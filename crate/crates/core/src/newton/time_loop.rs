use std::cell::Cell;
use std::io::Write;
use std::time::Instant;

use super::driver::{newton_solve, LinearStep, NewtonProblem, NewtonSettings, NewtonStats};
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::fem::{FlowState, NonlinearSystem, ProblemParams, TimeScheme, Trajectory};
use crate::scalar::Real;
use crate::solver::{gmres_solve, CycleSettings, KrylovSettings, MultigridContext};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings<T> {
    pub newton: NewtonSettings<T>,
    pub krylov: KrylovSettings<T>,
    pub cycle: CycleSettings,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            newton: NewtonSettings::default(),
            krylov: KrylovSettings::default(),
            cycle: CycleSettings::default(),
        }
    }
}

/// The discrete flow problem of one step on `level`, linearized with
/// multigrid-preconditioned GMRES over levels `0..=level`.
pub struct FlowNewton<'a, T: Real> {
    pub disc: &'a Discretization<T>,
    pub level: usize,
    pub system: &'a NonlinearSystem<'a, T>,
    pub settings: &'a SolverSettings<T>,
    pub times: Cell<PhaseTimes>,
}

/// Wall time split of a Newton solve, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    /// Residual and fine Jacobian assembly.
    pub assembly: f64,
    /// Multigrid setup and GMRES.
    pub linear: f64,
}

impl<'a, T: Real> FlowNewton<'a, T> {
    pub fn new(disc: &'a Discretization<T>, level: usize, system: &'a NonlinearSystem<'a, T>, settings: &'a SolverSettings<T>) -> Self {
        Self {
            disc,
            level,
            system,
            settings,
            times: Cell::new(PhaseTimes::default()),
        }
    }

    fn charge(&self, start: Instant, linear: bool) {
        let mut t = self.times.get();
        let dt = start.elapsed().as_secs_f64();
        if linear {
            t.linear += dt;
        } else {
            t.assembly += dt;
        }
        self.times.set(t);
    }
}

impl<T: Real> NewtonProblem<T> for FlowNewton<'_, T> {
    fn residual(&self, x: &[T]) -> Result<Vec<T>> {
        let start = Instant::now();
        let r = self.system.residual(x);
        self.charge(start, false);
        r
    }

    fn solve_linearized(&self, x: &[T], r: &[T]) -> Result<LinearStep<T>> {
        let start = Instant::now();
        let jac = self.system.jacobian(x)?;
        self.charge(start, false);
        let start = Instant::now();
        let mg = MultigridContext::for_system(self.disc, self.system.params, self.level, x, jac, self.settings.cycle)?;
        let out = gmres_solve(mg.matrix(mg.top_level()), r, &mg, &self.settings.krylov)?;
        self.charge(start, true);
        Ok(LinearStep {
            delta: out.x,
            iterations: out.iterations,
            converged: out.converged,
        })
    }
}

/// One step from `prev` on `level`. The right-hand side defaults to the
/// scheme's own; the initial guess is `prev` with the new boundary values.
pub fn solve_step<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    level: usize,
    prev: &FlowState<T>,
    rhs: Option<Vec<T>>,
    settings: &SolverSettings<T>,
) -> Result<(FlowState<T>, NewtonStats<T>)> {
    solve_step_timed(disc, params, level, prev, rhs, settings).map(|(x, s, _)| (x, s))
}

/// [`solve_step`] that also reports where the time went.
pub fn solve_step_timed<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    level: usize,
    prev: &FlowState<T>,
    rhs: Option<Vec<T>>,
    settings: &SolverSettings<T>,
) -> Result<(FlowState<T>, NewtonStats<T>, PhaseTimes)> {
    let space = disc.space(level)?;
    let time = match params.scheme {
        TimeScheme::CrankNicolson => prev.time + params.time_step,
        TimeScheme::Stationary => prev.time,
    };
    let system = match (rhs, params.scheme) {
        (Some(rhs), _) => NonlinearSystem::with_rhs(space, params, time, rhs)?,
        (None, TimeScheme::CrankNicolson) => NonlinearSystem::crank_nicolson(space, params, prev)?,
        (None, TimeScheme::Stationary) => NonlinearSystem::stationary(space, params, time)?,
    };
    if prev.values.len() != space.num_dofs() {
        return Err(Error::dim("previous state", space.num_dofs(), prev.values.len()));
    }
    let mut x0 = prev.values.clone();
    system.impose_dirichlet(&mut x0);
    let problem = FlowNewton::new(disc, level, &system, settings);
    let (values, stats) = newton_solve(&problem, x0, &settings.newton)?;
    Ok((FlowState { level, time, values }, stats, problem.times.get()))
}

/// Per-step record for the run log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub time: f64,
    pub newton_iters: usize,
    pub gmres_iters: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub wall_seconds: f64,
    pub prediction_active: bool,
    pub converged: bool,
}

impl StepStats {
    pub fn from_newton<T: Real>(step: usize, time: T, s: &NewtonStats<T>, wall_seconds: f64, prediction_active: bool) -> Self {
        Self {
            step,
            time: time.to_f64_lossy(),
            newton_iters: s.iterations,
            gmres_iters: s.linear_iterations,
            initial_residual: s.initial_residual().to_f64_lossy(),
            final_residual: s.final_residual().to_f64_lossy(),
            wall_seconds,
            prediction_active,
            converged: s.converged,
        }
    }
}

pub fn write_step_log<W: Write>(mut w: W, stats: &[StepStats]) -> Result<()> {
    writeln!(w, "step,t,newton_iters,gmres_iters,initial_residual,final_residual,wall_seconds,prediction_active,converged")?;
    for s in stats {
        writeln!(
            w,
            "{},{},{},{},{:e},{:e},{},{},{}",
            s.step,
            s.time,
            s.newton_iters,
            s.gmres_iters,
            s.initial_residual,
            s.final_residual,
            s.wall_seconds,
            u8::from(s.prediction_active),
            u8::from(s.converged)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TimeLoopState<T> {
    /// Index of the last completed step; `state` is `x_step`.
    pub step: usize,
    pub state: FlowState<T>,
    pub previous: Option<FlowState<T>>,
    pub stats: Vec<StepStats>,
}

impl<T: Real> TimeLoopState<T> {
    pub fn new(initial: FlowState<T>) -> Self {
        Self {
            step: 0,
            state: initial,
            previous: None,
            stats: Vec::new(),
        }
    }

    pub fn time(&self) -> T {
        self.state.time
    }

    /// Records a completed step.
    pub fn push(&mut self, next: FlowState<T>, stats: StepStats) {
        self.step += 1;
        self.previous = Some(std::mem::replace(&mut self.state, next));
        self.stats.push(stats);
    }
}

/// Plain (uncorrected) step on `level`. A diverged Newton iteration is an
/// error carrying the step index; slow convergence is only logged.
pub fn advance_time_step<T: Real>(
    lp: &mut TimeLoopState<T>,
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    level: usize,
    settings: &SolverSettings<T>,
) -> Result<()> {
    let step = lp.step + 1;
    let start = Instant::now();
    let (next, stats) = solve_step(disc, params, level, &lp.state, None, settings).map_err(|e| e.at_step(step))?;
    if stats.diverged || !next.is_finite() {
        return Err(Error::NonFinite(format!("Newton diverged on level {level}")).at_step(step));
    }
    if !stats.converged {
        log::warn!("step {step}: Newton stopped at residual {:e}", stats.final_residual().to_f64_lossy());
    }
    let time = next.time;
    lp.push(next, StepStats::from_newton(step, time, &stats, start.elapsed().as_secs_f64(), false));
    Ok(())
}

/// Plain time loop of `steps` steps on `level` from rest, recording every
/// `stride`-th state (and the initial one).
pub fn run_plain<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    level: usize,
    steps: usize,
    stride: usize,
    settings: &SolverSettings<T>,
) -> Result<(Trajectory<T>, Vec<StepStats>)> {
    let space = disc.space(level)?;
    let mut lp = TimeLoopState::new(FlowState::zeros(space, T::zero()));
    let mut traj = Trajectory::new(level, disc.degree);
    traj.push(0, &lp.state)?;
    for _ in 0..steps {
        advance_time_step(&mut lp, disc, params, level, settings)?;
        if lp.step % stride.max(1) == 0 {
            traj.push(lp.step, &lp.state)?;
        }
        if lp.step % 50 == 0 {
            log::info!("level {level} step {} t={:.3}", lp.step, lp.time().to_f64_lossy());
        }
    }
    Ok((traj, lp.stats))
}
