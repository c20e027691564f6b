//! Damped Newton iteration and the Crank-Nicolson time loop.

mod driver;
mod time_loop;

pub use driver::{newton_solve, LinearStep, NewtonProblem, NewtonSettings, NewtonStats};
pub use time_loop::{
    advance_time_step, run_plain, solve_step, solve_step_timed, write_step_log, FlowNewton, PhaseTimes, SolverSettings,
    StepStats, TimeLoopState,
};
