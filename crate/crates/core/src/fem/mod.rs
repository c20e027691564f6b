//! Equal-order finite element discretization of the incompressible
//! Navier-Stokes equations with Crank-Nicolson time stepping and local
//! projection pressure stabilization.

mod assembly;
mod reference;
mod snapshot;
mod space;

pub use assembly::{
    apply_dirichlet_matrix, apply_dirichlet_vector, assemble_jacobian, assemble_operator, assemble_residual,
    build_rhs_next, dirichlet_values, NonlinearSystem,
};
pub use reference::{bilinear_map, gauss_1d, CellMap, Quadrature, ReferenceElement};
pub use snapshot::Trajectory;
pub use space::{FeSpace, LpsGroup, FIELDS};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::BoundaryTag;
use crate::scalar::Real;

pub type VectorField<T> = Arc<dyn Fn(T, [T; 2]) -> [T; 2] + Send + Sync>;
pub type BoundaryData<T> = Arc<dyn Fn(T, [T; 2], BoundaryTag) -> [T; 2] + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeScheme {
    CrankNicolson,
    /// Drops the time derivative; used for steady manufactured problems.
    Stationary,
}

/// Parabolic inflow `v_max · 4y(H−y)/H²` switched on smoothly over
/// `ramp_time` seconds (0 for an impulsive start).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InflowProfile<T> {
    pub max_velocity: T,
    pub channel_height: T,
    pub ramp_time: T,
}

impl<T: Real> InflowProfile<T> {
    pub fn eval(&self, t: T, y: T) -> T {
        let h = self.channel_height;
        let ramp = if self.ramp_time > T::zero() && t < self.ramp_time {
            T::lit(0.5) * (T::one() - (T::PI() * t / self.ramp_time).cos())
        } else {
            T::one()
        };
        ramp * self.max_velocity * T::lit(4.0) * y * (h - y) / (h * h)
    }
}

#[derive(Clone)]
pub struct ProblemParams<T> {
    /// The viscous term is scaled by `1 / reynolds`.
    pub reynolds: T,
    pub time_step: T,
    /// LPS weight `α_T = α_0 · Re · h_T²`.
    pub lps_alpha0: T,
    pub scheme: TimeScheme,
    pub body_force: Option<VectorField<T>>,
    pub dirichlet: BoundaryData<T>,
}

impl<T: Real> fmt::Debug for ProblemParams<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemParams")
            .field("reynolds", &self.reynolds)
            .field("time_step", &self.time_step)
            .field("lps_alpha0", &self.lps_alpha0)
            .field("scheme", &self.scheme)
            .field("body_force", &self.body_force.is_some())
            .finish()
    }
}

impl<T: Real> ProblemParams<T> {
    /// Channel flow: parabolic inflow, no-slip walls and obstacle, zero force.
    pub fn channel(reynolds: T, time_step: T, inflow: InflowProfile<T>) -> Self {
        Self {
            reynolds,
            time_step,
            lps_alpha0: T::lit(0.05),
            scheme: TimeScheme::CrankNicolson,
            body_force: None,
            dirichlet: Arc::new(move |t, x, tag| match tag {
                BoundaryTag::Inflow => [inflow.eval(t, x[1]), T::zero()],
                _ => [T::zero(); 2],
            }),
        }
    }

    pub fn viscosity(&self) -> T {
        T::one() / self.reynolds
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reynolds > T::zero()) {
            return Err(Error::Config("Reynolds number must be positive".into()));
        }
        if !(self.time_step > T::zero()) {
            return Err(Error::Config("time step must be positive".into()));
        }
        if !(self.lps_alpha0 >= T::zero()) {
            return Err(Error::Config("LPS constant must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn force(&self, t: T, x: [T; 2]) -> [T; 2] {
        self.body_force.as_ref().map_or([T::zero(); 2], |f| f(t, x))
    }
}

/// Coefficient vector `x = (p, v¹, v²)` on one level at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState<T> {
    pub level: usize,
    pub time: T,
    pub values: Vec<T>,
}

impl<T: Real> FlowState<T> {
    pub fn zeros(space: &FeSpace<T>, time: T) -> Self {
        Self {
            level: space.level,
            time,
            values: vec![T::zero(); space.num_dofs()],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / FIELDS
    }

    pub fn pressure(&self) -> &[T] {
        &self.values[..self.num_nodes()]
    }

    pub fn velocity(&self) -> &[T] {
        &self.values[self.num_nodes()..]
    }

    pub fn velocity_mut(&mut self) -> &mut [T] {
        let n = self.num_nodes();
        &mut self.values[n..]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_space(&self, space: &FeSpace<T>) -> Result<()> {
        if self.level != space.level {
            return Err(Error::Level(format!("state on level {} used with space on level {}", self.level, space.level)));
        }
        if self.values.len() != space.num_dofs() {
            return Err(Error::dim("flow state", space.num_dofs(), self.values.len()));
        }
        Ok(())
    }
}
