//! Exact solutions with matching body forces, shared by the convergence
//! tests and the acceptance suite.

use std::f64::consts::PI;
use std::sync::Arc;

use dnnmg_core::fem::{FeSpace, FlowState, InflowProfile, ProblemParams, Quadrature, TimeScheme};
use dnnmg_core::mesh::GeometryConfig;
use dnnmg_core::newton::{solve_step, SolverSettings};
use dnnmg_core::Discretization;

fn base_params(re: f64, k: f64) -> ProblemParams<f64> {
    ProblemParams::channel(re, k, InflowProfile { max_velocity: 0.0, channel_height: 1.0, ramp_time: 0.0 })
}

pub fn velocity_l2_error(space: &FeSpace<f64>, x: &[f64], exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let quad = Quadrature::<f64>::tensor(4);
    let mut err = 0.0;
    for c in 0..space.num_cells() {
        let nodes = space.cell_nodes(c);
        for (xi, w) in quad.points.iter().zip(&quad.weights) {
            let (map, phi, _) = space.eval_at(c, *xi);
            let e = exact(map.point);
            for comp in 0..2 {
                let vh: f64 = nodes.iter().zip(&phi).map(|(&n, f)| x[space.v_dof(comp, n)] * f).sum();
                err += (vh - e[comp]).powi(2) * w * map.det.abs();
            }
        }
    }
    err.sqrt()
}

/// Velocity `a(t)·(x, −y)` with pressure `ν·a(t)`: the field lies in the Q1
/// space, has a spatially constant pressure (invisible to LPS) and satisfies the do-nothing condition on the outflow side, so
/// only the time discretization contributes to the error.
pub fn temporal_error(k: f64) -> f64 {
    let nu = 0.1;
    let a = |t: f64| 1.0 + (2.0 * t).sin();
    let da = |t: f64| 2.0 * (2.0 * t).cos();
    let disc = Discretization::new(GeometryConfig::unit_square(2, 2), 2, 1).unwrap();
    let mut params = base_params(1.0 / nu, k);
    params.body_force = Some(Arc::new(move |t, x| {
        let (at, dat) = (a(t), da(t));
        [dat * x[0] + at * at * x[0], -dat * x[1] + at * at * x[1]]
    }));
    params.dirichlet = Arc::new(move |t, x, _| [a(t) * x[0], -a(t) * x[1]]);
    let level = 2;
    let space = disc.space(level).unwrap();
    let values = space.interpolate(|x| [a(0.0) * x[0], -a(0.0) * x[1]], |_| nu * a(0.0));
    let mut state = FlowState { level, time: 0.0, values };
    let steps = (1.0 / k).round() as usize;
    let mut settings = SolverSettings::default();
    settings.newton.abs_tol = 1e-13;
    settings.newton.rel_tol = 1e-13;
    for _ in 0..steps {
        let (next, stats) = solve_step(&disc, &params, level, &state, None, &settings).unwrap();
        assert!(stats.converged);
        state = next;
    }
    let t = state.time;
    velocity_l2_error(space, &state.values, |x| [a(t) * x[0], -a(t) * x[1]])
}

/// Stream function `ψ = sin(πy)·g(x)` with `g = 1 + (1−x)³` and pressure
/// `(1−x)·cos(πy)`; `g′(1) = g″(1) = 0` and `p(1, ·) = 0` make the
/// do-nothing condition hold at the outflow.
pub struct Steady {
    pub nu: f64,
}

impl Steady {
    pub fn velocity(x: [f64; 2]) -> [f64; 2] {
        let (f, df) = ((PI * x[1]).sin(), PI * (PI * x[1]).cos());
        let s = 1.0 - x[0];
        let (g, dg) = (1.0 + s.powi(3), -3.0 * s * s);
        [df * g, -f * dg]
    }

    pub fn force(&self, x: [f64; 2]) -> [f64; 2] {
        let y = x[1];
        let f = (PI * y).sin();
        let f1 = PI * (PI * y).cos();
        let f2 = -PI * PI * f;
        let f3 = -PI * PI * f1;
        let s = 1.0 - x[0];
        let g = 1.0 + s.powi(3);
        let g1 = -3.0 * s * s;
        let g2 = 6.0 * s;
        let g3 = -6.0;
        let lap = [f3 * g + f1 * g2, -(f2 * g1 + f * g3)];
        let conv = [g * g1 * (f1 * f1 - f * f2), f * f1 * (g1 * g1 - g * g2)];
        let grad_p = [-(PI * y).cos(), -s * PI * (PI * y).sin()];
        [
            conv[0] - self.nu * lap[0] + grad_p[0],
            conv[1] - self.nu * lap[1] + grad_p[1],
        ]
    }
}

/// Velocity L2 errors of the steady problem on levels `2..=finest` of a
/// 2×2 unit-square macro mesh.
pub fn spatial_errors(finest: usize) -> Vec<f64> {
    let problem = Steady { nu: 1.0 };
    let mut params = base_params(1.0 / problem.nu, 1.0);
    params.scheme = TimeScheme::Stationary;
    params.body_force = Some(Arc::new(move |_, x| problem.force(x)));
    params.dirichlet = Arc::new(|_, x, _| Steady::velocity(x));
    let disc = Discretization::new(GeometryConfig::unit_square(2, 2), finest, 1).unwrap();
    let mut settings = SolverSettings::default();
    settings.newton.abs_tol = 1e-12;
    (2..=finest)
        .map(|level| {
            let space = disc.space(level).unwrap();
            let guess = FlowState::zeros(space, 0.0);
            let (x, stats) = solve_step(&disc, &params, level, &guess, None, &settings).unwrap();
            assert!(stats.converged);
            velocity_l2_error(space, &x.values, Steady::velocity)
        })
        .collect()
}
