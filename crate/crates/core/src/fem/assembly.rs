use super::space::{FeSpace, FIELDS};
use super::{FlowState, ProblemParams, TimeScheme};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// `𝒜_n(x) = f_n` for one time step on one level. Rows are pressure-first;
/// constrained velocity rows read `x_i − g_i`.
#[derive(Clone, Debug)]
pub struct NonlinearSystem<'a, T: Real> {
    pub space: &'a FeSpace<T>,
    pub params: &'a ProblemParams<T>,
    pub time: T,
    rhs: Vec<T>,
    dirichlet: Vec<T>,
    mask: Vec<bool>,
}

impl<'a, T: Real> NonlinearSystem<'a, T> {
    /// Crank-Nicolson step from `prev` to `prev.time + k`.
    pub fn crank_nicolson(space: &'a FeSpace<T>, params: &'a ProblemParams<T>, prev: &FlowState<T>) -> Result<Self> {
        prev.check_space(space)?;
        let time = prev.time + params.time_step;
        let rhs = build_rhs_next(space, params, &prev.values, prev.time, time)?;
        Self::with_rhs(space, params, time, rhs)
    }

    /// Steady problem `𝒜(x) = (f(t), φ)` (requires the stationary scheme).
    pub fn stationary(space: &'a FeSpace<T>, params: &'a ProblemParams<T>, time: T) -> Result<Self> {
        if params.scheme != TimeScheme::Stationary {
            return Err(Error::Config("stationary system needs TimeScheme::Stationary".into()));
        }
        let zeros = vec![T::zero(); space.num_dofs()];
        let rhs = build_rhs_next(space, params, &zeros, time, time)?;
        Self::with_rhs(space, params, time, rhs)
    }

    /// System with an externally built right-hand side, e.g. a restricted one.
    pub fn with_rhs(space: &'a FeSpace<T>, params: &'a ProblemParams<T>, time: T, rhs: Vec<T>) -> Result<Self> {
        if rhs.len() != space.num_dofs() {
            return Err(Error::dim("right-hand side", space.num_dofs(), rhs.len()));
        }
        Ok(Self {
            space,
            params,
            time,
            rhs,
            dirichlet: dirichlet_values(space, params, time),
            mask: space.dirichlet_mask(),
        })
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn dirichlet(&self) -> &[T] {
        &self.dirichlet
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn residual(&self, x: &[T]) -> Result<Vec<T>> {
        assemble_residual(self, x)
    }

    pub fn jacobian(&self, x: &[T]) -> Result<CsrMatrix<T>> {
        let mut j = assemble_jacobian(self.space, self.params, x)?;
        apply_dirichlet_matrix(&mut j, &self.mask);
        Ok(j)
    }

    /// Overwrites constrained entries of `x` with their boundary values.
    pub fn impose_dirichlet(&self, x: &mut [T]) {
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                x[i] = self.dirichlet[i];
            }
        }
    }
}

/// Prescribed boundary values at time `t` as a full system vector (zero in
/// unconstrained entries).
pub fn dirichlet_values<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, t: T) -> Vec<T> {
    let n = space.num_nodes();
    let mut g = vec![T::zero(); FIELDS * n];
    for node in 0..n {
        if let Some(tag) = space.node_tag(node).filter(|t| t.is_dirichlet()) {
            let v = (params.dirichlet)(t, space.node_coords()[node], tag);
            g[n + node] = v[0];
            g[2 * n + node] = v[1];
        }
    }
    g
}

/// Constrained rows become `x_i − g_i`.
pub fn apply_dirichlet_vector<T: Real>(residual: &mut [T], x: &[T], g: &[T], mask: &[bool]) {
    for i in 0..residual.len() {
        if mask[i] {
            residual[i] = x[i] - g[i];
        }
    }
}

/// Constrained rows become identity rows.
pub fn apply_dirichlet_matrix<T: Real>(a: &mut CsrMatrix<T>, mask: &[bool]) {
    for (i, &m) in mask.iter().enumerate() {
        if m {
            a.set_identity_row(i);
        }
    }
}

struct Coefficients<T> {
    mass: T,
    theta: T,
    nu: T,
    lps: T,
}

fn coefficients<T: Real>(params: &ProblemParams<T>) -> Coefficients<T> {
    let (mass, theta) = match params.scheme {
        TimeScheme::CrankNicolson => (T::one() / params.time_step, T::lit(0.5)),
        TimeScheme::Stationary => (T::zero(), T::one()),
    };
    Coefficients {
        mass,
        theta,
        nu: params.viscosity(),
        lps: params.lps_alpha0 * params.reynolds,
    }
}

fn gather<T: Real>(space: &FeSpace<T>, c: usize, x: &[T], out: &mut [T]) {
    let n = space.num_nodes();
    let nloc = space.nodes_per_cell();
    for (a, &node) in space.cell_nodes(c).iter().enumerate() {
        for f in 0..FIELDS {
            out[f * nloc + a] = x[f * n + node];
        }
    }
}

/// Element residual, and optionally the element Jacobian (row-major,
/// `3·nloc` square), of the unstabilized part of `𝒜`.
fn cell_kernel<T: Real>(
    space: &FeSpace<T>,
    k: &Coefficients<T>,
    c: usize,
    xl: &[T],
    res: &mut [T],
    mut jac: Option<&mut [T]>,
) {
    let nloc = space.nodes_per_cell();
    let nl = FIELDS * nloc;
    let (p_l, rest) = xl.split_at(nloc);
    let (v1_l, v2_l) = rest.split_at(nloc);
    for q in 0..space.quadrature().len() {
        let w = space.jxw(c, q);
        let phi = space.ref_values(q);
        let g = space.grads(c, q);
        let mut p = T::zero();
        let mut v = [T::zero(); 2];
        let mut gv = [[T::zero(); 2]; 2];
        for a in 0..nloc {
            p += p_l[a] * phi[a];
            v[0] += v1_l[a] * phi[a];
            v[1] += v2_l[a] * phi[a];
            for d in 0..2 {
                gv[0][d] += v1_l[a] * g[a][d];
                gv[1][d] += v2_l[a] * g[a][d];
            }
        }
        let div = gv[0][0] + gv[1][1];
        let conv = [
            v[0] * gv[0][0] + v[1] * gv[0][1],
            v[0] * gv[1][0] + v[1] * gv[1][1],
        ];
        for a in 0..nloc {
            res[a] += w * div * phi[a];
            for comp in 0..2 {
                res[(1 + comp) * nloc + a] += w
                    * (k.mass * v[comp] * phi[a]
                        + k.theta * conv[comp] * phi[a]
                        + k.theta * k.nu * (gv[comp][0] * g[a][0] + gv[comp][1] * g[a][1])
                        - p * g[a][comp]);
            }
        }
        if let Some(j) = jac.as_deref_mut() {
            for a in 0..nloc {
                let wa = w * phi[a];
                for b in 0..nloc {
                    let adv = v[0] * g[b][0] + v[1] * g[b][1];
                    let lap = g[b][0] * g[a][0] + g[b][1] * g[a][1];
                    let diag = k.mass * phi[b] * phi[a] * w + k.theta * adv * wa + k.theta * k.nu * lap * w;
                    for comp in 0..2 {
                        let row = (1 + comp) * nloc + a;
                        // pressure row, velocity column
                        j[a * nl + (1 + comp) * nloc + b] += wa * g[b][comp];
                        // velocity row, pressure column
                        j[row * nl + b] -= w * phi[b] * g[a][comp];
                        j[row * nl + (1 + comp) * nloc + b] += diag;
                        for d in 0..2 {
                            j[row * nl + (1 + d) * nloc + b] += k.theta * phi[b] * gv[comp][d] * wa;
                        }
                    }
                }
            }
        }
    }
}

fn check_len<T: Real>(space: &FeSpace<T>, x: &[T]) -> Result<()> {
    if x.len() != space.num_dofs() {
        return Err(Error::dim("state vector", space.num_dofs(), x.len()));
    }
    Ok(())
}

/// `𝒜(x)` without boundary constraints.
pub fn assemble_operator<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, x: &[T]) -> Result<Vec<T>> {
    check_len(space, x)?;
    let k = coefficients(params);
    let n = space.num_nodes();
    let nloc = space.nodes_per_cell();
    let mut out = vec![T::zero(); space.num_dofs()];
    let mut xl = vec![T::zero(); FIELDS * nloc];
    let mut rl = vec![T::zero(); FIELDS * nloc];
    for c in 0..space.num_cells() {
        gather(space, c, x, &mut xl);
        rl.iter_mut().for_each(|v| *v = T::zero());
        cell_kernel(space, &k, c, &xl, &mut rl, None);
        for (a, &node) in space.cell_nodes(c).iter().enumerate() {
            for f in 0..FIELDS {
                out[f * n + node] += rl[f * nloc + a];
            }
        }
    }
    for grp in space.lps_groups() {
        let ng = grp.nodes.len();
        for (i, &ni) in grp.nodes.iter().enumerate() {
            let mut s = T::zero();
            for (j, &nj) in grp.nodes.iter().enumerate() {
                s += grp.matrix[i * ng + j] * x[nj];
            }
            out[ni] += k.lps * s;
        }
    }
    Ok(out)
}

/// `𝒜_n(x) − f_n` with constrained rows replaced by `x_i − g_i`.
pub fn assemble_residual<T: Real>(sys: &NonlinearSystem<'_, T>, x: &[T]) -> Result<Vec<T>> {
    let mut r = assemble_operator(sys.space, sys.params, x)?;
    for (ri, fi) in r.iter_mut().zip(&sys.rhs) {
        *ri -= *fi;
    }
    apply_dirichlet_vector(&mut r, x, &sys.dirichlet, &sys.mask);
    Ok(r)
}

/// Analytic Jacobian `𝒜'(x)` without boundary constraints.
pub fn assemble_jacobian<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, x: &[T]) -> Result<CsrMatrix<T>> {
    check_len(space, x)?;
    let k = coefficients(params);
    let nloc = space.nodes_per_cell();
    let nl = FIELDS * nloc;
    let mut m = space.system_pattern();
    let mut xl = vec![T::zero(); nl];
    let mut rl = vec![T::zero(); nl];
    let mut jl = vec![T::zero(); nl * nl];
    for c in 0..space.num_cells() {
        gather(space, c, x, &mut xl);
        jl.iter_mut().for_each(|v| *v = T::zero());
        cell_kernel(space, &k, c, &xl, &mut rl, Some(&mut jl));
        let pos = space.cell_positions(c);
        let vals = m.values_mut();
        for (idx, &p) in pos.iter().enumerate() {
            vals[p] += jl[idx];
        }
    }
    for (gi, grp) in space.lps_groups().iter().enumerate() {
        let pos = space.lps_positions(gi);
        let vals = m.values_mut();
        for (idx, &p) in pos.iter().enumerate() {
            vals[p] += k.lps * grp.matrix[idx];
        }
    }
    Ok(m)
}

/// Right-hand side of the step `t_old → t_new` built from the velocity part
/// of `x_old`; pressure rows are zero.
pub fn build_rhs_next<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, x_old: &[T], t_old: T, t_new: T) -> Result<Vec<T>> {
    check_len(space, x_old)?;
    let k = coefficients(params);
    let n = space.num_nodes();
    let nloc = space.nodes_per_cell();
    let half = T::lit(0.5);
    let stationary = params.scheme == TimeScheme::Stationary;
    let mut out = vec![T::zero(); space.num_dofs()];
    let mut xl = vec![T::zero(); FIELDS * nloc];
    for c in 0..space.num_cells() {
        gather(space, c, x_old, &mut xl);
        let v1_l = &xl[nloc..2 * nloc];
        let v2_l = &xl[2 * nloc..];
        for q in 0..space.quadrature().len() {
            let w = space.jxw(c, q);
            let phi = space.ref_values(q);
            let g = space.grads(c, q);
            let xq = space.quad_point(c, q);
            let force = if stationary {
                params.force(t_new, xq)
            } else if params.body_force.is_some() {
                let (a, b) = (params.force(t_new, xq), params.force(t_old, xq));
                [half * (a[0] + b[0]), half * (a[1] + b[1])]
            } else {
                [T::zero(); 2]
            };
            let mut v = [T::zero(); 2];
            let mut gv = [[T::zero(); 2]; 2];
            if !stationary {
                for a in 0..nloc {
                    v[0] += v1_l[a] * phi[a];
                    v[1] += v2_l[a] * phi[a];
                    for d in 0..2 {
                        gv[0][d] += v1_l[a] * g[a][d];
                        gv[1][d] += v2_l[a] * g[a][d];
                    }
                }
            }
            let conv = [
                v[0] * gv[0][0] + v[1] * gv[0][1],
                v[0] * gv[1][0] + v[1] * gv[1][1],
            ];
            for (a, &node) in space.cell_nodes(c).iter().enumerate() {
                for comp in 0..2 {
                    let mut val = force[comp] * phi[a];
                    if !stationary {
                        val += k.mass * v[comp] * phi[a]
                            - (T::one() - k.theta) * conv[comp] * phi[a]
                            - (T::one() - k.theta) * k.nu * (gv[comp][0] * g[a][0] + gv[comp][1] * g[a][1]);
                    }
                    out[(1 + comp) * n + node] += w * val;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::InflowProfile;
    use crate::mesh::{GeometryConfig, MeshHierarchy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel() -> (MeshHierarchy<f64>, ProblemParams<f64>) {
        let h = MeshHierarchy::new(GeometryConfig::benchmark(), 2).unwrap();
        let p = ProblemParams::channel(
            100.0,
            0.01,
            InflowProfile {
                max_velocity: 1.5,
                channel_height: 0.41,
                ramp_time: 0.0,
            },
        );
        (h, p)
    }

    fn random_state(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_state_zero_data_zero_residual() {
        let (h, mut p) = channel();
        p.dirichlet = std::sync::Arc::new(|_, _, _| [0.0, 0.0]);
        let s = FeSpace::new(&h, 1, 1).unwrap();
        let prev = FlowState::zeros(&s, 0.0);
        let sys = NonlinearSystem::crank_nicolson(&s, &p, &prev).unwrap();
        let r = sys.residual(&prev.values).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_velocity_has_zero_divergence_rows() {
        let h = MeshHierarchy::new(GeometryConfig::<f64>::unit_square(3, 3), 2).unwrap();
        let p = ProblemParams::channel(10.0, 0.1, InflowProfile { max_velocity: 1.0, channel_height: 1.0, ramp_time: 0.0 });
        let s = FeSpace::new(&h, 1, 1).unwrap();
        let x = s.interpolate(|_| [0.7, -0.2], |_| 0.0);
        let a = assemble_operator(&s, &p, &x).unwrap();
        // ∫ div v ξ = 0 for every pressure test function.
        assert!(a[..s.num_nodes()].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (h, p) = channel();
        let s = FeSpace::new(&h, 0, 1).unwrap();
        assert!(assemble_operator(&s, &p, &[0.0; 3]).is_err());
        assert!(assemble_jacobian(&s, &p, &[0.0; 3]).is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (h, p) = channel();
        for degree in [1, 2] {
            let s = FeSpace::new(&h, 1, degree).unwrap();
            let x = random_state(s.num_dofs(), 3);
            let jac = assemble_jacobian(&s, &p, &x).unwrap();
            for seed in 0..3 {
                let w = random_state(s.num_dofs(), 100 + seed);
                let eps = 1e-5;
                let xp: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + eps * b).collect();
                let xm: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a - eps * b).collect();
                let ap = assemble_operator(&s, &p, &xp).unwrap();
                let am = assemble_operator(&s, &p, &xm).unwrap();
                let jw = jac.mul_vec(&w);
                let num: f64 = ap.iter().zip(&am).zip(&jw).map(|((a, b), j)| ((a - b) / (2.0 * eps) - j).powi(2)).sum::<f64>().sqrt();
                let den: f64 = jw.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(num / den < 1e-8, "degree {degree}: rel err {}", num / den);
            }
        }
    }

    #[test]
    fn velocity_block_symmetric_at_rest() {
        let (h, p) = channel();
        let s = FeSpace::new(&h, 1, 1).unwrap();
        let mut x = vec![0.0; s.num_dofs()];
        for v in x[..s.num_nodes()].iter_mut() {
            *v = 0.3;
        }
        let jac = assemble_jacobian(&s, &p, &x).unwrap();
        let n = s.num_nodes();
        for i in n..3 * n {
            let (cols, vals) = jac.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= n {
                    assert!((v - jac.get(j, i)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lps_vanishes_on_projection_invariant_pressure() {
        let (h, mut p) = channel();
        p.lps_alpha0 = 1.0;
        // Q1: prolongated coarse bilinears are patchwise bilinear.
        let c = FeSpace::new(&h, 0, 1).unwrap();
        let f = FeSpace::new(&h, 1, 1).unwrap();
        let t = crate::mesh::build_transfer(&h, &c, &f).unwrap();
        let pc = random_state(c.num_nodes(), 9);
        let pf = t.prolongate(&pc);
        for grp in f.lps_groups() {
            let ng = grp.nodes.len();
            for i in 0..ng {
                let s: f64 = (0..ng).map(|j| grp.matrix[i * ng + j] * pf[grp.nodes[j]]).sum();
                assert!(s.abs() < 1e-13);
            }
        }
        // Q2: cellwise Q1 interpolants.
        let q2 = FeSpace::new(&h, 1, 2).unwrap();
        let x = q2.interpolate(|_| [0.0, 0.0], |x| 1.0 + 2.0 * x[0] - x[1]);
        for grp in q2.lps_groups() {
            let ng = grp.nodes.len();
            for i in 0..ng {
                let s: f64 = (0..ng).map(|j| grp.matrix[i * ng + j] * x[grp.nodes[j]]).sum();
                assert!(s.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn parabolic_inflow_peaks_mid_channel() {
        let prof = InflowProfile { max_velocity: 1.5f64, channel_height: 0.41, ramp_time: 0.0 };
        assert!((prof.eval(0.0, 0.205) - 1.5).abs() < 1e-14);
        assert_eq!(prof.eval(0.0, 0.0), 0.0);
        let ramped = InflowProfile { ramp_time: 1.0, ..prof };
        assert_eq!(ramped.eval(0.0, 0.205), 0.0);
        assert!((ramped.eval(0.5, 0.205) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_rows_vanish_once_imposed() {
        let (h, p) = channel();
        let s = FeSpace::new(&h, 1, 1).unwrap();
        let prev = FlowState::zeros(&s, 0.0);
        let sys = NonlinearSystem::crank_nicolson(&s, &p, &prev).unwrap();
        let mut x = random_state(s.num_dofs(), 5);
        sys.impose_dirichlet(&mut x);
        let r = sys.residual(&x).unwrap();
        for (i, &m) in sys.mask().iter().enumerate() {
            if m {
                assert_eq!(r[i], 0.0);
            }
        }
    }
}
