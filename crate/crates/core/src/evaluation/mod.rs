//! Flow functionals, error series against a reference and phase alignment.

use std::io::Write;

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::fem::{gauss_1d, FeSpace, ProblemParams, Trajectory};
use crate::mesh::BoundaryTag;
use crate::scalar::Real;

/// `∫_Ω |∇·v|² dx` by cell quadrature.
pub fn functional_divergence<T: Real>(space: &FeSpace<T>, x: &[T]) -> Result<T> {
    if x.len() != space.num_dofs() {
        return Err(Error::dim("state", space.num_dofs(), x.len()));
    }
    let mut total = T::zero();
    for c in 0..space.num_cells() {
        let nodes = space.cell_nodes(c);
        for q in 0..space.quadrature().len() {
            let g = space.grads(c, q);
            let mut div = T::zero();
            for (a, &node) in nodes.iter().enumerate() {
                div += x[space.v_dof(0, node)] * g[a][0] + x[space.v_dof(1, node)] * g[a][1];
            }
            total += div * div * space.jxw(c, q);
        }
    }
    Ok(total)
}

/// Reference coordinates along local edge `e` at parameter `s`, following
/// the counterclockwise vertex order.
fn edge_point<T: Real>(e: u8, s: T) -> [T; 2] {
    let (z, o) = (T::zero(), T::one());
    match e {
        0 => [s, z],
        1 => [o, s],
        2 => [o - s, o],
        _ => [z, o - s],
    }
}

/// Drag and lift `−∫_Γ (ν ∇v − p I) n · e_{x,y} ds` over the obstacle
/// boundary, `n` the unit normal pointing into the obstacle, by Gauss
/// quadrature along the obstacle edges.
pub fn functional_drag_lift<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, x: &[T]) -> Result<(T, T)> {
    if x.len() != space.num_dofs() {
        return Err(Error::dim("state", space.num_dofs(), x.len()));
    }
    let nu = params.viscosity();
    let (pts, wts) = gauss_1d::<T>(space.degree + 2);
    let mut found = false;
    let (mut drag, mut lift) = (T::zero(), T::zero());
    for edge in space.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::Obstacle) {
        found = true;
        let c = edge.cell;
        let nodes = space.cell_nodes(c);
        // Cell edges are straight, so the tangent is constant.
        let verts = space.cell_coords(c);
        let (a, b) = (verts[edge.local_edge as usize], verts[(edge.local_edge as usize + 1) % 4]);
        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
        for (&s, &w) in pts.iter().zip(&wts) {
            let xi = edge_point(edge.local_edge, s);
            let (_, phi, grad) = space.eval_at(c, xi);
            let len = (tx * tx + ty * ty).sqrt();
            // Counterclockwise cell: outward normal of the fluid cell, which
            // points into the obstacle.
            let n = [ty / len, -tx / len];
            let mut p = T::zero();
            let mut gv = [[T::zero(); 2]; 2];
            for (a, &node) in nodes.iter().enumerate() {
                p += x[space.p_dof(node)] * phi[a];
                for comp in 0..2 {
                    let v = x[space.v_dof(comp, node)];
                    gv[comp][0] += v * grad[a][0];
                    gv[comp][1] += v * grad[a][1];
                }
            }
            let ds = w * len;
            let tr = |comp: usize| nu * (gv[comp][0] * n[0] + gv[comp][1] * n[1]) - p * n[comp];
            drag -= tr(0) * ds;
            lift -= tr(1) * ds;
        }
    }
    if !found {
        return Err(Error::Geometry("mesh has no obstacle boundary".into()));
    }
    Ok((drag, lift))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FunctionalSeries {
    pub times: Vec<f64>,
    pub divergence: Vec<f64>,
    pub drag: Vec<f64>,
    pub lift: Vec<f64>,
}

pub fn functional_series<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, traj: &Trajectory<T>) -> Result<FunctionalSeries> {
    let mut out = FunctionalSeries::default();
    let has_obstacle = space.boundary_edges().iter().any(|e| e.tag == BoundaryTag::Obstacle);
    for (t, x) in traj.times.iter().zip(&traj.states) {
        out.times.push(t.to_f64_lossy());
        out.divergence.push(functional_divergence(space, x)?.to_f64_lossy());
        let (d, l) = if has_obstacle {
            functional_drag_lift(space, params, x)?
        } else {
            (T::nan(), T::nan())
        };
        out.drag.push(d.to_f64_lossy());
        out.lift.push(l.to_f64_lossy());
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

fn rel<T: Real>(a: &[T], b: &[T]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (*x - *y).to_f64_lossy().powi(2)).sum();
    let den: f64 = b.iter().map(|y| y.to_f64_lossy().powi(2)).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Relative l² velocity and pressure errors per common time stamp.
pub fn relative_error_series<T: Real>(candidate: &Trajectory<T>, reference: &Trajectory<T>) -> Result<ErrorSeries> {
    if candidate.level != reference.level {
        return Err(Error::Level(format!(
            "candidate on level {} compared with reference on level {}",
            candidate.level, reference.level
        )));
    }
    if candidate.steps != reference.steps {
        return Err(Error::Config("candidate and reference are sampled at different steps".into()));
    }
    let mut out = ErrorSeries::default();
    for ((t, c), r) in candidate.times.iter().zip(&candidate.states).zip(&reference.states) {
        if c.len() != r.len() {
            return Err(Error::dim("compared states", r.len(), c.len()));
        }
        let n = r.len() / 3;
        out.times.push(t.to_f64_lossy());
        out.velocity.push(rel(&c[n..], &r[n..]));
        out.pressure.push(rel(&c[..n], &r[..n]));
    }
    Ok(out)
}

/// Prolongates every state of a trajectory up to `level`.
pub fn prolongate_trajectory<T: Real>(disc: &Discretization<T>, traj: &Trajectory<T>, level: usize) -> Result<Trajectory<T>> {
    if level < traj.level {
        return Err(Error::Level(format!("cannot prolongate from level {} down to {level}", traj.level)));
    }
    let mut out = traj.clone();
    for l in traj.level..level {
        let t = disc.transfer(l)?;
        for s in &mut out.states {
            *s = t.prolongate_system(s);
        }
    }
    out.level = level;
    Ok(out)
}

/// Mean of `values` over samples with `t ∈ [t0, t1]`.
pub fn window_mean(times: &[f64], values: &[f64], window: (f64, f64)) -> Option<f64> {
    let eps = 1e-9;
    let sel: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - eps && **t <= window.1 + eps)
        .map(|(_, v)| *v)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

/// First discrete local maximum in the window, refined by a parabola through
/// the three neighbouring samples.
pub fn first_local_max(times: &[f64], values: &[f64], window: (f64, f64)) -> Option<f64> {
    let eps = 1e-9;
    for i in 1..values.len().saturating_sub(1) {
        let t = times[i];
        if t < window.0 - eps || t > window.1 + eps {
            continue;
        }
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        if b > a && b >= c {
            let den = a - 2.0 * b + c;
            let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            let h = times[i + 1] - times[i];
            return Some(t + off * h);
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseAlignment {
    /// How much later `b` peaks than `a`; `None` when either series has no
    /// local maximum in the window.
    pub delay: Option<f64>,
    /// `b(t + delay)` on `a`'s time stamps (linear interpolation); `b`
    /// unchanged without a delay.
    pub aligned: Vec<f64>,
}

pub fn phase_align(times: &[f64], a: &[f64], b: &[f64], window: (f64, f64)) -> PhaseAlignment {
    let delay = match (first_local_max(times, a, window), first_local_max(times, b, window)) {
        (Some(ta), Some(tb)) => Some(tb - ta),
        _ => None,
    };
    let aligned = match delay {
        None => b.to_vec(),
        Some(d) => times.iter().map(|&t| interp(times, b, t + d)).collect(),
    };
    PhaseAlignment { delay, aligned }
}

fn interp(times: &[f64], v: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return v[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return v[last];
    }
    let i = times.partition_point(|&s| s <= t) - 1;
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    v[i] + w * (v[i + 1] - v[i])
}

pub fn write_functionals_csv<W: Write + ?Sized>(w: &mut W, s: &FunctionalSeries) -> Result<()> {
    writeln!(w, "t,J_div,J_drag,J_lift")?;
    for i in 0..s.times.len() {
        writeln!(w, "{},{},{},{}", s.times[i], s.divergence[i], s.drag[i], s.lift[i])?;
    }
    Ok(())
}

pub fn write_errors_csv<W: Write + ?Sized>(w: &mut W, s: &ErrorSeries) -> Result<()> {
    writeln!(w, "t,v_err,p_err")?;
    for i in 0..s.times.len() {
        writeln!(w, "{},{},{}", s.times[i], s.velocity[i], s.pressure[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GeometryConfig, MeshHierarchy};
    use std::f64::consts::PI;

    fn square() -> FeSpace<f64> {
        let h = MeshHierarchy::new(GeometryConfig::unit_square(3, 3), 1).unwrap();
        FeSpace::new(&h, 0, 1).unwrap()
    }

    #[test]
    fn divergence_of_simple_fields() {
        let s = square();
        let c = s.interpolate(|_| [2.0, -1.0], |_| 0.0);
        assert!(functional_divergence(&s, &c).unwrap() < 1e-24);
        let free = s.interpolate(|p| [p[0], -p[1]], |_| 0.0);
        assert!(functional_divergence(&s, &free).unwrap() < 1e-24);
        let one = s.interpolate(|p| [p[0], 0.0], |_| 0.0);
        assert!((functional_divergence(&s, &one).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn errors_of_scaled_reference() {
        let mut r = Trajectory::<f64>::new(0, 1);
        let mut c = Trajectory::<f64>::new(0, 1);
        for k in 0..3 {
            let st = crate::fem::FlowState { level: 0, time: k as f64, values: vec![1.0 + k as f64, 2.0, -1.0, 0.5, 3.0, 1.0] };
            r.push(k, &st).unwrap();
            let mut st2 = st.clone();
            st2.values.iter_mut().for_each(|v| *v *= 2.0);
            c.push(k, &st2).unwrap();
        }
        let same = relative_error_series(&r, &r).unwrap();
        assert!(same.velocity.iter().chain(&same.pressure).all(|&e| e == 0.0));
        let two = relative_error_series(&c, &r).unwrap();
        assert!(two.velocity.iter().chain(&two.pressure).all(|&e| (e - 1.0).abs() < 1e-15));
        c.steps[1] = 7;
        assert!(relative_error_series(&c, &r).is_err());
    }

    #[test]
    fn phase_alignment_recovers_a_delay() {
        let dt = 0.01;
        let times: Vec<f64> = (0..=1050).map(|i| i as f64 * dt).collect();
        let w = 2.0 * PI * 3.0;
        let a: Vec<f64> = times.iter().map(|t| (w * t).sin()).collect();
        let same = phase_align(&times, &a, &a, (9.0, 10.0));
        assert_eq!(same.delay, Some(0.0));
        let delta = 0.047;
        let b: Vec<f64> = times.iter().map(|t| (w * (t - delta)).sin()).collect();
        let al = phase_align(&times, &a, &b, (9.0, 10.0));
        assert!((al.delay.unwrap() - delta).abs() < dt);
        let i = 950;
        assert!((al.aligned[i] - a[i]).abs() < 0.05);
        let mono: Vec<f64> = times.clone();
        let none = phase_align(&times, &a, &mono, (9.0, 10.0));
        assert_eq!(none.delay, None);
        assert_eq!(none.aligned, mono);
    }

    #[test]
    fn window_mean_selects_samples() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [10.0, 1.0, 3.0, 100.0];
        assert_eq!(window_mean(&t, &v, (1.0, 2.0)), Some(2.0));
        assert_eq!(window_mean(&t, &v, (5.0, 6.0)), None);
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_functionals_csv(&mut buf, &FunctionalSeries::default()).unwrap();
        assert_eq!(buf, b"t,J_div,J_drag,J_lift\n");
    }
}
