#[path = "support/transfer_oracle.rs"]
mod transfer_oracle;

use dnnmg_core::evaluation::{functional_divergence, relative_error_series};
use dnnmg_core::fem::{FlowState, Trajectory};
use dnnmg_core::mesh::{build_patches, GeometryConfig, MeshHierarchy};
use dnnmg_core::neural::{localize_velocity, scatter_correction};
use dnnmg_core::training::compute_loss;
use dnnmg_core::Discretization;
use proptest::prelude::*;
use std::sync::OnceLock;

fn disc() -> &'static Discretization<f64> {
    static D: OnceLock<Discretization<f64>> = OnceLock::new();
    D.get_or_init(|| Discretization::new(GeometryConfig::benchmark(), 1, 1).unwrap())
}

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, n)
}

#[test]
fn restriction_is_the_exact_transpose() {
    for degree in [1, 2] {
        let d = Discretization::new(GeometryConfig::benchmark(), 2, degree).unwrap();
        for l in 0..2 {
            assert_eq!(transfer_oracle::transpose_defect(d.transfer(l).unwrap()), 0.0);
        }
    }
}

#[test]
fn prolongation_reproduces_coarse_basis_functions() {
    for degree in [1, 2] {
        let defect = transfer_oracle::basis_reproduction_defect(degree);
        assert!(defect < 1e-13, "degree {degree}: {defect}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_is_adjoint(seed_c in vec_of(3 * 80), seed_f in vec_of(3 * 80)) {
        let t = disc().transfer(0).unwrap();
        let (nc, nf) = (3 * t.num_coarse(), 3 * t.num_fine());
        let u: Vec<f64> = seed_c.iter().cycle().take(nc).copied().collect();
        let w: Vec<f64> = seed_f.iter().cycle().take(nf).copied().collect();
        let pu = t.prolongate_system(&u);
        let rw = t.restrict_system(&w);
        let lhs: f64 = pu.iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&rw).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn injection_inverts_prolongation(seed in vec_of(3 * 40)) {
        let t = disc().transfer(0).unwrap();
        let u: Vec<f64> = seed.iter().cycle().take(3 * t.num_coarse()).copied().collect();
        prop_assert_eq!(t.inject_system(&t.prolongate_system(&u)), u);
    }

    #[test]
    fn divergence_functional_is_non_negative(seed in vec_of(64)) {
        let space = disc().space(1).unwrap();
        let x: Vec<f64> = seed.iter().cycle().take(space.num_dofs()).copied().collect();
        prop_assert!(functional_divergence(space, &x).unwrap() >= 0.0);
    }

    #[test]
    fn scatter_inverts_localize_on_free_velocity(seed in vec_of(128)) {
        let d = disc();
        let hier = MeshHierarchy::new(GeometryConfig::benchmark(), 2).unwrap();
        let space = d.space(1).unwrap();
        let patches = build_patches(&hier, space).unwrap();
        let x: Vec<f64> = seed.iter().cycle().take(space.num_dofs()).copied().collect();
        let back = scatter_correction(&patches, space, &localize_velocity(&patches, space, &x)).unwrap();
        for node in 0..space.num_nodes() {
            prop_assert_eq!(back[space.p_dof(node)], 0.0);
            for c in 0..2 {
                let k = space.v_dof(c, node);
                let want = if space.is_dirichlet_node(node) { 0.0 } else { x[k] };
                prop_assert!((back[k] - want).abs() <= 1e-14 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn error_series_ignore_dof_relabeling(a in vec_of(12), b in vec_of(12), perm_seed in any::<u64>()) {
        // Relabel within each field block so the velocity/pressure split is kept.
        let mut perm: Vec<usize> = (0..4).collect();
        let mut s = perm_seed;
        for i in (1..4).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let relabel = |x: &[f64]| -> Vec<f64> { (0..12).map(|k| x[(k / 4) * 4 + perm[k % 4]]).collect() };
        let traj = |x: Vec<f64>| {
            let mut t = Trajectory::new(0, 1);
            t.push(0, &FlowState { level: 0, time: 0.0, values: x }).unwrap();
            t
        };
        let e1 = relative_error_series(&traj(a.clone()), &traj(b.clone())).unwrap();
        let e2 = relative_error_series(&traj(relabel(&a)), &traj(relabel(&b))).unwrap();
        prop_assert!((e1.velocity[0] - e2.velocity[0]).abs() <= 1e-12 * (1.0 + e1.velocity[0]));
        prop_assert!((e1.pressure[0] - e2.pressure[0]).abs() <= 1e-12 * (1.0 + e1.pressure[0]));
    }

    #[test]
    fn loss_identities(t in vec_of(36), b in vec_of(36)) {
        let zero = vec![0.0; 36];
        let direct: f64 = t.iter().zip(&b).map(|(t, b)| (t - b) * (t - b)).sum();
        let l0 = compute_loss(&zero, &t, &b).unwrap();
        prop_assert!((l0 - direct).abs() <= 1e-12 * direct.max(f64::MIN_POSITIVE));
        let gap: Vec<f64> = t.iter().zip(&b).map(|(t, b)| t - b).collect();
        let lg = compute_loss(&gap, &t, &b).unwrap();
        prop_assert!(lg <= 1e-24 * (1.0 + direct));
    }
}
