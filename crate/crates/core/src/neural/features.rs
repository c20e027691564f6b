use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::mesh::Patch;
use crate::scalar::Real;
use sha2::{Digest, Sha256};

/// Per-patch input layout for Q_r patches with `n = (2r+1)²` fine nodes:
///
/// | range | content |
/// |---|---|
/// | `0..2n` | prolongated velocity, `(v¹, v²)` per node |
/// | `2n..4n` | fine momentum residual, same order |
/// | `4n..5n` | fine continuity residual |
/// | `5n..5n+8` | corners relative to the centroid, scaled by the diameter |
/// | `5n+8` | aspect ratio |
/// | `5n+9` | diameter |
/// | `5n+10` | cell Péclet number `‖v̄‖ h Re` |
/// | `5n+11` | Reynolds number |
///
/// Outputs are `2n` velocity corrections in the same node order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub degree: usize,
}

impl FeatureLayout {
    pub fn for_degree(degree: usize) -> Self {
        Self { degree }
    }

    pub fn nodes(&self) -> usize {
        (2 * self.degree + 1).pow(2)
    }

    pub fn features(&self) -> usize {
        5 * self.nodes() + 12
    }

    pub fn outputs(&self) -> usize {
        2 * self.nodes()
    }

    pub fn describe(&self) -> String {
        format!(
            "patch-features/v1 degree={} nodes={} F={} O={} \
             vel-interleaved,res-vel-interleaved,res-p,corners-rel-centroid/diam,aspect,diam,peclet,re",
            self.degree,
            self.nodes(),
            self.features(),
            self.outputs()
        )
    }

    /// Stable identifier stored in checkpoints and datasets.
    pub fn hash(&self) -> u64 {
        let d = Sha256::digest(self.describe().as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

/// Fills `out` (length `F`) with the features of one patch. `v_tilde` and
/// `residual` are fine system vectors.
pub fn extract_features<T: Real>(
    layout: &FeatureLayout,
    patch: &Patch<T>,
    space: &FeSpace<T>,
    v_tilde: &[T],
    residual: &[T],
    reynolds: T,
    out: &mut [T],
) -> Result<()> {
    let n = layout.nodes();
    if patch.nodes.len() != n {
        return Err(Error::dim("patch nodes", n, patch.nodes.len()));
    }
    if out.len() != layout.features() {
        return Err(Error::dim("feature vector", layout.features(), out.len()));
    }
    if v_tilde.len() != space.num_dofs() || residual.len() != space.num_dofs() {
        return Err(Error::dim("fine system vector", space.num_dofs(), v_tilde.len().min(residual.len())));
    }
    let mut mean = [T::zero(); 2];
    for (a, &node) in patch.nodes.iter().enumerate() {
        for c in 0..2 {
            let dof = space.v_dof(c, node);
            out[2 * a + c] = v_tilde[dof];
            out[2 * n + 2 * a + c] = residual[dof];
            mean[c] += v_tilde[dof];
        }
        out[4 * n + a] = residual[space.p_dof(node)];
    }
    let centroid = patch.centroid();
    let k = 5 * n;
    for (i, c) in patch.corners.iter().enumerate() {
        out[k + 2 * i] = (c[0] - centroid[0]) / patch.diameter;
        out[k + 2 * i + 1] = (c[1] - centroid[1]) / patch.diameter;
    }
    let nf = T::from_usize_lossy(n);
    let speed = ((mean[0] / nf).powi(2) + (mean[1] / nf).powi(2)).sqrt();
    out[k + 8] = patch.aspect_ratio;
    out[k + 9] = patch.diameter;
    out[k + 10] = speed * patch.diameter * reynolds;
    out[k + 11] = reynolds;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_patches, GeometryConfig, MeshHierarchy};

    #[test]
    fn q1_layout_sizes() {
        let l = FeatureLayout::for_degree(1);
        assert_eq!((l.nodes(), l.features(), l.outputs()), (9, 57, 18));
        let l2 = FeatureLayout::for_degree(2);
        assert_eq!((l2.nodes(), l2.features(), l2.outputs()), (25, 137, 50));
        assert_ne!(l.hash(), l2.hash());
    }

    #[test]
    fn uniform_flow_features() {
        let h = MeshHierarchy::<f64>::new(GeometryConfig::unit_square(2, 2), 2).unwrap();
        let fine = FeSpace::new(&h, 1, 1).unwrap();
        let ps = build_patches(&h, &fine).unwrap();
        let x = fine.interpolate(|_| [3.0, 4.0], |p| p[0]);
        let res = vec![0.0; fine.num_dofs()];
        let layout = FeatureLayout::for_degree(1);
        let mut f = vec![0.0; 57];
        extract_features(&layout, &ps.patches[0], &fine, &x, &res, 10.0, &mut f).unwrap();
        for a in 0..9 {
            assert_eq!([f[2 * a], f[2 * a + 1]], [3.0, 4.0]);
        }
        assert!(f[18..45].iter().all(|&v| v == 0.0));
        // Square cell of side 0.5, diameter √2/2: corners at (±1/2, ±1/2)/diameter·0.5.
        let d = 0.5f64 * 2f64.sqrt();
        assert!((f[45] + 0.25 / d).abs() < 1e-14 && (f[46] + 0.25 / d).abs() < 1e-14);
        assert_eq!(f[53], 1.0);
        assert!((f[54] - d).abs() < 1e-14);
        assert!((f[55] - 5.0 * d * 10.0).abs() < 1e-12);
        assert_eq!(f[56], 10.0);
        assert!(extract_features(&layout, &ps.patches[0], &fine, &x, &res, 10.0, &mut f[..50]).is_err());
    }
}
