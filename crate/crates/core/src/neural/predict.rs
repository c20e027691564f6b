use super::features::{extract_features, FeatureLayout};
use super::gru::{GruStack, StepCache};
use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::mesh::PatchSet;
use crate::scalar::Real;

/// A GRU stack together with its input normalization and output scale:
/// `d = s · head(gru((x − μ) / σ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub stack: GruStack<T>,
    pub input_mean: Vec<T>,
    pub input_std: Vec<T>,
    pub output_scale: T,
    pub layout_hash: u64,
}

impl<T: Real> Network<T> {
    /// Identity normalization and unit scale.
    pub fn new(stack: GruStack<T>, layout: &FeatureLayout) -> Result<Self> {
        let f = stack.config.features;
        if f != layout.features() || stack.config.outputs != layout.outputs() {
            return Err(Error::Config(format!(
                "network shape {}→{} does not fit feature layout {}→{}",
                f,
                stack.config.outputs,
                layout.features(),
                layout.outputs()
            )));
        }
        Ok(Self {
            stack,
            input_mean: vec![T::zero(); f],
            input_std: vec![T::one(); f],
            output_scale: T::one(),
            layout_hash: layout.hash(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.stack.config
    }

    pub fn check_layout(&self, layout: &FeatureLayout) -> Result<()> {
        if self.layout_hash != layout.hash() {
            return Err(Error::Config(format!(
                "network was trained for feature layout {:016x}, current layout is {:016x}",
                self.layout_hash,
                layout.hash()
            )));
        }
        Ok(())
    }

    /// Normalizes a `batch × F` block of raw features in place.
    pub fn normalize(&self, x: &mut [T]) {
        let f = self.input_mean.len();
        for row in x.chunks_mut(f) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.input_mean[k]) / self.input_std[k];
            }
        }
    }

    /// Scaled corrections for a batch of normalized inputs.
    pub fn step(&self, x: &[T], hidden: &mut PatchHiddenStates<T>, cache: Option<&mut StepCache<T>>) -> Vec<T> {
        let mut out = self.stack.step(x, hidden.patches, &mut hidden.layers, cache);
        for v in &mut out {
            *v *= self.output_scale;
        }
        out
    }
}

/// Hidden state of every layer for every patch, `layers[l]` is `P × m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchHiddenStates<T> {
    pub patches: usize,
    pub hidden: usize,
    pub layers: Vec<Vec<T>>,
}

impl<T: Real> PatchHiddenStates<T> {
    pub fn zeros(cfg: &NetworkConfig, patches: usize) -> Self {
        Self {
            patches,
            hidden: cfg.hidden,
            layers: vec![vec![T::zero(); patches * cfg.hidden]; cfg.layers],
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Velocity values at the patch nodes, `P × 2n`, `(v¹, v²)` per node.
pub fn localize_velocity<T: Real>(patches: &PatchSet<T>, space: &FeSpace<T>, x: &[T]) -> Vec<T> {
    let n = patches.nodes_per_patch();
    let mut out = Vec::with_capacity(patches.len() * 2 * n);
    for p in &patches.patches {
        for &node in &p.nodes {
            out.push(x[space.v_dof(0, node)]);
            out.push(x[space.v_dof(1, node)]);
        }
    }
    out
}

/// Assembles per-patch velocity values (`P × 2n`) into a fine system vector,
/// averaging over the patches sharing a node. Pressure and Dirichlet entries
/// are zero.
pub fn scatter_correction<T: Real>(patches: &PatchSet<T>, space: &FeSpace<T>, local: &[T]) -> Result<Vec<T>> {
    let n = patches.nodes_per_patch();
    if local.len() != patches.len() * 2 * n {
        return Err(Error::dim("patch corrections", patches.len() * 2 * n, local.len()));
    }
    let mut d = vec![T::zero(); space.num_dofs()];
    for (p, vals) in patches.patches.iter().zip(local.chunks(2 * n)) {
        for (a, &node) in p.nodes.iter().enumerate() {
            d[space.v_dof(0, node)] += vals[2 * a];
            d[space.v_dof(1, node)] += vals[2 * a + 1];
        }
    }
    for node in 0..space.num_nodes() {
        let m = patches.multiplicity[node];
        for c in 0..2 {
            let k = space.v_dof(c, node);
            d[k] = if space.is_dirichlet_node(node) || m == 0 {
                T::zero()
            } else {
                d[k] / T::from_usize_lossy(m)
            };
        }
    }
    Ok(d)
}

/// Raw features of all patches, `P × F`.
pub fn patch_features<T: Real>(
    layout: &FeatureLayout,
    patches: &PatchSet<T>,
    space: &FeSpace<T>,
    v_tilde: &[T],
    residual: &[T],
    reynolds: T,
) -> Result<Vec<T>> {
    let f = layout.features();
    let mut x = vec![T::zero(); patches.len() * f];
    for (p, row) in patches.patches.iter().zip(x.chunks_mut(f)) {
        extract_features(layout, p, space, v_tilde, residual, reynolds, row)?;
    }
    Ok(x)
}

/// One network step on every patch; returns the fine velocity correction as a
/// system vector and advances `hidden`.
pub fn predict_correction<T: Real>(
    net: &Network<T>,
    layout: &FeatureLayout,
    patches: &PatchSet<T>,
    space: &FeSpace<T>,
    v_tilde: &[T],
    residual: &[T],
    reynolds: T,
    hidden: &mut PatchHiddenStates<T>,
) -> Result<Vec<T>> {
    net.check_layout(layout)?;
    if hidden.patches != patches.len() {
        return Err(Error::dim("hidden states", patches.len(), hidden.patches));
    }
    let mut x = patch_features(layout, patches, space, v_tilde, residual, reynolds)?;
    net.normalize(&mut x);
    let local = net.step(&x, hidden, None);
    scatter_correction(patches, space, &local)
}
