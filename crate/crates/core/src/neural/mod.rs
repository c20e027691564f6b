//! Patch-local stacked GRU: feature extraction, forward evaluation,
//! correction scatter and checkpoints.

mod checkpoint;
mod features;
mod gru;
mod predict;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use features::{extract_features, FeatureLayout};
pub use gru::{gru_forward, GruStack, LayerCache, StepCache};
pub use predict::{localize_velocity, patch_features, predict_correction, scatter_correction, Network, PatchHiddenStates};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasMode {
    /// GRU cells without bias vectors.
    None,
    /// Input and hidden biases per gate.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub layers: usize,
    pub features: usize,
    pub outputs: usize,
    pub bias: BiasMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    /// Weights of the GRU cells only.
    pub gru_only: usize,
    /// Including the linear output head.
    pub total: usize,
}

impl NetworkConfig {
    pub fn new(hidden: usize, layers: usize, features: usize, outputs: usize) -> Self {
        Self {
            hidden,
            layers,
            features,
            outputs,
            bias: BiasMode::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.features == 0 || self.outputs == 0 {
            return Err(Error::Config(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.features
        } else {
            self.hidden
        }
    }
}

pub fn count_params(cfg: &NetworkConfig) -> ParamCount {
    let m = cfg.hidden;
    let bias = match cfg.bias {
        BiasMode::None => 0,
        BiasMode::Full => 6 * m,
    };
    let gru_only: usize = (0..cfg.layers).map(|l| 3 * m * (cfg.layer_input(l) + m) + bias).sum();
    ParamCount {
        gru_only,
        total: gru_only + m * cfg.outputs + cfg.outputs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts_of_the_six_reference_networks() {
        let rows = [(32, 1, 8544), (64, 1, 23232), (32, 2, 14688), (64, 2, 47808), (32, 3, 20832), (64, 3, 72384)];
        for (m, n, expected) in rows {
            let c = count_params(&NetworkConfig::new(m, n, 57, 18));
            assert_eq!(c.gru_only, expected, "{m}x{n}");
            assert_eq!(c.total, expected + m * 18 + 18);
        }
    }

    #[test]
    fn biases_add_six_m_per_layer() {
        let mut cfg = NetworkConfig::new(8, 2, 5, 3);
        let plain = count_params(&cfg).gru_only;
        cfg.bias = BiasMode::Full;
        assert_eq!(count_params(&cfg).gru_only, plain + 2 * 48);
    }
}
