//! Run configuration: one TOML file with a section per pipeline stage.
//! Every field has a default, so an empty file is a valid configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dnnmg_core::dnnmg::{DnnMgConfig, FallbackPolicy, RolloutPlan};
use dnnmg_core::fem::{InflowProfile, ProblemParams};
use dnnmg_core::mesh::{Ellipse, GeometryConfig, MeshResolution};
use dnnmg_core::neural::{BiasMode, NetworkConfig};
use dnnmg_core::newton::{NewtonSettings, SolverSettings};
use dnnmg_core::solver::{CoarseOperator, CycleSettings, KrylovSettings, SmootherKind};
use dnnmg_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometrySection,
    pub discretization: DiscretizationSection,
    pub flow: FlowSection,
    pub solver: SolverSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub dnnmg: DnnMgSection,
    pub evaluation: EvaluationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub channel_length: f64,
    pub channel_height: f64,
    pub obstacle_center: [f64; 2],
    pub obstacle_semi_axes: [f64; 2],
    /// Base-mesh cells downstream of the obstacle box.
    pub cells_x: usize,
    /// Base-mesh cells across the channel and along each side of the box.
    pub cells_y: usize,
    pub ring_layers: usize,
    pub ring_grading: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = GeometryConfig::<f64>::benchmark();
        let e = g.obstacle.expect("benchmark has an obstacle");
        Self {
            channel_length: g.channel_length,
            channel_height: g.channel_height,
            obstacle_center: e.center,
            obstacle_semi_axes: e.semi_axes,
            cells_x: g.resolution.cells_x,
            cells_y: g.resolution.cells_y,
            ring_layers: g.resolution.ring_layers,
            ring_grading: g.resolution.ring_grading,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub degree: usize,
    /// Level L of the coarse solve; the network acts on L + 1.
    pub coarse_level: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        Self { degree: 1, coarse_level: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    /// Reynolds number `Ū·D/ν` with the mean inflow velocity Ū and the
    /// obstacle's cross-stream extent D.
    pub reynolds: f64,
    pub mean_inflow: f64,
    /// Seconds over which the inflow is switched on; 0 starts impulsively.
    pub ramp_time: f64,
    pub time_step: f64,
    pub steps: usize,
    pub lps_alpha0: f64,
    /// Snapshot stride of written trajectories.
    pub stride: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            reynolds: 100.0,
            mean_inflow: 1.0,
            ramp_time: 0.2,
            time_step: 0.01,
            steps: 1050,
            lps_alpha0: 0.05,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub newton_abs_tol: f64,
    pub newton_rel_tol: f64,
    pub newton_max_iters: usize,
    pub newton_max_halvings: usize,
    pub gmres_rel_tol: f64,
    pub gmres_max_iters: usize,
    pub gmres_restart: usize,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// `ilu0`, `vanka`, `jacobi` or `exact`.
    pub smoother: String,
    pub smoother_damping: f64,
    /// `reassemble` or `galerkin`.
    pub coarse_operator: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::<f64>::default();
        Self {
            newton_abs_tol: s.newton.abs_tol,
            newton_rel_tol: s.newton.rel_tol,
            newton_max_iters: s.newton.max_iters,
            newton_max_halvings: s.newton.max_halvings,
            gmres_rel_tol: s.krylov.rel_tol,
            gmres_max_iters: s.krylov.max_iters,
            gmres_restart: s.krylov.restart,
            pre_sweeps: s.cycle.pre_sweeps,
            post_sweeps: s.cycle.post_sweeps,
            smoother: "ilu0".into(),
            smoother_damping: 0.7,
            coarse_operator: "reassemble".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: usize,
    pub layers: usize,
    pub bias: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: 32, layers: 2, bias: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub window: usize,
    pub batch_patches: usize,
    pub validation_fraction: f64,
    /// Rounds of on-policy data aggregation after teacher-forced training.
    pub rollout_rounds: usize,
    /// Steps between rollout starts along the reference.
    pub rollout_spacing: usize,
    /// Network-driven steps per rollout.
    pub rollout_horizon: usize,
    /// A rollout stops once its velocity error, relative to the largest
    /// reference velocity norm, exceeds this.
    pub rollout_max_error: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            clip_norm: t.clip_norm,
            window: t.window,
            batch_patches: t.batch_patches,
            validation_fraction: t.validation_fraction,
            rollout_rounds: 1,
            rollout_spacing: 10,
            rollout_horizon: 10,
            rollout_max_error: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnnMgSection {
    /// Newton iteration cap N_max of the fallback guard.
    pub max_newton: usize,
}

impl Default for DnnMgSection {
    fn default() -> Self {
        Self { max_newton: FallbackPolicy::default().max_newton }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub window: [f64; 2],
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { window: [9.0, 10.0] }
    }
}

impl Config {
    /// Reads a config file, or the `config` table of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
        let cfg: Config = match value.get("config") {
            Some(inner) if value.contains_key("command") => inner.clone().try_into(),
            _ => value.try_into(),
        }
        .with_context(|| format!("invalid configuration in {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.flow;
        if !(f.reynolds > 0.0) {
            bail!("flow.reynolds must be positive, got {}", f.reynolds);
        }
        if !(f.time_step > 0.0) {
            bail!("flow.time_step must be positive, got {}", f.time_step);
        }
        if !(f.mean_inflow > 0.0) {
            bail!("flow.mean_inflow must be positive, got {}", f.mean_inflow);
        }
        if !(f.ramp_time >= 0.0 && f.lps_alpha0 >= 0.0) {
            bail!("flow.ramp_time and flow.lps_alpha0 must be non-negative");
        }
        if f.stride == 0 {
            bail!("flow.stride must be at least 1");
        }
        if !matches!(self.discretization.degree, 1 | 2) {
            bail!("discretization.degree must be 1 or 2");
        }
        self.geometry().validate()?;
        self.solver_settings()?;
        self.network_config().validate()?;
        self.train_config(0).validate()?;
        let t = &self.training;
        if t.rollout_rounds > 0 && (t.rollout_spacing == 0 || t.rollout_horizon == 0 || !(t.rollout_max_error > 0.0)) {
            bail!("training.rollout_spacing, rollout_horizon and rollout_max_error must be positive");
        }
        let [a, b] = self.evaluation.window;
        if !(a < b) {
            bail!("evaluation.window must be increasing");
        }
        Ok(())
    }

    pub fn geometry(&self) -> GeometryConfig<f64> {
        let g = &self.geometry;
        GeometryConfig {
            channel_length: g.channel_length,
            channel_height: g.channel_height,
            obstacle: Some(Ellipse::new(g.obstacle_center, g.obstacle_semi_axes)),
            resolution: MeshResolution {
                cells_x: g.cells_x,
                cells_y: g.cells_y,
                ring_layers: g.ring_layers,
                ring_grading: g.ring_grading,
            },
        }
    }

    /// Coefficient of the momentum equation, `1/ν = Re / (Ū·D)`.
    pub fn equation_reynolds(&self) -> f64 {
        let diameter = 2.0 * self.geometry.obstacle_semi_axes[1];
        self.flow.reynolds / (self.flow.mean_inflow * diameter)
    }

    pub fn problem(&self) -> ProblemParams<f64> {
        let inflow = InflowProfile {
            max_velocity: 1.5 * self.flow.mean_inflow,
            channel_height: self.geometry.channel_height,
            ramp_time: self.flow.ramp_time,
        };
        let mut p = ProblemParams::channel(self.equation_reynolds(), self.flow.time_step, inflow);
        p.lps_alpha0 = self.flow.lps_alpha0;
        p
    }

    pub fn solver_settings(&self) -> Result<SolverSettings<f64>> {
        let s = &self.solver;
        let smoother = match s.smoother.as_str() {
            "ilu0" => SmootherKind::Ilu0,
            "vanka" => SmootherKind::Vanka { damping: s.smoother_damping },
            "jacobi" => SmootherKind::Jacobi { damping: s.smoother_damping },
            "exact" => SmootherKind::Exact,
            other => bail!("unknown solver.smoother {other:?}"),
        };
        let coarse_operator = match s.coarse_operator.as_str() {
            "reassemble" => CoarseOperator::Reassemble,
            "galerkin" => CoarseOperator::Galerkin,
            other => bail!("unknown solver.coarse_operator {other:?}"),
        };
        Ok(SolverSettings {
            newton: NewtonSettings {
                abs_tol: s.newton_abs_tol,
                rel_tol: s.newton_rel_tol,
                max_iters: s.newton_max_iters,
                max_halvings: s.newton_max_halvings,
            },
            krylov: KrylovSettings {
                rel_tol: s.gmres_rel_tol,
                max_iters: s.gmres_max_iters,
                restart: s.gmres_restart,
            },
            cycle: CycleSettings {
                pre_sweeps: s.pre_sweeps,
                post_sweeps: s.post_sweeps,
                smoother,
                coarse_operator,
            },
        })
    }

    pub fn network_config(&self) -> NetworkConfig {
        let layout = dnnmg_core::neural::FeatureLayout::for_degree(self.discretization.degree);
        let mut cfg = NetworkConfig::new(self.network.hidden, self.network.layers, layout.features(), layout.outputs());
        if self.network.bias {
            cfg.bias = BiasMode::Full;
        }
        cfg
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            clip_norm: t.clip_norm,
            window: t.window,
            batch_patches: t.batch_patches,
            validation_fraction: t.validation_fraction,
            seed,
        }
    }

    pub fn rollout_plan(&self) -> RolloutPlan {
        let t = &self.training;
        RolloutPlan { spacing: t.rollout_spacing, horizon: t.rollout_horizon, max_error: t.rollout_max_error }
    }

    pub fn dnnmg_config(&self) -> DnnMgConfig {
        DnnMgConfig {
            coarse_level: self.discretization.coarse_level,
            policy: FallbackPolicy { max_newton: self.dnnmg.max_newton },
        }
    }

    /// Short geometry description stored with datasets.
    pub fn geometry_label(&self) -> String {
        let g = &self.geometry;
        format!(
            "channel {}x{} ellipse center ({}, {}) semi-axes ({}, {})",
            g.channel_length, g.channel_height, g.obstacle_center[0], g.obstacle_center[1], g.obstacle_semi_axes[0], g.obstacle_semi_axes[1]
        )
    }
}
