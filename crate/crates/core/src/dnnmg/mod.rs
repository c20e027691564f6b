//! The two-level DNN-MG time loop: Newton-multigrid on the coarse level,
//! prolongation, a network correction on the fine level, and the next
//! right-hand side restricted back to the coarse level.

use std::io::Write;
use std::time::Instant;

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::fem::{build_rhs_next, dirichlet_values, FeSpace, FlowState, NonlinearSystem, ProblemParams, Trajectory};
use crate::mesh::{build_patches, PatchSet};
use crate::neural::{
    localize_velocity, patch_features, scatter_correction, FeatureLayout, Network, PatchHiddenStates,
};
use crate::newton::{solve_step_timed, NewtonStats, SolverSettings};
use crate::scalar::{norm2, Real};
use crate::neural::NetworkConfig;
use crate::training::{train_network, DatasetMeta, TrainConfig, TrainOutcome, TrainingDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FallbackPolicy {
    /// A corrected step whose Newton solve needs more iterations than this
    /// is redone without the correction.
    pub max_newton: usize,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        Self { max_newton: 10 }
    }
}

/// Whether the correction may be applied after a Newton solve with `stats`.
pub fn fallback_guard<T: Real>(stats: &NewtonStats<T>, policy: &FallbackPolicy) -> bool {
    stats.converged && !stats.diverged && stats.iterations <= policy.max_newton
}

/// Source of the fine-level velocity correction.
#[derive(Clone, Copy)]
pub enum Correction<'a, T> {
    /// `d = 0`: the coarse method with fine-level bookkeeping.
    None,
    Network(&'a Network<T>),
    /// `d` is the localized gap to a stored fine trajectory, which must hold
    /// every step.
    Oracle(&'a Trajectory<T>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DnnMgConfig {
    pub coarse_level: usize,
    pub policy: FallbackPolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepTimes {
    pub assembly: f64,
    pub linear_solve: f64,
    pub network: f64,
    pub transfer: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub prediction_active: bool,
    /// The corrected right-hand side was rejected and the step redone.
    pub fallback: bool,
    pub newton_iters: usize,
    pub gmres_iters: usize,
    pub converged: bool,
    pub correction_norm: f64,
    pub times: StepTimes,
}

/// Stepwise driver. After `n` calls to [`DnnMg::step`], `coarse()` is
/// `x^L_n` and `corrected()` is `P x^L_n + d_n` on the fine level.
#[derive(Clone)]
pub struct DnnMg<'a, T: Real> {
    disc: &'a Discretization<T>,
    params: &'a ProblemParams<T>,
    settings: &'a SolverSettings<T>,
    cfg: DnnMgConfig,
    correction: Correction<'a, T>,
    teacher: Option<&'a Trajectory<T>>,
    layout: FeatureLayout,
    patches: PatchSet<T>,
    hidden: Option<PatchHiddenStates<T>>,
    step: usize,
    coarse: FlowState<T>,
    corrected: FlowState<T>,
    /// `P x^L_n` with fine boundary values, kept for the fallback.
    uncorrected: Vec<T>,
    /// Fine right-hand side for the next step, built from `corrected`.
    rhs_fine: Vec<T>,
    corrected_last: bool,
    enabled: bool,
}

impl<'a, T: Real> DnnMg<'a, T> {
    pub fn new(
        disc: &'a Discretization<T>,
        params: &'a ProblemParams<T>,
        settings: &'a SolverSettings<T>,
        cfg: DnnMgConfig,
        correction: Correction<'a, T>,
    ) -> Result<Self> {
        params.validate()?;
        let l = cfg.coarse_level;
        let coarse_space = disc.space(l)?;
        let fine = disc.space(l + 1)?;
        let layout = FeatureLayout::for_degree(disc.degree);
        let patches = build_patches(&disc.hierarchy, fine)?;
        let hidden = match correction {
            Correction::Network(net) => {
                net.check_layout(&layout)?;
                Some(PatchHiddenStates::zeros(net.config(), patches.len()))
            }
            Correction::Oracle(reference) => {
                if reference.level != l + 1 {
                    return Err(Error::Level(format!("oracle trajectory on level {}, need {}", reference.level, l + 1)));
                }
                None
            }
            Correction::None => None,
        };
        let coarse = FlowState::zeros(coarse_space, T::zero());
        let mut uncorrected = disc.transfer(l)?.prolongate_system(&coarse.values);
        impose(fine, params, T::zero(), &mut uncorrected);
        let rhs_fine = build_rhs_next(fine, params, &uncorrected, T::zero(), params.time_step)?;
        let corrected = FlowState {
            level: l + 1,
            time: T::zero(),
            values: uncorrected.clone(),
        };
        Ok(Self {
            disc,
            params,
            settings,
            cfg,
            correction,
            teacher: None,
            layout,
            patches,
            hidden,
            step: 0,
            coarse,
            corrected,
            uncorrected,
            rhs_fine,
            corrected_last: false,
            enabled: true,
        })
    }

    pub fn coarse(&self) -> &FlowState<T> {
        &self.coarse
    }

    pub fn corrected(&self) -> &FlowState<T> {
        &self.corrected
    }

    pub fn patches(&self) -> &PatchSet<T> {
        &self.patches
    }

    pub fn hidden(&self) -> Option<&PatchHiddenStates<T>> {
        self.hidden.as_ref()
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Switches the correction on or off from the next step on; hidden
    /// states are kept while it is off.
    pub fn set_prediction(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    /// With a teacher the network keeps running, so its hidden states
    /// advance, but the applied correction is the gap to the teacher state.
    pub fn set_teacher(&mut self, teacher: Option<&'a Trajectory<T>>) -> Result<()> {
        if let Some(t) = teacher {
            let need = self.cfg.coarse_level + 1;
            if t.level != need {
                return Err(Error::Level(format!("teacher trajectory on level {}, need {need}", t.level)));
            }
        }
        self.teacher = teacher;
        Ok(())
    }

    /// Advances one time step. With a `recorder`, the step's network features
    /// and the recorder's reference velocity at the patch nodes are appended
    /// to its dataset.
    pub fn step(&mut self, recorder: Option<Recorder<'_, T>>) -> Result<StepReport> {
        let n = self.step + 1;
        self.advance(n, recorder).map_err(|e| e.at_step(n))
    }

    fn advance(&mut self, n: usize, recorder: Option<Recorder<'_, T>>) -> Result<StepReport> {
        let start = Instant::now();
        let mut times = StepTimes::default();
        let l = self.cfg.coarse_level;
        let fine = self.disc.space(l + 1)?;
        let transfer = self.disc.transfer(l)?;
        let k = self.params.time_step;

        let clock = Instant::now();
        let rhs_coarse = transfer.restrict_system(&self.rhs_fine);
        times.transfer += clock.elapsed().as_secs_f64();

        let mut capped = *self.settings;
        if self.corrected_last {
            capped.newton.max_iters = capped.newton.max_iters.min(self.cfg.policy.max_newton);
        }
        let first = solve_step_timed(self.disc, self.params, l, &self.coarse, Some(rhs_coarse), &capped);
        let accepted = match &first {
            Ok((x, s, _)) => !self.corrected_last || (fallback_guard(s, &self.cfg.policy) && x.is_finite()),
            Err(e) => {
                if self.corrected_last {
                    log::warn!("step {n}: corrected solve failed: {e}");
                }
                false
            }
        };
        let fallback = self.corrected_last && !accepted;
        let (next, stats) = if fallback {
            if let Ok((_, s, t)) = &first {
                log::warn!("step {n}: corrected right-hand side rejected after {} Newton iterations", s.iterations);
                times.assembly += t.assembly;
                times.linear_solve += t.linear;
            }
            let clock = Instant::now();
            self.rhs_fine = build_rhs_next(fine, self.params, &self.uncorrected, self.coarse.time, self.coarse.time + k)?;
            times.assembly += clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let rhs_coarse = transfer.restrict_system(&self.rhs_fine);
            times.transfer += clock.elapsed().as_secs_f64();
            let (x, s, t) = solve_step_timed(self.disc, self.params, l, &self.coarse, Some(rhs_coarse), self.settings)?;
            times.assembly += t.assembly;
            times.linear_solve += t.linear;
            (x, s)
        } else {
            let (x, s, t) = first?;
            times.assembly += t.assembly;
            times.linear_solve += t.linear;
            (x, s)
        };
        if stats.diverged || !next.is_finite() {
            return Err(Error::NonFinite(format!("Newton diverged on level {l}")));
        }
        if !stats.converged {
            log::warn!("step {n}: Newton stopped at residual {:e}", stats.final_residual().to_f64_lossy());
        }
        let tn = next.time;

        let clock = Instant::now();
        let mut v_tilde = transfer.prolongate_system(&next.values);
        impose(fine, self.params, tn, &mut v_tilde);
        times.transfer += clock.elapsed().as_secs_f64();

        let active = self.enabled && !fallback && fallback_guard(&stats, &self.cfg.policy);
        let wants_net = active && matches!(self.correction, Correction::Network(_));
        let mut features = None;
        if wants_net || recorder.is_some() {
            let clock = Instant::now();
            let system = NonlinearSystem::with_rhs(fine, self.params, tn, self.rhs_fine.clone())?;
            let residual = system.residual(&v_tilde)?;
            times.assembly += clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let x = patch_features(&self.layout, &self.patches, fine, &v_tilde, &residual, self.params.reynolds)?;
            times.network += clock.elapsed().as_secs_f64();
            features = Some(x);
        }
        let oracle = match (self.correction, self.teacher) {
            (_, Some(teacher)) => Some(teacher),
            (Correction::Oracle(reference), None) => Some(reference),
            _ => None,
        };
        let oracle_state = match oracle {
            Some(reference) => Some(
                reference
                    .at_step(n)
                    .ok_or_else(|| Error::Config(format!("oracle trajectory has no state for step {n}")))?,
            ),
            _ => None,
        };
        if let Some(rec) = recorder {
            if rec.reference.level != l + 1 {
                return Err(Error::Level(format!("recording reference on level {}, need {}", rec.reference.level, l + 1)));
            }
            let target_state = rec
                .reference
                .at_step(n)
                .ok_or_else(|| Error::Config(format!("recording reference has no state for step {n}")))?;
            let targets = localize_velocity(&self.patches, fine, target_state);
            rec.data.push_step(tn, features.as_deref().expect("features computed"), &targets)?;
        }

        let mut d = None;
        if active {
            match self.correction {
                Correction::Network(net) => {
                    let clock = Instant::now();
                    let mut x = features.take().expect("features computed");
                    net.normalize(&mut x);
                    let hidden = self.hidden.as_mut().expect("network has hidden states");
                    let local = net.step(&x, hidden, None);
                    times.network += clock.elapsed().as_secs_f64();
                    if self.teacher.is_none() {
                        d = Some(scatter_correction(&self.patches, fine, &local)?);
                    }
                }
                Correction::Oracle(_) | Correction::None => {}
            }
            if let (Some(reference), None) = (oracle_state, &d) {
                let gap: Vec<T> = reference.iter().zip(&v_tilde).map(|(r, v)| *r - *v).collect();
                d = Some(scatter_correction(&self.patches, fine, &localize_velocity(&self.patches, fine, &gap))?);
            }
        }
        let mut corrected = v_tilde.clone();
        let mut correction_norm = 0.0;
        if let Some(d) = &d {
            for (c, dv) in corrected.iter_mut().zip(d) {
                *c += *dv;
            }
            correction_norm = norm2(d).to_f64_lossy();
        }

        let clock = Instant::now();
        self.rhs_fine = build_rhs_next(fine, self.params, &corrected, tn, tn + k)?;
        times.assembly += clock.elapsed().as_secs_f64();

        self.corrected_last = d.is_some();
        self.uncorrected = v_tilde;
        self.corrected = FlowState {
            level: l + 1,
            time: tn,
            values: corrected,
        };
        self.coarse = next;
        self.step = n;
        times.total = start.elapsed().as_secs_f64();
        Ok(StepReport {
            step: n,
            time: tn.to_f64_lossy(),
            prediction_active: active && !matches!(self.correction, Correction::None),
            fallback,
            newton_iters: stats.iterations,
            gmres_iters: stats.linear_iterations,
            converged: stats.converged,
            correction_norm,
            times,
        })
    }
}

fn impose<T: Real>(space: &FeSpace<T>, params: &ProblemParams<T>, t: T, x: &mut [T]) {
    let g = dirichlet_values(space, params, t);
    for (i, m) in space.dirichlet_mask().into_iter().enumerate() {
        if m {
            x[i] = g[i];
        }
    }
}

/// Destination of training records: features of the visited states paired
/// with `reference` at the same step.
pub struct Recorder<'r, T> {
    pub data: &'r mut TrainingDataset<T>,
    pub reference: &'r Trajectory<T>,
}

/// Outputs of a complete run. Trajectories include the initial state.
#[derive(Clone, Debug)]
pub struct DnnMgOutput<T> {
    /// Corrected fine states `P x^L_n + d_n`.
    pub fine: Trajectory<T>,
    pub coarse: Trajectory<T>,
    pub reports: Vec<StepReport>,
}

/// Runs `steps` steps from rest, recording every `stride`-th state.
pub fn dnnmg_run<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    settings: &SolverSettings<T>,
    cfg: DnnMgConfig,
    correction: Correction<'_, T>,
    steps: usize,
    stride: usize,
) -> Result<DnnMgOutput<T>> {
    let mut run = DnnMg::new(disc, params, settings, cfg, correction)?;
    let l = cfg.coarse_level;
    let mut out = DnnMgOutput {
        fine: Trajectory::new(l + 1, disc.degree),
        coarse: Trajectory::new(l, disc.degree),
        reports: Vec::with_capacity(steps),
    };
    out.fine.push(0, run.corrected())?;
    out.coarse.push(0, run.coarse())?;
    for _ in 0..steps {
        let rep = run.step(None)?;
        if rep.step % stride.max(1) == 0 {
            out.fine.push(rep.step, run.corrected())?;
            out.coarse.push(rep.step, run.coarse())?;
        }
        if rep.step % 50 == 0 {
            log::info!("dnnmg step {} t={:.3} newton {} active {}", rep.step, rep.time, rep.newton_iters, rep.prediction_active);
        }
        out.reports.push(rep);
    }
    Ok(out)
}

/// Teacher-forced training data: the two-level pipeline is driven by the
/// reference (oracle correction) and each step's features are paired with the
/// reference fine velocity at the same time.
pub fn generate_dataset<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    settings: &SolverSettings<T>,
    cfg: DnnMgConfig,
    reference: &Trajectory<T>,
    steps: usize,
    geometry: String,
) -> Result<TrainingDataset<T>> {
    let mut run = DnnMg::new(disc, params, settings, cfg, Correction::Oracle(reference))?;
    let layout = FeatureLayout::for_degree(disc.degree);
    let meta = DatasetMeta {
        reynolds: params.reynolds.to_f64_lossy(),
        time_step: params.time_step.to_f64_lossy(),
        degree: disc.degree,
        coarse_level: cfg.coarse_level,
        geometry,
    };
    let mut ds = TrainingDataset::new(run.patches().len(), layout.features(), layout.outputs(), layout.hash(), meta);
    for _ in 0..steps {
        let rep = run.step(Some(Recorder { data: &mut ds, reference }))?;
        if rep.step % 50 == 0 {
            log::info!("dataset step {} t={:.3}", rep.step, rep.time);
        }
    }
    Ok(ds)
}

/// Where on-policy rollouts start and how far they run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutPlan {
    /// Steps between rollout starts along the teacher-forced trajectory.
    pub spacing: usize,
    /// Network-driven steps per rollout.
    pub horizon: usize,
    /// A rollout ends once its velocity error, relative to the largest
    /// reference velocity norm, exceeds this.
    pub max_error: f64,
}

/// On-policy training data. The pipeline follows the reference by teacher
/// forcing while the network runs alongside; every `spacing` steps a branch
/// is driven by the network's own corrections for up to `horizon` steps and
/// each visited state's features are paired with `reference` at the same
/// step. A branch also ends at its first failed step.
#[allow(clippy::too_many_arguments)]
pub fn generate_rollout_dataset<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    settings: &SolverSettings<T>,
    cfg: DnnMgConfig,
    net: &Network<T>,
    reference: &Trajectory<T>,
    steps: usize,
    plan: RolloutPlan,
    geometry: String,
) -> Result<TrainingDataset<T>> {
    if plan.spacing == 0 || plan.horizon == 0 {
        return Err(Error::Config("rollout spacing and horizon must be positive".into()));
    }
    let mut main = DnnMg::new(disc, params, settings, cfg, Correction::Network(net))?;
    main.set_teacher(Some(reference))?;
    let layout = FeatureLayout::for_degree(disc.degree);
    let meta = DatasetMeta {
        reynolds: params.reynolds.to_f64_lossy(),
        time_step: params.time_step.to_f64_lossy(),
        degree: disc.degree,
        coarse_level: cfg.coarse_level,
        geometry,
    };
    let mut ds = TrainingDataset::new(main.patches().len(), layout.features(), layout.outputs(), layout.hash(), meta);
    let nodes = disc.space(cfg.coarse_level + 1)?.num_nodes();
    let scale = reference
        .states
        .iter()
        .map(|x| norm2(&x[nodes..]).to_f64_lossy())
        .fold(0.0, f64::max);
    for start in 0..steps {
        if start % plan.spacing == 0 {
            let mut branch = main.clone();
            branch.set_teacher(None)?;
            let mut recorded = 0;
            while recorded < plan.horizon && branch.steps_done() < steps {
                let rep = match branch.step(Some(Recorder { data: &mut ds, reference })) {
                    Ok(rep) => rep,
                    Err(e) => {
                        log::warn!("rollout from step {start} stopped: {e}");
                        break;
                    }
                };
                recorded += 1;
                let target = reference.at_step(rep.step).expect("recorded step has a reference state");
                let diff: Vec<T> = branch.corrected().values[nodes..].iter().zip(&target[nodes..]).map(|(a, b)| *a - *b).collect();
                let err = norm2(&diff).to_f64_lossy() / scale;
                if err.is_nan() || err > plan.max_error {
                    break;
                }
            }
            log::info!("rollout from step {start}: {recorded} steps");
        }
        main.step(None)?;
    }
    Ok(ds)
}

/// Training with on-policy data aggregation. Round 0 trains on the
/// teacher-forced `teacher` set; every further round records rollouts of the
/// previous round's network, adds them to all earlier rollouts and trains a
/// fresh network on rollouts followed by `teacher`, so the validation tail
/// stays teacher-forced. Returns the outcome of every round.
#[allow(clippy::too_many_arguments)]
pub fn train_with_rollouts<T: Real>(
    disc: &Discretization<T>,
    params: &ProblemParams<T>,
    settings: &SolverSettings<T>,
    cfg: DnnMgConfig,
    teacher: &TrainingDataset<T>,
    reference: &Trajectory<T>,
    net_cfg: NetworkConfig,
    tc: &TrainConfig,
    rounds: usize,
    plan: RolloutPlan,
) -> Result<Vec<TrainOutcome<T>>> {
    let mut outcomes = vec![train_network(teacher, net_cfg, tc)?];
    let mut rollouts: Option<TrainingDataset<T>> = None;
    for round in 1..=rounds {
        let net = &outcomes.last().expect("round 0 trained").network;
        let fresh = generate_rollout_dataset(disc, params, settings, cfg, net, reference, teacher.steps, plan, teacher.meta.geometry.clone())?;
        log::info!("round {round}: {} rollout steps", fresh.steps);
        match rollouts.as_mut() {
            Some(r) => r.append(&fresh)?,
            None => rollouts = Some(fresh),
        }
        let mut data = rollouts.clone().expect("rollouts recorded");
        data.append(teacher)?;
        outcomes.push(train_network(&data, net_cfg, tc)?);
    }
    Ok(outcomes)
}

pub fn write_report_csv<W: Write + ?Sized>(w: &mut W, reports: &[StepReport]) -> Result<()> {
    writeln!(
        w,
        "step,t,prediction_active,fallback,newton_iters,gmres_iters,converged,correction_norm,\
         assembly_s,linear_solve_s,network_s,transfer_s,total_s"
    )?;
    for r in reports {
        let t = &r.times;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.time,
            u8::from(r.prediction_active),
            u8::from(r.fallback),
            r.newton_iters,
            r.gmres_iters,
            u8::from(r.converged),
            r.correction_norm,
            t.assembly,
            t.linear_solve,
            t.network,
            t.transfer,
            t.total
        )?;
    }
    Ok(())
}
