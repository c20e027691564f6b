use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use dnnmg_core::dnnmg::{dnnmg_run, generate_dataset, train_with_rollouts, write_report_csv, Correction, DnnMgOutput};
use dnnmg_core::evaluation::{
    functional_divergence, functional_drag_lift, phase_align, prolongate_trajectory, relative_error_series, window_mean,
    write_errors_csv, write_functionals_csv, FunctionalSeries,
};
use dnnmg_core::fem::Trajectory;
use dnnmg_core::neural::{read_checkpoint, write_checkpoint, FeatureLayout, Network};
use dnnmg_core::newton::{run_plain, write_step_log};
use dnnmg_core::training::{train_network, write_loss_csv, EpochLog, TrainingDataset};
use dnnmg_core::{Discretization, DiscretizationF64};

use crate::config::Config;
use crate::csvio::{write_columns, write_file};
use crate::manifest::{sha256_file, RunManifest};

pub const REFERENCE: &str = "reference.traj";
pub const BASELINE: &str = "baseline.traj";
pub const BASELINE_COARSE: &str = "baseline_coarse.traj";
pub const DNNMG: &str = "dnnmg.traj";
pub const DNNMG_COARSE: &str = "dnnmg_coarse.traj";
pub const DATASET: &str = "dataset.bin";
pub const CHECKPOINT: &str = "checkpoint.bin";

#[derive(Debug, Parser)]
#[command(name = "dnnmg", version, about = "Multigrid Navier-Stokes solver with a learned fine-level correction")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration, or a manifest of an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for evaluation; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, global = true, default_value = "out")]
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Classical run on the fine level L+1.
    Reference,
    /// Coarse-level run. By default the two-level pipeline without a
    /// correction; `--plain` runs the classical method on level L alone.
    Baseline {
        #[arg(long)]
        plain: bool,
    },
    /// Teacher-forced training data from a reference trajectory.
    GenData {
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Trains on the teacher-forced dataset, then runs the configured rounds
    /// of on-policy data aggregation against the reference.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    RunDnnmg {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use a network with all parameters zero.
        #[arg(long, conflicts_with_all = ["checkpoint", "oracle_inject"])]
        zero_network: bool,
        /// Inject the reference solution as the correction.
        #[arg(long)]
        oracle_inject: bool,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Functionals and errors of a trajectory against the reference.
    Evaluate {
        #[arg(long)]
        candidate: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Wall time and network-evaluation share of MG(L), DNN-MG and MG(L+1).
    Bench {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        skip_reference: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Reference => "reference",
            Command::Baseline { .. } => "baseline",
            Command::GenData { .. } => "gen-data",
            Command::Train { .. } => "train",
            Command::RunDnnmg { .. } => "run-dnnmg",
            Command::Evaluate { .. } => "evaluate",
            Command::Bench { .. } => "bench",
        }
    }
}

struct Ctx {
    cfg: Config,
    common: CommonArgs,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.common.output_dir.join(name)
    }

    fn input_or(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out(default))
    }

    fn note_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn discretization(&self) -> Result<DiscretizationF64> {
        let l = self.cfg.discretization.coarse_level;
        Ok(Discretization::new(self.cfg.geometry(), l + 1, self.cfg.discretization.degree)?)
    }

    fn read_trajectory(&mut self, path: &Path) -> Result<Trajectory<f64>> {
        self.note_input(path)?;
        let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
        Trajectory::read(&mut r).with_context(|| format!("reading trajectory {}", path.display()))
    }

    fn write_trajectory(&mut self, name: &str, t: &Trajectory<f64>) -> Result<()> {
        let path = self.out(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        t.write(&mut w)?;
        w.flush()?;
        self.artifacts.push(path);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.out(name);
        write_file(&path, f)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn read_network(&mut self, path: &Path) -> Result<Network<f64>> {
        self.note_input(path)?;
        let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
        let net: Network<f64> = read_checkpoint(&mut r).with_context(|| format!("reading checkpoint {}", path.display()))?;
        net.check_layout(&FeatureLayout::for_degree(self.cfg.discretization.degree))?;
        Ok(net)
    }
}

/// Runs one command and writes its manifest to `<output-dir>/<command>.manifest.toml`.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.validate()?;
    ensure!(cli.common.threads >= 1, "--threads must be at least 1");
    std::fs::create_dir_all(&cli.common.output_dir)
        .with_context(|| format!("creating {}", cli.common.output_dir.display()))?;
    let mut ctx = Ctx { cfg, common: cli.common.clone(), inputs: BTreeMap::new(), artifacts: Vec::new() };
    let start = Instant::now();
    match &cli.command {
        Command::Reference => reference(&mut ctx)?,
        Command::Baseline { plain } => baseline(&mut ctx, *plain)?,
        Command::GenData { reference } => gen_data(&mut ctx, reference)?,
        Command::Train { dataset, reference } => train(&mut ctx, dataset, reference)?,
        Command::RunDnnmg { checkpoint, zero_network, oracle_inject, reference } => {
            run_dnnmg(&mut ctx, checkpoint, *zero_network, *oracle_inject, reference)?
        }
        Command::Evaluate { candidate, reference } => evaluate(&mut ctx, candidate, reference)?,
        Command::Bench { checkpoint, skip_reference } => bench(&mut ctx, checkpoint, *skip_reference)?,
    }
    log::info!("{} finished in {:.1} s", cli.command.name(), start.elapsed().as_secs_f64());
    let mut artifacts = BTreeMap::new();
    for p in &ctx.artifacts {
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        artifacts.insert(name, sha256_file(p)?);
    }
    let manifest = RunManifest {
        command: cli.command.name().into(),
        config_path: cli.common.config.as_ref().map(|p| p.display().to_string()),
        seed: cli.common.seed,
        threads: cli.common.threads,
        output_dir: cli.common.output_dir.display().to_string(),
        inputs: ctx.inputs,
        artifacts,
        config: ctx.cfg,
    };
    manifest.write(&cli.common.output_dir.join(format!("{}.manifest.toml", cli.command.name())))
}

fn reference(ctx: &mut Ctx) -> Result<()> {
    let disc = ctx.discretization()?;
    let params = ctx.cfg.problem();
    let settings = ctx.cfg.solver_settings()?;
    let fine = ctx.cfg.discretization.coarse_level + 1;
    let (traj, log) = run_plain(&disc, &params, fine, ctx.cfg.flow.steps, ctx.cfg.flow.stride, &settings)?;
    ctx.write_trajectory(REFERENCE, &traj)?;
    ctx.write_csv("reference_steps.csv", |w| Ok(write_step_log(w, &log)?))
}

fn baseline(ctx: &mut Ctx, plain: bool) -> Result<()> {
    let disc = ctx.discretization()?;
    let params = ctx.cfg.problem();
    let settings = ctx.cfg.solver_settings()?;
    let (steps, stride) = (ctx.cfg.flow.steps, ctx.cfg.flow.stride);
    if plain {
        let (traj, log) = run_plain(&disc, &params, ctx.cfg.discretization.coarse_level, steps, stride, &settings)?;
        ctx.write_trajectory(BASELINE_COARSE, &traj)?;
        ctx.write_trajectory(BASELINE, &prolongate_trajectory(&disc, &traj, traj.level + 1)?)?;
        ctx.write_csv("baseline_steps.csv", |w| Ok(write_step_log(w, &log)?))
    } else {
        let out = dnnmg_run(&disc, &params, &settings, ctx.cfg.dnnmg_config(), Correction::None, steps, stride)?;
        write_pipeline_outputs(ctx, &out, BASELINE, BASELINE_COARSE, "baseline_report.csv")
    }
}

fn write_pipeline_outputs(ctx: &mut Ctx, out: &DnnMgOutput<f64>, fine: &str, coarse: &str, report: &str) -> Result<()> {
    ctx.write_trajectory(fine, &out.fine)?;
    ctx.write_trajectory(coarse, &out.coarse)?;
    ctx.write_csv(report, |w| Ok(write_report_csv(w, &out.reports)?))?;
    let failed = out.reports.iter().filter(|r| !r.converged).count();
    ensure!(failed == 0, "{failed} steps did not converge");
    Ok(())
}

fn gen_data(ctx: &mut Ctx, reference: &Option<PathBuf>) -> Result<()> {
    let disc = ctx.discretization()?;
    let params = ctx.cfg.problem();
    let settings = ctx.cfg.solver_settings()?;
    let path = ctx.input_or(reference, REFERENCE);
    let reference = ctx.read_trajectory(&path)?;
    let label = ctx.cfg.geometry_label();
    let ds = generate_dataset(&disc, &params, &settings, ctx.cfg.dnnmg_config(), &reference, ctx.cfg.flow.steps, label)?;
    let path = ctx.out(DATASET);
    let mut w = BufWriter::new(File::create(&path)?);
    ds.write(&mut w)?;
    w.flush()?;
    ctx.artifacts.push(path);
    Ok(())
}

fn train(ctx: &mut Ctx, dataset: &Option<PathBuf>, reference: &Option<PathBuf>) -> Result<()> {
    let path = ctx.input_or(dataset, DATASET);
    ctx.note_input(&path)?;
    let mut r = BufReader::new(File::open(&path).with_context(|| format!("opening {}", path.display()))?);
    let data: TrainingDataset<f64> = TrainingDataset::read(&mut r).with_context(|| format!("reading dataset {}", path.display()))?;
    let layout = FeatureLayout::for_degree(ctx.cfg.discretization.degree);
    ensure!(data.layout_hash == layout.hash(), "dataset feature layout does not match the configured element degree");
    let net_cfg = ctx.cfg.network_config();
    let tc = ctx.cfg.train_config(ctx.common.seed);
    let rounds = ctx.cfg.training.rollout_rounds;
    let outcomes = if rounds == 0 {
        vec![train_network(&data, net_cfg, &tc)?]
    } else {
        let disc = ctx.discretization()?;
        let params = ctx.cfg.problem();
        let settings = ctx.cfg.solver_settings()?;
        let path = ctx.input_or(reference, REFERENCE);
        let reference = ctx.read_trajectory(&path)?;
        let cfg = ctx.cfg.dnnmg_config();
        train_with_rollouts(&disc, &params, &settings, cfg, &data, &reference, net_cfg, &tc, rounds, ctx.cfg.rollout_plan())?
    };
    let last = outcomes.last().expect("at least one round");
    log::info!("best epoch {} of {}", last.best_epoch, last.history.len());
    let ckpt = ctx.out(CHECKPOINT);
    let mut w = BufWriter::new(File::create(&ckpt)?);
    write_checkpoint(&mut w, &last.network)?;
    w.flush()?;
    ctx.artifacts.push(ckpt);
    let histories: Vec<&[EpochLog]> = outcomes.iter().map(|o| o.history.as_slice()).collect();
    ctx.write_csv("loss.csv", |w| Ok(write_loss_csv(w, &histories)?))
}

fn run_dnnmg(
    ctx: &mut Ctx,
    checkpoint: &Option<PathBuf>,
    zero_network: bool,
    oracle_inject: bool,
    reference: &Option<PathBuf>,
) -> Result<()> {
    let disc = ctx.discretization()?;
    let params = ctx.cfg.problem();
    let settings = ctx.cfg.solver_settings()?;
    let (steps, stride) = (ctx.cfg.flow.steps, ctx.cfg.flow.stride);
    let layout = FeatureLayout::for_degree(ctx.cfg.discretization.degree);
    let out = if oracle_inject {
        let path = ctx.input_or(reference, REFERENCE);
        let reference = ctx.read_trajectory(&path)?;
        dnnmg_run(&disc, &params, &settings, ctx.cfg.dnnmg_config(), Correction::Oracle(&reference), steps, stride)?
    } else {
        let net = if zero_network {
            Network::zeros(&layout, ctx.cfg.network.hidden, ctx.cfg.network.layers)?
        } else {
            let path = ctx.input_or(checkpoint, CHECKPOINT);
            ctx.read_network(&path)?
        };
        dnnmg_run(&disc, &params, &settings, ctx.cfg.dnnmg_config(), Correction::Network(&net), steps, stride)?
    };
    let fallbacks = out.reports.iter().filter(|r| r.fallback).count();
    let inactive = out.reports.iter().filter(|r| !r.prediction_active).count();
    log::info!("{fallbacks} fallback steps, prediction off on {inactive} steps");
    write_pipeline_outputs(ctx, &out, DNNMG, DNNMG_COARSE, "dnnmg_report.csv")
}

/// Functionals of every stored state; states are independent, so they are
/// evaluated in parallel.
pub fn functionals(disc: &DiscretizationF64, cfg: &Config, traj: &Trajectory<f64>) -> Result<FunctionalSeries> {
    let space = disc.space(traj.level)?;
    let params = cfg.problem();
    let rows: Vec<(f64, f64, f64)> = traj
        .states
        .par_iter()
        .map(|x| -> Result<(f64, f64, f64)> {
            let div = functional_divergence(space, x)?;
            let (d, l) = functional_drag_lift(space, &params, x)?;
            Ok((div, d, l))
        })
        .collect::<Result<_>>()?;
    Ok(FunctionalSeries {
        times: traj.times.clone(),
        divergence: rows.iter().map(|r| r.0).collect(),
        drag: rows.iter().map(|r| r.1).collect(),
        lift: rows.iter().map(|r| r.2).collect(),
    })
}

/// Window averages written by `evaluate`.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub velocity_error: f64,
    pub pressure_error: f64,
    pub divergence: f64,
    pub reference_divergence: f64,
    pub drag: f64,
    pub lift_delay: Option<f64>,
}

pub fn summarize(cfg: &Config, cand: &FunctionalSeries, reference: &FunctionalSeries, errors: &dnnmg_core::evaluation::ErrorSeries) -> Summary {
    let w = (cfg.evaluation.window[0], cfg.evaluation.window[1]);
    let mean = |t: &[f64], v: &[f64]| window_mean(t, v, w).unwrap_or(f64::NAN);
    Summary {
        velocity_error: mean(&errors.times, &errors.velocity),
        pressure_error: mean(&errors.times, &errors.pressure),
        divergence: mean(&cand.times, &cand.divergence),
        reference_divergence: mean(&reference.times, &reference.divergence),
        drag: mean(&cand.times, &cand.drag),
        lift_delay: phase_align(&reference.times, &reference.lift, &cand.lift, w).delay,
    }
}

fn evaluate(ctx: &mut Ctx, candidate: &Option<PathBuf>, reference: &Option<PathBuf>) -> Result<()> {
    let disc = ctx.discretization()?;
    let cand_path = ctx.input_or(candidate, DNNMG);
    let ref_path = ctx.input_or(reference, REFERENCE);
    let mut cand = ctx.read_trajectory(&cand_path)?;
    let reference = ctx.read_trajectory(&ref_path)?;
    if cand.level < reference.level {
        cand = prolongate_trajectory(&disc, &cand, reference.level)?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(ctx.common.threads).build()?;
    let (fc, fr) = pool.install(|| -> Result<_> { Ok((functionals(&disc, &ctx.cfg, &cand)?, functionals(&disc, &ctx.cfg, &reference)?)) })?;
    let errors = relative_error_series(&cand, &reference)?;
    let stem = cand_path.file_stem().map_or("candidate".into(), |s| s.to_string_lossy().into_owned());
    ctx.write_csv(&format!("{stem}_functionals.csv"), |w| Ok(write_functionals_csv(w, &fc)?))?;
    ctx.write_csv("reference_functionals.csv", |w| Ok(write_functionals_csv(w, &fr)?))?;
    ctx.write_csv(&format!("{stem}_errors.csv"), |w| Ok(write_errors_csv(w, &errors)?))?;
    let window = (ctx.cfg.evaluation.window[0], ctx.cfg.evaluation.window[1]);
    let aligned = phase_align(&fr.times, &fr.lift, &fc.lift, window);
    if aligned.delay.is_none() {
        log::warn!("no lift maximum in the evaluation window; series not aligned");
    }
    ctx.write_csv(&format!("{stem}_lift_aligned.csv"), |w| {
        write_columns(w, &["t", "reference_lift", "aligned_lift"], &[&fr.times, &fr.lift, &aligned.aligned])
    })?;
    let s = summarize(&ctx.cfg, &fc, &fr, &errors);
    log::info!("{stem}: mean velocity error {:.4e}, mean J_div {:.4e}", s.velocity_error, s.divergence);
    ctx.write_csv(&format!("{stem}_summary.csv"), |w| {
        writeln!(w, "velocity_error,pressure_error,divergence,reference_divergence,drag,lift_delay")?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.velocity_error,
            s.pressure_error,
            s.divergence,
            s.reference_divergence,
            s.drag,
            s.lift_delay.map_or(String::new(), |d| d.to_string())
        )?;
        Ok(())
    })
}

/// One row of the timing table.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub runtime: f64,
    pub network: f64,
}

impl BenchRow {
    pub fn network_share(&self) -> f64 {
        if self.runtime > 0.0 {
            100.0 * self.network / self.runtime
        } else {
            0.0
        }
    }
}

pub fn write_bench_csv(w: &mut dyn Write, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "method,runtime_s,nn_eval_s,nn_eval_pct")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.method, r.runtime, r.network, r.network_share())?;
    }
    Ok(())
}

fn bench(ctx: &mut Ctx, checkpoint: &Option<PathBuf>, skip_reference: bool) -> Result<()> {
    let disc = ctx.discretization()?;
    let params = ctx.cfg.problem();
    let settings = ctx.cfg.solver_settings()?;
    let steps = ctx.cfg.flow.steps;
    let l = ctx.cfg.discretization.coarse_level;
    let path = ctx.input_or(checkpoint, CHECKPOINT);
    let net = ctx.read_network(&path)?;
    let mut rows = Vec::new();
    let t = Instant::now();
    run_plain(&disc, &params, l, steps, steps.max(1), &settings)?;
    rows.push(BenchRow { method: format!("MG({l})"), runtime: t.elapsed().as_secs_f64(), network: 0.0 });
    let t = Instant::now();
    let out = dnnmg_run(&disc, &params, &settings, ctx.cfg.dnnmg_config(), Correction::Network(&net), steps, steps.max(1))?;
    rows.push(BenchRow {
        method: format!("DNN-MG({}+1)", l),
        runtime: t.elapsed().as_secs_f64(),
        network: out.reports.iter().map(|r| r.times.network).sum(),
    });
    if !skip_reference {
        let t = Instant::now();
        run_plain(&disc, &params, l + 1, steps, steps.max(1), &settings)?;
        rows.push(BenchRow { method: format!("MG({})", l + 1), runtime: t.elapsed().as_secs_f64(), network: 0.0 });
    }
    for r in &rows {
        log::info!("{}: {:.2} s, network {:.3} s ({:.2} %)", r.method, r.runtime, r.network, r.network_share());
    }
    ctx.write_csv("bench.csv", |w| write_bench_csv(w, &rows))
}

/// Errors out unless both files hold the same trajectory bit for bit.
pub fn same_trajectory(a: &Path, b: &Path) -> Result<bool> {
    let read = |p: &Path| -> Result<Trajectory<f64>> {
        Ok(Trajectory::read(&mut BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?)
    };
    let (x, y) = (read(a)?, read(b)?);
    if x.steps != y.steps || x.level != y.level {
        bail!("trajectories {} and {} are sampled differently", a.display(), b.display());
    }
    Ok(x.states.iter().flatten().zip(y.states.iter().flatten()).all(|(p, q)| p.to_bits() == q.to_bits())
        && x.times.iter().zip(&y.times).all(|(p, q)| p.to_bits() == q.to_bits()))
}
