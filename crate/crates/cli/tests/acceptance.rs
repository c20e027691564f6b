//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. The desk-scale runs (criteria 6 and
//! 8 to 11) take tens of minutes.

#[path = "../../core/tests/support/mms.rs"]
mod mms;
#[path = "../../core/tests/support/transfer_oracle.rs"]
mod transfer_oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use dnnmg_cli::commands::same_trajectory;
use dnnmg_cli::{run, Cli, Config};
use dnnmg_core::dnnmg::{dnnmg_run, Correction};
use dnnmg_core::fem::{FlowState, InflowProfile, NonlinearSystem, ProblemParams};
use dnnmg_core::mesh::GeometryConfig;
use dnnmg_core::neural::{count_params, BiasMode, FeatureLayout, GruStack, Network, NetworkConfig};
use dnnmg_core::training::{compute_loss, sequence_gradient, SequenceBatch, TrainingDataset};
use dnnmg_core::Discretization;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn check(id: &str, name: &str, results: &mut Vec<bool>, f: impl FnOnce() -> Verdict) {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        verdict(false, format!("panicked: {msg}"))
    });
    let status = if v.pass { "PASS" } else { "FAIL" };
    println!("{status} [{id}] {name}: {} ({:.1} s)", v.detail, start.elapsed().as_secs_f64());
    results.push(v.pass);
}

fn param_counts() -> Verdict {
    let table = [(32, 1, 8544), (64, 1, 23232), (32, 2, 14688), (64, 2, 47808), (32, 3, 20832), (64, 3, 72384)];
    let got: Vec<usize> = table.iter().map(|&(m, l, _)| count_params(&NetworkConfig::new(m, l, 57, 18)).gru_only).collect();
    let want: Vec<usize> = table.iter().map(|t| t.2).collect();
    verdict(got == want, format!("got {got:?}, want {want:?}"))
}

fn tiny_loss(net: &Network<f64>, inputs: &[f64], gaps: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
    let seq = SequenceBatch { steps: 3, batch: 2, inputs, gaps };
    let mut hidden = vec![vec![0.1; 8]];
    let mut scratch = vec![0.0; net.stack.num_params()];
    let g = grad.unwrap_or(&mut scratch);
    sequence_gradient(net, &seq, &mut hidden, 3, g).unwrap()
}

fn gradient_check() -> Verdict {
    let cfg = NetworkConfig { hidden: 4, layers: 1, features: 6, outputs: 2, bias: BiasMode::None };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params: Vec<f64> = (0..GruStack::<f64>::zeros(cfg).unwrap().num_params()).map(|_| rng.gen_range(-0.8..0.8)).collect();
    let net = Network {
        stack: GruStack::from_params(cfg, params).unwrap(),
        input_mean: vec![0.0; 6],
        input_std: vec![1.0; 6],
        output_scale: 1.0,
        layout_hash: 0,
    };
    let inputs: Vec<f64> = (0..3 * 2 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gaps: Vec<f64> = (0..3 * 2 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut grad = vec![0.0; net.stack.num_params()];
    tiny_loss(&net, &inputs, &gaps, Some(&mut grad));
    let eps = 1e-3;
    let mut worst = 0.0f64;
    for i in 0..grad.len() {
        let at = |k: f64| {
            let mut p = net.clone();
            p.stack.params_mut()[i] += k * eps;
            tiny_loss(&p, &inputs, &gaps, None)
        };
        let fd = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * eps);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1e-6));
    }
    verdict(worst < 1e-5, format!("max relative error {worst:.2e} over {} parameters (limit 1e-5)", grad.len()))
}

fn transfer_identities() -> Verdict {
    let mut transpose = 0.0f64;
    for degree in [1, 2] {
        let d = Discretization::new(GeometryConfig::benchmark(), 2, degree).unwrap();
        for l in 0..2 {
            transpose = transpose.max(transfer_oracle::transpose_defect(d.transfer(l).unwrap()));
        }
    }
    let basis = [1, 2].map(transfer_oracle::basis_reproduction_defect);
    let pass = transpose == 0.0 && basis.iter().all(|&b| b < 1e-13);
    verdict(pass, format!("max |R - P^T| = {transpose:e}, basis reproduction defect Q1 {:.1e}, Q2 {:.1e} (limit 1e-13)", basis[0], basis[1]))
}

fn jacobian_consistency() -> Verdict {
    let disc = Discretization::new(GeometryConfig::benchmark(), 1, 1).unwrap();
    let space = disc.space(1).unwrap();
    let params = ProblemParams::channel(1000.0, 0.01, InflowProfile { max_velocity: 1.5, channel_height: 0.41, ramp_time: 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut prev = FlowState::zeros(space, 0.0);
    prev.values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let system = NonlinearSystem::crank_nicolson(space, &params, &prev).unwrap();
    let x: Vec<f64> = (0..space.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let jac = system.jacobian(&x).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let w: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&w).map(|(a, b)| a + s * b).collect() };
        let rp = system.residual(&shifted(eps)).unwrap();
        let rm = system.residual(&shifted(-eps)).unwrap();
        let jw = jac.mul_vec(&w);
        let num: f64 = rp.iter().zip(&rm).zip(&jw).map(|((p, m), j)| ((p - m) / (2.0 * eps) - j).powi(2)).sum::<f64>().sqrt();
        let den: f64 = jw.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    verdict(worst < 1e-6, format!("max relative error {worst:.2e} over 10 directions at eps 1e-5 (limit 1e-6)"))
}

fn orders() -> Verdict {
    let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&k| mms::temporal_error(k)).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let spatial = mms::spatial_errors(5);
    let rates: Vec<f64> = spatial.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = ratios.iter().all(|r| (3.4..=4.6).contains(r)) && rates.iter().all(|&r| r >= 1.8);
    verdict(pass, format!("CN error ratios {ratios:.3?} (want [3.4, 4.6]); Q1 L2 velocity rates {rates:.3?} (want >= 1.8)"))
}

fn loss_identities(dataset: &Path) -> Verdict {
    let data = TrainingDataset::<f64>::read(&mut std::io::BufReader::new(std::fs::File::open(dataset).unwrap())).unwrap();
    let (p, o) = (data.patches, data.outputs);
    let mut worst0 = 0.0f64;
    let mut worst_gap = 0.0f64;
    for s in (0..data.steps).step_by(97) {
        let targets = &data.targets[s * p * o..(s + 1) * p * o];
        let baselines: Vec<f64> = (0..p).flat_map(|q| data.baseline(s, q).to_vec()).collect();
        let mut direct = 0.0;
        for (t, b) in targets.iter().zip(&baselines) {
            direct += (t - b) * (t - b);
        }
        let l0 = compute_loss(&vec![0.0; p * o], targets, &baselines).unwrap();
        worst0 = worst0.max((l0 - direct).abs() / direct);
        let gap: Vec<f64> = targets.iter().zip(&baselines).map(|(t, b)| t - b).collect();
        worst_gap = worst_gap.max(compute_loss(&gap, targets, &baselines).unwrap() / direct);
    }
    verdict(
        worst0 < 1e-12 && worst_gap < 1e-20,
        format!("L(d=0) relative deviation {worst0:.1e} (limit 1e-12); L(d=gap)/L(0) {worst_gap:.1e}"),
    )
}

struct Desk {
    root: PathBuf,
    config: PathBuf,
    config16: PathBuf,
}

impl Desk {
    fn cli(&self, dir: &str, config: &Path, args: &[&str]) -> anyhow::Result<()> {
        let out = self.root.join(dir);
        let mut argv: Vec<String> = ["dnnmg", "--config"].iter().map(|s| s.to_string()).collect();
        argv.push(config.display().to_string());
        argv.push("--output-dir".into());
        argv.push(out.display().to_string());
        argv.extend(args.iter().map(|s| s.to_string()));
        let start = Instant::now();
        let r = run(Cli::try_parse_from(argv)?);
        eprintln!("  {dir}: {} done in {:.0} s", args.join(" "), start.elapsed().as_secs_f64());
        r
    }

    fn path(&self, dir: &str, file: &str) -> String {
        self.root.join(dir).join(file).display().to_string()
    }
}

fn csv_rows(path: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(path: &str, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name} in {path}"));
    csv_rows(path).iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect()
}

/// Training losses of one round of a `loss.csv`, the last round by default.
fn final_round(path: &str, round: Option<f64>) -> Vec<f64> {
    let rounds = column(path, "round");
    let loss = column(path, "train_loss");
    let want = round.unwrap_or_else(|| rounds.iter().cloned().fold(0.0, f64::max));
    rounds.iter().zip(&loss).filter(|(r, _)| **r == want).map(|(_, l)| *l).collect()
}

fn main() {
    let mut results = Vec::new();
    check("1", "parameter counts", &mut results, param_counts);
    check("2", "BPTT gradient vs finite differences", &mut results, gradient_check);
    check("3", "transfer identities", &mut results, transfer_identities);
    check("4", "Jacobian consistency", &mut results, jacobian_consistency);
    check("5", "temporal and spatial order", &mut results, orders);

    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let cfg = Config::default();
    let config = root.join("desk.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    let mut cfg16 = cfg.clone();
    cfg16.network.hidden = 16;
    let config16 = root.join("desk_m16.toml");
    std::fs::write(&config16, cfg16.to_toml()).unwrap();
    let desk = Desk { root, config, config16 };
    eprintln!("desk runs in {}", desk.root.display());

    let reference = desk.path("ref", "reference.traj");
    let pipeline = catch_unwind(AssertUnwindSafe(|| -> anyhow::Result<()> {
        desk.cli("ref", &desk.config, &["reference"])?;
        desk.cli("plain", &desk.config, &["baseline", "--plain"])?;
        desk.cli("plain", &desk.config, &["evaluate", "--candidate", &desk.path("plain", "baseline.traj"), "--reference", &reference])?;
        desk.cli("data", &desk.config, &["gen-data", "--reference", &reference])?;
        let dataset = desk.path("data", "dataset.bin");
        desk.cli("m16", &desk.config16, &["train", "--dataset", &dataset, "--reference", &reference])?;
        desk.cli("m32", &desk.config, &["train", "--dataset", &dataset, "--reference", &reference])?;
        desk.cli("m32", &desk.config, &["run-dnnmg"])?;
        desk.cli("m32", &desk.config, &["evaluate", "--candidate", &desk.path("m32", "dnnmg.traj"), "--reference", &reference])?;
        Ok(())
    }));
    let pipeline_error = match pipeline {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(format!("{e:#}")),
        Err(_) => Some("desk pipeline panicked".into()),
    };
    if let Some(e) = &pipeline_error {
        eprintln!("desk pipeline failed: {e}");
    }

    check("6", "zero network equals the coarse baseline bitwise (1050 steps)", &mut results, || {
        desk.cli("pipe", &desk.config, &["baseline"]).unwrap();
        desk.cli("zero", &desk.config, &["run-dnnmg", "--zero-network"]).unwrap();
        let fine = same_trajectory(Path::new(&desk.path("pipe", "baseline.traj")), Path::new(&desk.path("zero", "dnnmg.traj"))).unwrap();
        let coarse =
            same_trajectory(Path::new(&desk.path("pipe", "baseline_coarse.traj")), Path::new(&desk.path("zero", "dnnmg_coarse.traj"))).unwrap();
        verdict(fine && coarse, format!("fine trajectories identical: {fine}, coarse trajectories identical: {coarse}"))
    });
    check("7", "loss identities", &mut results, || loss_identities(Path::new(&desk.path("data", "dataset.bin"))));

    let desk_ok = || {
        if let Some(e) = &pipeline_error {
            panic!("desk pipeline failed: {e}");
        }
    };
    check("8a", "training loss drops 10x from epoch 1 (m=32, final round)", &mut results, || {
        desk_ok();
        let loss = final_round(&desk.path("m32", "loss.csv"), None);
        let (first, last) = (loss[0], *loss.last().unwrap());
        verdict(first >= 10.0 * last, format!("epoch 1 {first:.3e}, final {last:.3e}, ratio {:.1}", first / last))
    });
    check("8b", "DNN-MG velocity error <= MG(L) over the window", &mut results, || {
        desk_ok();
        let dnn = column(&desk.path("m32", "dnnmg_summary.csv"), "velocity_error")[0];
        let base = column(&desk.path("plain", "baseline_summary.csv"), "velocity_error")[0];
        verdict(dnn <= base, format!("mean relative velocity error DNN-MG {dnn:.4}, MG(L) {base:.4}"))
    });
    check("8c", "m=32 final training loss <= m=16 on the teacher-forced round", &mut results, || {
        desk_ok();
        let last = |dir: &str, round| *final_round(&desk.path(dir, "loss.csv"), round).last().unwrap();
        let (t32, t16) = (last("m32", Some(0.0)), last("m16", Some(0.0)));
        let (f32_, f16) = (last("m32", None), last("m16", None));
        verdict(t32 <= t16, format!("teacher round m=32 {t32:.4e}, m=16 {t16:.4e}; final round m=32 {f32_:.4e}, m=16 {f16:.4e}"))
    });
    check("9", "DNN-MG J_div <= 2x MG(L) over the window", &mut results, || {
        desk_ok();
        let dnn = column(&desk.path("m32", "dnnmg_summary.csv"), "divergence")[0];
        let base = column(&desk.path("plain", "baseline_summary.csv"), "divergence")[0];
        verdict(dnn <= 2.0 * base, format!("mean J_div DNN-MG {dnn:.4e}, MG(L) {base:.4e}, ratio {:.3}", dnn / base))
    });
    check("10", "fallback guard survives an adversarial network (1050 steps)", &mut results, || {
        let cfg = Config::default();
        let disc = Discretization::new(cfg.geometry(), cfg.discretization.coarse_level + 1, 1).unwrap();
        let params = cfg.problem();
        let settings = cfg.solver_settings().unwrap();
        let layout = FeatureLayout::for_degree(1);
        let mut net = Network::<f64>::zeros(&layout, cfg.network.hidden, cfg.network.layers).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for p in net.stack.params_mut() {
            *p = rng.gen_range(-100.0..100.0);
        }
        net.output_scale = 1.0;
        match dnnmg_run(&disc, &params, &settings, cfg.dnnmg_config(), Correction::Network(&net), cfg.flow.steps, 50) {
            Ok(out) => {
                let fallbacks = out.reports.iter().filter(|r| r.fallback).count();
                let first = out.reports.iter().position(|r| r.fallback).map(|i| i + 1);
                let converged = out.reports.iter().all(|r| r.converged);
                let pass = out.reports.len() == cfg.flow.steps && converged && fallbacks > 0;
                verdict(pass, format!("{} steps, all converged: {converged}, {fallbacks} fallbacks, first at step {first:?}", out.reports.len()))
            }
            Err(e) => verdict(false, format!("run aborted: {e}")),
        }
    });
    check("11", "network evaluation share < 10% (m=32)", &mut results, || {
        desk_ok();
        let report = desk.path("m32", "dnnmg_report.csv");
        let nn: f64 = column(&report, "network_s").iter().sum();
        let total: f64 = column(&report, "total_s").iter().sum();
        verdict(nn < 0.1 * total, format!("network {nn:.2} s of {total:.2} s ({:.2} %)", 100.0 * nn / total))
    });

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
