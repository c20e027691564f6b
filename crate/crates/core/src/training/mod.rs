//! Training data, the patch-local loss, truncated backpropagation through
//! time and the optimization loop.

mod dataset;
mod loss;

pub use dataset::{DatasetMeta, TrainingDataset};
pub use loss::{compute_loss, sequence_gradient, SequenceBatch};

use crate::error::{Error, Result};
use crate::neural::{GruStack, Network, NetworkConfig, PatchHiddenStates};
use crate::scalar::Real;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Truncated BPTT window in time steps.
    pub window: usize,
    /// Patch sequences per minibatch.
    pub batch_patches: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            window: 16,
            batch_patches: 64,
            validation_fraction: 0.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.batch_patches == 0 {
            return Err(Error::Config("window and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate must be ≥ 0 and clip norm > 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam with global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub clip_norm: T,
    pub step: u32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize, learning_rate: T, clip_norm: T) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            clip_norm,
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &mut [T]) {
        assert_eq!(params.len(), self.m.len());
        let norm = grad.iter().map(|g| *g * *g).sum::<T>().sqrt();
        if norm > self.clip_norm {
            let f = self.clip_norm / norm;
            grad.iter_mut().for_each(|g| *g *= f);
        }
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step as i32);
        let c2 = one - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Uniform `±1/√m` initialization of every parameter.
pub fn init_network<T: Real>(cfg: NetworkConfig, layout_hash: u64, rng: &mut impl Rng) -> Result<Network<T>> {
    let mut stack = GruStack::zeros(cfg)?;
    let a = 1.0 / (cfg.hidden as f64).sqrt();
    for p in stack.params_mut() {
        *p = T::lit(rng.gen_range(-a..a));
    }
    Ok(Network {
        stack,
        input_mean: vec![T::zero(); cfg.features],
        input_std: vec![T::one(); cfg.features],
        output_scale: T::one(),
        layout_hash,
    })
}

/// Per-feature mean and standard deviation and the RMS of the target gaps over
/// steps `[0, split)`. Constant features keep unit scale.
pub fn fit_normalization<T: Real>(net: &mut Network<T>, data: &TrainingDataset<T>, split: usize) {
    let f = data.features;
    let records = split * data.patches;
    if records == 0 {
        return;
    }
    let mut mean = vec![0.0f64; f];
    let mut sq = vec![0.0f64; f];
    let mut gap_sq = 0.0f64;
    for s in 0..split {
        for p in 0..data.patches {
            for (k, v) in data.input(s, p).iter().enumerate() {
                let v = v.to_f64_lossy();
                mean[k] += v;
                sq[k] += v * v;
            }
            for (t, b) in data.target(s, p).iter().zip(data.baseline(s, p)) {
                gap_sq += (*t - *b).to_f64_lossy().powi(2);
            }
        }
    }
    let n = records as f64;
    for k in 0..f {
        let m = mean[k] / n;
        let var = (sq[k] / n - m * m).max(0.0);
        let sd = var.sqrt();
        net.input_mean[k] = T::lit(m);
        net.input_std[k] = T::lit(if sd > 1e-12 * m.abs().max(1.0) { sd } else { 1.0 });
    }
    let rms = (gap_sq / (n * data.outputs as f64)).sqrt();
    net.output_scale = T::lit(if rms > 0.0 { rms } else { 1.0 });
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss per patch and step during the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation loss (or the last
    /// epoch when nothing is held out).
    pub network: Network<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

fn gather<T: Real>(data: &[T], width: usize, patches: usize, steps: std::ops::Range<usize>, ids: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(steps.len() * ids.len() * width);
    for s in steps {
        for &p in ids {
            let k = (s * patches + p) * width;
            out.extend_from_slice(&data[k..k + width]);
        }
    }
    out
}

fn gaps<T: Real>(data: &TrainingDataset<T>, steps: std::ops::Range<usize>, ids: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(steps.len() * ids.len() * data.outputs);
    for s in steps {
        for &p in ids {
            out.extend(data.target(s, p).iter().zip(data.baseline(s, p)).map(|(t, b)| *t - *b));
        }
    }
    out
}

/// Mean loss per record over steps `range`, running the network from zero
/// hidden states through all steps before it.
pub fn evaluate_loss<T: Real>(net: &Network<T>, data: &TrainingDataset<T>, range: std::ops::Range<usize>) -> Result<f64> {
    let mut hidden = PatchHiddenStates::zeros(net.config(), data.patches);
    let mut total = 0.0;
    let (f, o) = (data.features, data.outputs);
    for s in 0..range.end {
        let mut x = data.inputs[s * data.patches * f..(s + 1) * data.patches * f].to_vec();
        net.normalize(&mut x);
        let d = net.step(&x, &mut hidden, None);
        if s >= range.start {
            let t = &data.targets[s * data.patches * o..(s + 1) * data.patches * o];
            let b: Vec<T> = (0..data.patches).flat_map(|p| data.baseline(s, p).to_vec()).collect();
            total += compute_loss(&d, t, &b)?.to_f64_lossy();
        }
    }
    Ok(total / (range.len() * data.patches).max(1) as f64)
}

/// Trains a fresh network of shape `net_cfg` on `data`.
pub fn train_network<T: Real>(data: &TrainingDataset<T>, net_cfg: NetworkConfig, tc: &TrainConfig) -> Result<TrainOutcome<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut net = init_network(net_cfg, data.layout_hash, &mut rng)?;
    let split = data.split(tc.validation_fraction);
    fit_normalization(&mut net, data, split);
    train_from(net, data, tc, &mut rng)
}

/// Continues training `net` (normalization already fitted).
pub fn train_from<T: Real>(
    mut net: Network<T>,
    data: &TrainingDataset<T>,
    tc: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<TrainOutcome<T>> {
    tc.validate()?;
    let cfg = *net.config();
    if cfg.features != data.features || cfg.outputs != data.outputs {
        return Err(Error::Config("network shape does not match the dataset".into()));
    }
    if net.layout_hash != data.layout_hash {
        return Err(Error::Config("dataset feature layout differs from the network's".into()));
    }
    let split = data.split(tc.validation_fraction);
    if split == 0 {
        return Err(Error::Config("no training steps left after the validation split".into()));
    }
    let (f, m) = (data.features, cfg.hidden);
    let s2 = net.output_scale * net.output_scale;
    let mut adam = Adam::new(net.stack.num_params(), T::lit(tc.learning_rate), T::lit(tc.clip_norm));
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, Network<T>)> = None;
    let mut order: Vec<usize> = (0..data.patches).collect();
    for epoch in 1..=tc.epochs {
        let mut hidden = PatchHiddenStates::zeros(&cfg, data.patches);
        let mut total = 0.0;
        let mut start = 0;
        while start < split {
            let end = (start + tc.window).min(split);
            order.shuffle(rng);
            for ids in order.chunks(tc.batch_patches) {
                let b = ids.len();
                let inputs = gather(&data.inputs, f, data.patches, start..end, ids);
                let gap = gaps(data, start..end, ids);
                let mut h: Vec<Vec<T>> = hidden
                    .layers
                    .iter()
                    .map(|l| ids.iter().flat_map(|&p| l[p * m..(p + 1) * m].to_vec()).collect())
                    .collect();
                let seq = SequenceBatch { steps: end - start, batch: b, inputs: &inputs, gaps: &gap };
                let mut grad = vec![T::zero(); net.stack.num_params()];
                let loss = sequence_gradient(&net, &seq, &mut h, tc.window, &mut grad)
                    .map_err(|e| Error::NonFinite(format!("epoch {epoch}, steps {start}..{end}: {e}")))?;
                total += loss.to_f64_lossy();
                for (l, hl) in hidden.layers.iter_mut().zip(&h) {
                    for (i, &p) in ids.iter().enumerate() {
                        l[p * m..(p + 1) * m].copy_from_slice(&hl[i * m..(i + 1) * m]);
                    }
                }
                let scale = T::one() / (s2 * T::from_usize_lossy((end - start) * b));
                grad.iter_mut().for_each(|g| *g *= scale);
                adam.update(net.stack.params_mut(), &mut grad);
            }
            start = end;
        }
        let train_loss = total / (split * data.patches) as f64;
        let val_loss = if split < data.steps {
            Some(evaluate_loss(&net, data, split..data.steps)?)
        } else {
            None
        };
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");
        history.push(EpochLog { epoch, train_loss, val_loss });
        let score = val_loss.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().map_or(true, |(b, _, _)| score <= *b) {
            best = Some((score, epoch, net.clone()));
        }
    }
    let (_, best_epoch, network) = best.unwrap_or((0.0, 0, net));
    Ok(TrainOutcome { network, best_epoch, history })
}

/// Loss history with one block of rows per training round.
pub fn write_loss_csv<W: Write + ?Sized>(w: &mut W, rounds: &[&[EpochLog]]) -> Result<()> {
    writeln!(w, "round,epoch,train_loss,val_loss")?;
    for (k, history) in rounds.iter().enumerate() {
        for e in history.iter() {
            let val = e.val_loss.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{k},{},{},{}", e.epoch, e.train_loss, val)?;
        }
    }
    Ok(())
}
