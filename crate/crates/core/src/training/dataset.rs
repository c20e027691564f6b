use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"DNNMGDAT";
const VERSION: u32 = 1;

/// Run parameters recorded with a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub reynolds: f64,
    pub time_step: f64,
    pub degree: usize,
    pub coarse_level: usize,
    /// Free-form geometry description.
    pub geometry: String,
}

/// Per step and per patch: raw network features and the reference fine
/// velocity at the patch nodes. The prolongated coarse velocity the
/// correction is added to is the leading `O` features of each record.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingDataset<T> {
    pub steps: usize,
    pub patches: usize,
    pub features: usize,
    pub outputs: usize,
    pub layout_hash: u64,
    pub meta: DatasetMeta,
    pub times: Vec<T>,
    /// `steps × patches × features`.
    pub inputs: Vec<T>,
    /// `steps × patches × outputs`.
    pub targets: Vec<T>,
}

impl<T: Real> TrainingDataset<T> {
    pub fn new(patches: usize, features: usize, outputs: usize, layout_hash: u64, meta: DatasetMeta) -> Self {
        Self {
            steps: 0,
            patches,
            features,
            outputs,
            layout_hash,
            meta,
            times: Vec::new(),
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Appends one time step of `patches × F` inputs and `patches × O` targets.
    pub fn push_step(&mut self, time: T, inputs: &[T], targets: &[T]) -> Result<()> {
        if inputs.len() != self.patches * self.features {
            return Err(Error::dim("dataset inputs", self.patches * self.features, inputs.len()));
        }
        if targets.len() != self.patches * self.outputs {
            return Err(Error::dim("dataset targets", self.patches * self.outputs, targets.len()));
        }
        if !targets.iter().all(|v| v.is_finite()) || !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("dataset record at step {}", self.steps)));
        }
        self.times.push(time);
        self.inputs.extend_from_slice(inputs);
        self.targets.extend_from_slice(targets);
        self.steps += 1;
        Ok(())
    }

    /// Appends the steps of `other`, which must have the same shape and
    /// feature layout.
    pub fn append(&mut self, other: &TrainingDataset<T>) -> Result<()> {
        if (other.patches, other.features, other.outputs) != (self.patches, self.features, self.outputs) {
            return Err(Error::Config("appended dataset has a different shape".into()));
        }
        if other.layout_hash != self.layout_hash {
            return Err(Error::Config("appended dataset has a different feature layout".into()));
        }
        self.times.extend_from_slice(&other.times);
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        self.steps += other.steps;
        Ok(())
    }

    pub fn input(&self, step: usize, patch: usize) -> &[T] {
        let k = (step * self.patches + patch) * self.features;
        &self.inputs[k..k + self.features]
    }

    pub fn target(&self, step: usize, patch: usize) -> &[T] {
        let k = (step * self.patches + patch) * self.outputs;
        &self.targets[k..k + self.outputs]
    }

    /// Prolongated coarse velocity of a record.
    pub fn baseline(&self, step: usize, patch: usize) -> &[T] {
        &self.input(step, patch)[..self.outputs]
    }

    /// Steps `[0, split)` train and `[split, steps)` validate, with the last
    /// `fraction` of the steps held out.
    pub fn split(&self, fraction: f64) -> usize {
        let held = (self.steps as f64 * fraction).round() as usize;
        self.steps - held.min(self.steps)
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let mut e = Encoder::new(MAGIC, VERSION);
        for v in [self.steps, self.patches, self.features, self.outputs] {
            e.u64(v as u64);
        }
        e.u64(self.layout_hash);
        e.f64(self.meta.reynolds);
        e.f64(self.meta.time_step);
        e.u64(self.meta.degree as u64);
        e.u64(self.meta.coarse_level as u64);
        e.bytes(self.meta.geometry.as_bytes());
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        e.f64s(f(&self.times));
        e.f64s(f(&self.inputs));
        e.f64s(f(&self.targets));
        e.finish(w)
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut d = Decoder::new(r, MAGIC, VERSION)?;
        let (steps, patches, features, outputs) = (d.len()?, d.len()?, d.len()?, d.len()?);
        let layout_hash = d.u64()?;
        let reynolds = d.f64()?;
        let time_step = d.f64()?;
        let degree = d.len()?;
        let coarse_level = d.len()?;
        let geometry = String::from_utf8(d.bytes()?).map_err(|e| Error::Format(e.to_string()))?;
        let lit = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let times = lit(d.f64s(steps)?);
        let inputs = lit(d.f64s(steps * patches * features)?);
        let targets = lit(d.f64s(steps * patches * outputs)?);
        d.finish()?;
        Ok(Self {
            steps,
            patches,
            features,
            outputs,
            layout_hash,
            meta: DatasetMeta {
                reynolds,
                time_step,
                degree,
                coarse_level,
                geometry,
            },
            times,
            inputs,
            targets,
        })
    }
}
