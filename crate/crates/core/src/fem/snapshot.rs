use super::FlowState;
use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"DNNMGSTA";
const VERSION: u32 = 1;

/// Sequence of system vectors on one level, e.g. a simulation trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub level: usize,
    pub degree: usize,
    pub steps: Vec<usize>,
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(level: usize, degree: usize) -> Self {
        Self {
            level,
            degree,
            steps: Vec::new(),
            times: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, step: usize, state: &FlowState<T>) -> Result<()> {
        if state.level != self.level {
            return Err(Error::Level(format!("state on level {} pushed to trajectory on level {}", state.level, self.level)));
        }
        if let Some(first) = self.states.first() {
            if first.len() != state.values.len() {
                return Err(Error::dim("trajectory state", first.len(), state.values.len()));
            }
        }
        self.steps.push(step);
        self.times.push(state.time);
        self.states.push(state.values.clone());
        Ok(())
    }

    /// State recorded for time step `step`, if any.
    pub fn at_step(&self, step: usize) -> Option<&[T]> {
        self.steps.binary_search(&step).ok().map(|i| self.states[i].as_slice())
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let mut e = Encoder::new(MAGIC, VERSION);
        e.u64(self.level as u64);
        e.u64(self.degree as u64);
        e.u64(self.len() as u64);
        e.u64(self.states.first().map_or(0, |s| s.len()) as u64);
        for i in 0..self.len() {
            e.u64(self.steps[i] as u64);
            e.f64(self.times[i].to_f64_lossy());
            e.f64s(self.states[i].iter().map(|v| v.to_f64_lossy()));
        }
        e.finish(w)
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut d = Decoder::new(r, MAGIC, VERSION)?;
        let level = d.len()?;
        let degree = d.len()?;
        let count = d.len()?;
        let width = d.len()?;
        let mut t = Self::new(level, degree);
        for _ in 0..count {
            t.steps.push(d.len()?);
            t.times.push(T::lit(d.f64()?));
            t.states.push(d.f64s(width)?.into_iter().map(T::lit).collect());
        }
        d.finish()?;
        Ok(t)
    }
}
