use crate::error::{Error, Result};
use crate::neural::{Network, StepCache};
use crate::scalar::Real;

/// `ℒ = Σ ‖target − (baseline + d)‖²` over all records.
pub fn compute_loss<T: Real>(d: &[T], targets: &[T], baselines: &[T]) -> Result<T> {
    if d.len() != targets.len() || d.len() != baselines.len() {
        return Err(Error::dim("loss operands", targets.len(), d.len().min(baselines.len())));
    }
    Ok(d.iter()
        .zip(targets)
        .zip(baselines)
        .map(|((&d, &t), &b)| (t - (b + d)).powi(2))
        .sum())
}

/// A batch of `batch` patch sequences over `steps` time steps. `inputs` are
/// raw features (`steps × batch × F`), `gaps` are `target − baseline`
/// (`steps × batch × O`).
#[derive(Clone, Copy, Debug)]
pub struct SequenceBatch<'a, T> {
    pub steps: usize,
    pub batch: usize,
    pub inputs: &'a [T],
    pub gaps: &'a [T],
}

/// Loss of the sequence and its exact gradient w.r.t. all parameters of the
/// stack, back-propagated through windows of `truncation` steps. `hidden`
/// holds the initial states on entry and the final states on exit; gradients
/// do not flow across window boundaries. The gradient is added to `grad`.
pub fn sequence_gradient<T: Real>(
    net: &Network<T>,
    seq: &SequenceBatch<'_, T>,
    hidden: &mut [Vec<T>],
    truncation: usize,
    grad: &mut [T],
) -> Result<T> {
    let cfg = *net.config();
    let (f, o, b) = (cfg.features, cfg.outputs, seq.batch);
    if seq.inputs.len() != seq.steps * b * f {
        return Err(Error::dim("sequence inputs", seq.steps * b * f, seq.inputs.len()));
    }
    if seq.gaps.len() != seq.steps * b * o {
        return Err(Error::dim("sequence targets", seq.steps * b * o, seq.gaps.len()));
    }
    if grad.len() != net.stack.num_params() {
        return Err(Error::dim("gradient", net.stack.num_params(), grad.len()));
    }
    if truncation == 0 {
        return Err(Error::Config("truncation length must be at least 1".into()));
    }
    let s = net.output_scale;
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut start = 0;
    while start < seq.steps {
        let end = (start + truncation).min(seq.steps);
        let mut caches = Vec::with_capacity(end - start);
        let mut d_outs = Vec::with_capacity(end - start);
        for t in start..end {
            let mut x = seq.inputs[t * b * f..(t + 1) * b * f].to_vec();
            net.normalize(&mut x);
            let mut cache = StepCache::default();
            let y = net.stack.step(&x, b, hidden, Some(&mut cache));
            let gap = &seq.gaps[t * b * o..(t + 1) * b * o];
            let mut dy = Vec::with_capacity(b * o);
            for (yk, &g) in y.iter().zip(gap) {
                let e = g - s * *yk;
                loss += e * e;
                dy.push(-two * s * e);
            }
            caches.push(cache);
            d_outs.push(dy);
        }
        let mut d_hidden = vec![vec![T::zero(); b * cfg.hidden]; cfg.layers];
        for (cache, dy) in caches.iter().zip(&d_outs).rev() {
            net.stack.backward_step(cache, dy, &mut d_hidden, grad);
        }
        start = end;
    }
    if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("loss or gradient".into()));
    }
    Ok(loss)
}
