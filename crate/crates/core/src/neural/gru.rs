use super::{BiasMode, NetworkConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameters of a stacked GRU with a linear head, stored in one flat vector
/// (per layer `W_ih`, `W_hh`, optional `b_ih`, `b_hh`; then `W_out`, `b_out`).
/// Gate rows are ordered reset, update, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct GruStack<T> {
    pub config: NetworkConfig,
    params: Vec<T>,
    offsets: Vec<LayerOffsets>,
    head: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerOffsets {
    w_ih: usize,
    w_hh: usize,
    b_ih: Option<usize>,
    b_hh: Option<usize>,
}

/// Forward quantities of one layer at one step, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct LayerCache<T> {
    pub input: Vec<T>,
    pub h_prev: Vec<T>,
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub n: Vec<T>,
    /// `W_hn h + b_hn` before the reset gate is applied.
    pub hn: Vec<T>,
}

#[derive(Clone, Debug, Default)]
pub struct StepCache<T> {
    pub batch: usize,
    pub layers: Vec<LayerCache<T>>,
    pub top: Vec<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> GruStack<T> {
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let m = config.hidden;
        let mut at = 0;
        let mut offsets = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let w_ih = at;
            at += 3 * m * config.layer_input(l);
            let w_hh = at;
            at += 3 * m * m;
            let (b_ih, b_hh) = match config.bias {
                BiasMode::None => (None, None),
                BiasMode::Full => {
                    at += 6 * m;
                    (Some(at - 6 * m), Some(at - 3 * m))
                }
            };
            offsets.push(LayerOffsets { w_ih, w_hh, b_ih, b_hh });
        }
        let head = at;
        at += config.outputs * m + config.outputs;
        Ok(Self {
            config,
            params: vec![T::zero(); at],
            offsets,
            head,
        })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<T>) -> Result<Self> {
        let mut s = Self::zeros(config)?;
        if params.len() != s.params.len() {
            return Err(Error::dim("GRU parameter vector", s.params.len(), params.len()));
        }
        s.params = params;
        Ok(s)
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn w_ih(&self, l: usize) -> &[T] {
        let o = self.offsets[l].w_ih;
        &self.params[o..o + 3 * self.config.hidden * self.config.layer_input(l)]
    }

    fn w_hh(&self, l: usize) -> &[T] {
        let o = self.offsets[l].w_hh;
        let m = self.config.hidden;
        &self.params[o..o + 3 * m * m]
    }

    fn bias(&self, at: Option<usize>) -> Option<&[T]> {
        at.map(|o| &self.params[o..o + 3 * self.config.hidden])
    }

    pub fn w_out(&self) -> &[T] {
        &self.params[self.head..self.head + self.config.outputs * self.config.hidden]
    }

    pub fn b_out(&self) -> &[T] {
        let o = self.head + self.config.outputs * self.config.hidden;
        &self.params[o..o + self.config.outputs]
    }

    /// Head parameters `(W_out, b_out)` as one mutable range.
    pub fn head_mut(&mut self) -> &mut [T] {
        let h = self.head;
        &mut self.params[h..]
    }

    /// One time step for a batch of `batch` independent sequences. `x` is
    /// `batch × F`, `hidden[l]` is `batch × m` and is overwritten with the new
    /// state. Returns the head output (`batch × O`).
    pub fn step(&self, x: &[T], batch: usize, hidden: &mut [Vec<T>], mut cache: Option<&mut StepCache<T>>) -> Vec<T> {
        let cfg = &self.config;
        let m = cfg.hidden;
        assert_eq!(x.len(), batch * cfg.features, "GRU input size");
        assert_eq!(hidden.len(), cfg.layers, "GRU hidden layers");
        if let Some(c) = cache.as_deref_mut() {
            c.batch = batch;
            c.layers.clear();
        }
        let mut input = x.to_vec();
        let mut gi = vec![T::zero(); batch * 3 * m];
        let mut gh = vec![T::zero(); batch * 3 * m];
        for l in 0..cfg.layers {
            let nin = cfg.layer_input(l);
            let h = &mut hidden[l];
            assert_eq!(h.len(), batch * m, "GRU hidden size");
            T::gemm(batch, nin, 3 * m, T::one(), &input, false, self.w_ih(l), true, T::zero(), &mut gi);
            T::gemm(batch, m, 3 * m, T::one(), h, false, self.w_hh(l), true, T::zero(), &mut gh);
            let (bi, bh) = (self.bias(self.offsets[l].b_ih), self.bias(self.offsets[l].b_hh));
            let mut lc = LayerCache {
                input: Vec::new(),
                h_prev: Vec::new(),
                r: vec![T::zero(); batch * m],
                z: vec![T::zero(); batch * m],
                n: vec![T::zero(); batch * m],
                hn: vec![T::zero(); batch * m],
            };
            let h_prev = h.clone();
            for b in 0..batch {
                let gi_b = &gi[b * 3 * m..(b + 1) * 3 * m];
                let gh_b = &gh[b * 3 * m..(b + 1) * 3 * m];
                for j in 0..m {
                    let bias = |v: Option<&[T]>, k: usize| v.map_or(T::zero(), |v| v[k]);
                    let r = sigmoid(gi_b[j] + gh_b[j] + bias(bi, j) + bias(bh, j));
                    let z = sigmoid(gi_b[m + j] + gh_b[m + j] + bias(bi, m + j) + bias(bh, m + j));
                    let hn = gh_b[2 * m + j] + bias(bh, 2 * m + j);
                    let n = (gi_b[2 * m + j] + bias(bi, 2 * m + j) + r * hn).tanh();
                    let k = b * m + j;
                    h[k] = (T::one() - z) * n + z * h_prev[k];
                    lc.r[k] = r;
                    lc.z[k] = z;
                    lc.n[k] = n;
                    lc.hn[k] = hn;
                }
            }
            let next = h.clone();
            if let Some(c) = cache.as_deref_mut() {
                lc.input = std::mem::take(&mut input);
                lc.h_prev = h_prev;
                c.layers.push(lc);
            }
            input = next;
        }
        let o = cfg.outputs;
        let mut out = vec![T::zero(); batch * o];
        for b in 0..batch {
            out[b * o..(b + 1) * o].copy_from_slice(self.b_out());
        }
        T::gemm(batch, m, o, T::one(), &input, false, self.w_out(), true, T::one(), &mut out);
        if let Some(c) = cache {
            c.top = input;
        }
        out
    }

    /// Reverse-mode sweep through one cached step. `d_out` is the loss
    /// gradient w.r.t. the head output; `d_hidden[l]` holds on entry the
    /// gradient w.r.t. the new hidden state of layer `l` arriving from later
    /// steps and on exit the gradient w.r.t. the previous hidden state.
    /// Parameter gradients are accumulated into `grad`.
    pub fn backward_step(&self, cache: &StepCache<T>, d_out: &[T], d_hidden: &mut [Vec<T>], grad: &mut [T]) {
        let cfg = &self.config;
        let (m, o, batch) = (cfg.hidden, cfg.outputs, cache.batch);
        assert_eq!(grad.len(), self.params.len());
        // Head.
        let h = self.head;
        {
            let (gw, gb) = grad[h..].split_at_mut(o * m);
            T::gemm(o, batch, m, T::one(), d_out, true, &cache.top, false, T::one(), gw);
            for b in 0..batch {
                for k in 0..o {
                    gb[k] += d_out[b * o + k];
                }
            }
        }
        let mut d_above = vec![T::zero(); batch * m];
        T::gemm(batch, o, m, T::one(), d_out, false, self.w_out(), false, T::zero(), &mut d_above);
        let mut da = vec![T::zero(); batch * 3 * m];
        let mut dg = vec![T::zero(); batch * 3 * m];
        for l in (0..cfg.layers).rev() {
            let lc = &cache.layers[l];
            let nin = cfg.layer_input(l);
            let dh = &mut d_hidden[l];
            for k in 0..batch * m {
                let dht = dh[k] + d_above[k];
                let (r, z, n, hn) = (lc.r[k], lc.z[k], lc.n[k], lc.hn[k]);
                let dn = dht * (T::one() - z);
                let dz = dht * (lc.h_prev[k] - n);
                let dan = dn * (T::one() - n * n);
                let dr = dan * hn;
                let (b, j) = (k / m, k % m);
                let row = b * 3 * m;
                da[row + j] = dr * r * (T::one() - r);
                da[row + m + j] = dz * z * (T::one() - z);
                da[row + 2 * m + j] = dan;
                dg[row + j] = da[row + j];
                dg[row + m + j] = da[row + m + j];
                dg[row + 2 * m + j] = dan * r;
                dh[k] = dht * z;
            }
            let off = self.offsets[l];
            T::gemm(3 * m, batch, nin, T::one(), &da, true, &lc.input, false, T::one(), &mut grad[off.w_ih..off.w_ih + 3 * m * nin]);
            T::gemm(3 * m, batch, m, T::one(), &dg, true, &lc.h_prev, false, T::one(), &mut grad[off.w_hh..off.w_hh + 3 * m * m]);
            if let (Some(bi), Some(bh)) = (off.b_ih, off.b_hh) {
                for b in 0..batch {
                    for k in 0..3 * m {
                        grad[bi + k] += da[b * 3 * m + k];
                        grad[bh + k] += dg[b * 3 * m + k];
                    }
                }
            }
            // dh_prev += dg · W_hh
            T::gemm(batch, 3 * m, m, T::one(), &dg, false, self.w_hh(l), false, T::one(), dh);
            if l > 0 {
                let mut dx = vec![T::zero(); batch * nin];
                T::gemm(batch, 3 * m, nin, T::one(), &da, false, self.w_ih(l), false, T::zero(), &mut dx);
                d_above = dx;
            }
        }
    }
}

/// Single-sequence step: `(d, h')` from input `x` and stacked hidden `h`
/// (`layers × m`, layer-major).
pub fn gru_forward<T: Real>(p: &GruStack<T>, x: &[T], h: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let cfg = &p.config;
    if x.len() != cfg.features {
        return Err(Error::dim("GRU input", cfg.features, x.len()));
    }
    if h.len() != cfg.layers * cfg.hidden {
        return Err(Error::dim("GRU hidden state", cfg.layers * cfg.hidden, h.len()));
    }
    let mut hidden: Vec<Vec<T>> = h.chunks(cfg.hidden).map(|c| c.to_vec()).collect();
    let d = p.step(x, 1, &mut hidden, None);
    Ok((d, hidden.concat()))
}
