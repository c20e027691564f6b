use super::features::FeatureLayout;
use super::gru::GruStack;
use super::predict::Network;
use super::{BiasMode, NetworkConfig};
use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"DNNMGCKP";
const VERSION: u32 = 1;

/// Writes a network in a portable format; values are stored as `f64`.
pub fn write_checkpoint<T: Real>(w: &mut impl Write, net: &Network<T>) -> Result<()> {
    let c = net.config();
    let mut e = Encoder::new(MAGIC, VERSION);
    for v in [c.hidden, c.layers, c.features, c.outputs] {
        e.u64(v as u64);
    }
    e.u8(match c.bias {
        BiasMode::None => 0,
        BiasMode::Full => 1,
    });
    e.u64(net.layout_hash);
    e.f64(net.output_scale.to_f64_lossy());
    e.f64s(net.input_mean.iter().map(|v| v.to_f64_lossy()));
    e.f64s(net.input_std.iter().map(|v| v.to_f64_lossy()));
    e.u64(net.stack.num_params() as u64);
    e.f64s(net.stack.params().iter().map(|v| v.to_f64_lossy()));
    e.finish(w)
}

pub fn read_checkpoint<T: Real>(r: &mut impl Read) -> Result<Network<T>> {
    let mut d = Decoder::new(r, MAGIC, VERSION)?;
    let mut dims = [0usize; 4];
    for v in &mut dims {
        *v = d.len()?;
    }
    let bias = match d.u8()? {
        0 => BiasMode::None,
        1 => BiasMode::Full,
        b => return Err(Error::Format(format!("unknown bias mode {b}"))),
    };
    let config = NetworkConfig {
        hidden: dims[0],
        layers: dims[1],
        features: dims[2],
        outputs: dims[3],
        bias,
    };
    config.validate()?;
    let layout_hash = d.u64()?;
    let output_scale = T::lit(d.f64()?);
    let lit = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
    let input_mean = lit(d.f64s(config.features)?);
    let input_std = lit(d.f64s(config.features)?);
    let n = d.len()?;
    let params = lit(d.f64s(n)?);
    d.finish()?;
    let stack = GruStack::from_params(config, params)?;
    Ok(Network {
        stack,
        input_mean,
        input_std,
        output_scale,
        layout_hash,
    })
}

impl<T: Real> Network<T> {
    /// Network for `layout` with the given shape and zero parameters.
    pub fn zeros(layout: &FeatureLayout, hidden: usize, layers: usize) -> Result<Self> {
        let cfg = NetworkConfig::new(hidden, layers, layout.features(), layout.outputs());
        Network::new(GruStack::zeros(cfg)?, layout)
    }
}
