//! Binary network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "UDNNCKPT"
//! version  u32      1
//! layers   u32
//! per layer: kind u8 (0 dense, 1 conv1d, 2 dropout), activation u8,
//!            dense:   fan_in u32, fan_out u32
//!            conv1d:  length u32, in_channels u32, filters u32, kernel u32
//!            dropout: rate f64
//! per parameter tensor, in layer order: ndim u32, dims u64 x ndim,
//!            values f64 x prod(dims)
//! ```

use std::io::{Read, Write};

use super::layers::Activation;
use super::network::{Layer, LayerSpec, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"UDNNCKPT";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn usize_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} does not fit the header")))
}

pub fn save(net: &Network, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, usize_u32(net.layers.len())?)?;
    for layer in &net.layers {
        match layer.spec {
            LayerSpec::Dense {
                fan_in,
                fan_out,
                activation,
            } => {
                w.write_all(&[0, activation.code()])?;
                put_u32(w, usize_u32(fan_in)?)?;
                put_u32(w, usize_u32(fan_out)?)?;
            }
            LayerSpec::Conv1d {
                length,
                in_channels,
                filters,
                kernel,
                activation,
            } => {
                w.write_all(&[1, activation.code()])?;
                for v in [length, in_channels, filters, kernel] {
                    put_u32(w, usize_u32(v)?)?;
                }
            }
            LayerSpec::Dropout { rate } => {
                w.write_all(&[2, Activation::None.code()])?;
                w.write_all(&rate.to_le_bytes())?;
            }
        }
    }
    for p in net.params() {
        put_u32(w, usize_u32(p.shape().len())?)?;
        for &d in p.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        write_f64s(w, p.data())?;
    }
    Ok(())
}

pub fn load(r: &mut impl Read) -> Result<Network> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let n = get_u32(r)? as usize;
    let mut specs = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = get_u8(r)?;
        let activation = Activation::from_code(get_u8(r)?)?;
        specs.push(match kind {
            0 => LayerSpec::Dense {
                fan_in: get_u32(r)? as usize,
                fan_out: get_u32(r)? as usize,
                activation,
            },
            1 => LayerSpec::Conv1d {
                length: get_u32(r)? as usize,
                in_channels: get_u32(r)? as usize,
                filters: get_u32(r)? as usize,
                kernel: get_u32(r)? as usize,
                activation,
            },
            2 => LayerSpec::Dropout {
                rate: read_f64s(r, 1)?[0],
            },
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        });
    }
    let mut layers = Vec::with_capacity(n);
    for spec in specs {
        let count = match spec {
            LayerSpec::Dropout { .. } => 0,
            _ => 2,
        };
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let ndim = get_u32(r)? as usize;
            let shape = (0..ndim).map(|_| get_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().product();
            params.push(Tensor::new(shape, read_f64s(r, len)?)?);
        }
        layers.push(Layer { spec, params });
    }
    let net = Network { layers };
    // re-validates widths against the stored parameters
    for layer in &net.layers {
        let expect: Vec<Vec<usize>> = match layer.spec {
            LayerSpec::Dense { fan_in, fan_out, .. } => vec![vec![fan_in, fan_out], vec![fan_out]],
            LayerSpec::Conv1d { in_channels, filters, kernel, .. } => vec![vec![kernel, in_channels, filters], vec![filters]],
            LayerSpec::Dropout { .. } => vec![],
        };
        let got: Vec<Vec<usize>> = layer.params.iter().map(|p| p.shape().to_vec()).collect();
        if expect != got {
            return Err(Error::Format(format!("parameter shapes {got:?} do not match {:?}", layer.spec)));
        }
    }
    Ok(net)
}
