//! Model checkpoint file.
//!
//! Layout: magic `SVAE`, format version (u32 LE), header length (u32 LE),
//! a UTF-8 JSON header (config, metadata, per-stack layer descriptors),
//! then all parameters as little-endian f32 in declared layer order — per
//! block: weights row-major, bias, and for batch-normalized blocks gamma,
//! beta, running mean, running variance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, BatchNormLayer, Block, DenseStack, LinearLayer};

use super::{ModelMetadata, VaeConfig, VaeModel};

const MAGIC: &[u8; 4] = b"SVAE";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct BatchNormDesc {
    momentum: f64,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDesc {
    in_dim: usize,
    out_dim: usize,
    batchnorm: Option<BatchNormDesc>,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: VaeConfig,
    metadata: ModelMetadata,
    encoder: Vec<LayerDesc>,
    decoder: Vec<LayerDesc>,
}

fn describe(stack: &DenseStack) -> Vec<LayerDesc> {
    stack
        .blocks
        .iter()
        .map(|b| LayerDesc {
            in_dim: b.linear.in_dim(),
            out_dim: b.linear.out_dim(),
            batchnorm: b.norm.as_ref().map(|n| BatchNormDesc {
                momentum: n.momentum,
                eps: n.eps,
            }),
            activation: b.act,
        })
        .collect()
}

fn push_stack(stack: &DenseStack, out: &mut Vec<u8>) {
    let mut push = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for b in &stack.blocks {
        for &v in b.linear.w.iter() {
            push(v);
        }
        for &v in b.linear.b.iter() {
            push(v);
        }
        if let Some(n) = &b.norm {
            for arr in [&n.gamma, &n.beta, &n.running_mean, &n.running_var] {
                for &v in arr.iter() {
                    push(v);
                }
            }
        }
    }
}

fn stack_float_count(descs: &[LayerDesc]) -> usize {
    descs
        .iter()
        .map(|d| {
            let mut n = d.out_dim * d.in_dim + d.out_dim;
            if d.batchnorm.is_some() {
                n += 4 * d.out_dim;
            }
            n
        })
        .sum()
}

struct FloatReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FloatReader<'a> {
    fn next(&mut self) -> Result<f64> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Format("checkpoint payload truncated".into()));
        }
        let v = f32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v as f64)
    }
}

fn read_stack(descs: &[LayerDesc], reader: &mut FloatReader<'_>) -> Result<DenseStack> {
    let mut blocks = Vec::with_capacity(descs.len());
    for d in descs {
        let mut linear = LinearLayer::zeros(d.in_dim, d.out_dim);
        for v in linear.w.iter_mut() {
            *v = reader.next()?;
        }
        for v in linear.b.iter_mut() {
            *v = reader.next()?;
        }
        let norm = match &d.batchnorm {
            Some(bn) => {
                let mut layer = BatchNormLayer::new(d.out_dim, bn.momentum, bn.eps)?;
                for arr in [
                    &mut layer.gamma,
                    &mut layer.beta,
                    &mut layer.running_mean,
                    &mut layer.running_var,
                ] {
                    for v in arr.iter_mut() {
                        *v = reader.next()?;
                    }
                }
                Some(layer)
            }
            None => None,
        };
        blocks.push(Block {
            linear,
            norm,
            act: d.activation,
        });
    }
    Ok(DenseStack { blocks })
}

pub fn save(model: &VaeModel, path: &Path) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        metadata: model.metadata.clone(),
        encoder: describe(&model.encoder),
        decoder: describe(&model.decoder),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    push_stack(&model.encoder, &mut bytes);
    push_stack(&model.decoder, &mut bytes);
    crate::util::atomic_write(path, &bytes)
}

pub fn load(path: &Path) -> Result<VaeModel> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a model checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Format(format!(
            "{}: truncated checkpoint header",
            path.display()
        )));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::Format(format!("{}: header: {e}", path.display())))?;
    header.config.validate()?;

    let expected_floats = stack_float_count(&header.encoder) + stack_float_count(&header.decoder);
    let payload = &bytes[12 + header_len..];
    if payload.len() != expected_floats * 4 {
        return Err(Error::Format(format!(
            "{}: payload holds {} bytes, expected {}",
            path.display(),
            payload.len(),
            expected_floats * 4
        )));
    }
    let mut reader = FloatReader {
        bytes: payload,
        pos: 0,
    };
    let encoder = read_stack(&header.encoder, &mut reader)?;
    let decoder = read_stack(&header.decoder, &mut reader)?;
    Ok(VaeModel {
        config: header.config,
        encoder,
        decoder,
        metadata: header.metadata,
    })
}
