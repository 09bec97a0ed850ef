//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FPEC" | u32 header_len | header JSON (header_len bytes)
//! per layer: u64 payload_len | payload
//! ```
//!
//! A layer payload is a run of f64 values: the weights (row-major `out × in`), the
//! bias (`out`, when present), the 0/1 mask (`out × in`), then the normalization
//! gain and shift (`out` each) for normalized hidden layers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FpeError, Result};
use crate::math::Matrix;
use crate::net::{LayerNormParams, MaskedLayer, MlpModel, OutputKind};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FPEC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub dims: Vec<usize>,
    pub bias: Vec<bool>,
    pub layer_norm: Vec<bool>,
    pub output_kind: OutputKind,
    pub seed: u64,
    pub weight_nnz: usize,
    pub nonzero_params: usize,
}

impl CheckpointHeader {
    fn of(model: &MlpModel) -> Self {
        CheckpointHeader {
            schema_version: CHECKPOINT_VERSION,
            dims: model.dims(),
            bias: model.layers.iter().map(|l| l.bias.is_some()).collect(),
            layer_norm: model.norms.iter().map(Option::is_some).collect(),
            output_kind: model.output_kind,
            seed: model.seed,
            weight_nnz: model.weight_nnz(),
            nonzero_params: model.nonzero_param_count(),
        }
    }
}

pub fn encode_model(model: &MlpModel) -> Result<Vec<u8>> {
    model.validate()?;
    let header = serde_json::to_vec(&CheckpointHeader::of(model))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (i, layer) in model.layers.iter().enumerate() {
        let mut values: Vec<f64> = layer.weights.data().to_vec();
        if let Some(b) = &layer.bias {
            values.extend_from_slice(b);
        }
        values.extend_from_slice(layer.mask.data());
        if let Some(Some(n)) = model.norms.get(i) {
            values.extend_from_slice(&n.gain);
            values.extend_from_slice(&n.shift);
        }
        out.extend_from_slice(&((values.len() * 8) as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FpeError::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(FpeError::format(0, "not a model checkpoint (bad magic)"));
    }
    let header_len = cur.u32("header length")? as usize;
    let header_at = cur.pos as u64;
    let header: CheckpointHeader = serde_json::from_slice(cur.take(header_len, "header")?)
        .map_err(|e| FpeError::format(header_at, format!("header: {e}")))?;
    if header.schema_version != CHECKPOINT_VERSION {
        return Err(FpeError::format(
            header_at,
            format!("unsupported checkpoint version {}", header.schema_version),
        ));
    }
    let n_layers = header.dims.len().saturating_sub(1);
    if n_layers < 2 || header.bias.len() != n_layers || header.layer_norm.len() != n_layers - 1 {
        return Err(FpeError::format(header_at, "header dims and flags disagree"));
    }

    let mut layers = Vec::with_capacity(n_layers);
    let mut norms = Vec::with_capacity(n_layers - 1);
    for i in 0..n_layers {
        let (fan_in, fan_out) = (header.dims[i], header.dims[i + 1]);
        let has_norm = i < n_layers - 1 && header.layer_norm[i];
        let expected = 2 * fan_in * fan_out
            + if header.bias[i] { fan_out } else { 0 }
            + if has_norm { 2 * fan_out } else { 0 };
        let at = cur.pos as u64;
        let len = cur.u64("layer length")?;
        if len != (expected * 8) as u64 {
            return Err(FpeError::format(
                at,
                format!("layer {i} payload is {len} bytes, expected {}", expected * 8),
            ));
        }
        let weights = Matrix::from_vec(fan_out, fan_in, cur.f64s(fan_in * fan_out, "weights")?)?;
        let bias = if header.bias[i] {
            Some(cur.f64s(fan_out, "bias")?)
        } else {
            None
        };
        let mask_at = cur.pos as u64;
        let mask = Matrix::from_vec(fan_out, fan_in, cur.f64s(fan_in * fan_out, "mask")?)?;
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(FpeError::format(mask_at, format!("layer {i} mask is not binary")));
        }
        if i < n_layers - 1 {
            norms.push(if has_norm {
                Some(LayerNormParams {
                    gain: cur.f64s(fan_out, "norm gain")?,
                    shift: cur.f64s(fan_out, "norm shift")?,
                })
            } else {
                None
            });
        }
        let layer = MaskedLayer { weights, bias, mask };
        if !layer.mask_consistent() {
            return Err(FpeError::format(at, format!("layer {i} has weights at masked positions")));
        }
        layers.push(layer);
    }
    if cur.pos != bytes.len() {
        return Err(FpeError::format(cur.pos as u64, "trailing bytes after last layer"));
    }
    let model = MlpModel {
        layers,
        norms,
        output_kind: header.output_kind,
        seed: header.seed,
    };
    model
        .validate()
        .map_err(|e| FpeError::format(header_at, e.to_string()))?;
    if model.weight_nnz() != header.weight_nnz || model.nonzero_param_count() != header.nonzero_params {
        return Err(FpeError::format(header_at, "non-zero counts disagree with the header"));
    }
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    decode_model(&fs::read(path)?)
}
