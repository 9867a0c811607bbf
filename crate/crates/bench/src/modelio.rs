//! Binary model files.
//!
//! Layout: magic `DCTM`, format version (u32 LE), header length (u64 LE), a
//! JSON header describing the architecture and parameter shapes, every
//! parameter tensor as f64 LE in store order, then the SHA-256 of all
//! preceding bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dct_core::encoder::{DeepSetConfig, SetEncoder};
use dct_core::tensor::Tensor;
use dct_core::training::{ConditioningMode, EpochLog, GeneratorKind, TrainConfig, TransportModel};
use dct_core::transport::{OdeMethod, OdeSolverConfig};

use crate::BenchError;

pub const MAGIC: &[u8; 4] = b"DCTM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub generator: String,
    pub conditioning: String,
    pub dim: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub blocks: usize,
    pub normalize: bool,
    pub map_hidden: usize,
    pub noise_dim: usize,
    pub fm_sigma: f64,
    pub ode_atol: f64,
    pub ode_rtol: f64,
    pub ode_h0: Option<f64>,
    pub ode_max_steps: usize,
    pub onehot_centroids: Option<Vec<Vec<f64>>>,
    /// `(name, shape)` in store order.
    pub params: Vec<(String, Vec<usize>)>,
    /// `(epoch, steps, mean loss)`.
    pub log: Vec<(usize, usize, f64)>,
}

fn map_hidden(model: &TransportModel) -> usize {
    use dct_core::training::Generator;
    let mlp = match &model.generator {
        Generator::Map(m) => &m.mlp,
        Generator::Field(f) => &f.mlp,
    };
    mlp.layers[0].fan_out
}

impl ModelHeader {
    pub fn describe(model: &TransportModel) -> Self {
        let (d, enc) = match &model.encoder {
            SetEncoder::DeepSet(e) => (e.config.d_in, Some(e.config)),
            SetEncoder::OneHot(e) => (e.centroids[0].len(), None),
        };
        let centroids = match &model.encoder {
            SetEncoder::OneHot(e) => Some(e.centroids.clone()),
            SetEncoder::DeepSet(_) => None,
        };
        Self {
            generator: model.kind.name().into(),
            conditioning: model.conditioning.name().into(),
            dim: d,
            d_h: enc.map_or(0, |c| c.d_h),
            d_z: model.d_z(),
            blocks: enc.map_or(0, |c| c.blocks),
            normalize: enc.is_some_and(|c| c.normalize),
            map_hidden: map_hidden(model),
            noise_dim: model.noise_dim(),
            fm_sigma: model.fm_sigma,
            ode_atol: model.ode.atol,
            ode_rtol: model.ode.rtol,
            ode_h0: model.ode.h0,
            ode_max_steps: model.ode.max_steps,
            onehot_centroids: centroids,
            params: model.store.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect(),
            log: model.log.iter().map(|l| (l.epoch, l.steps, l.mean_loss)).collect(),
        }
    }

    /// Configuration that rebuilds the same architecture.
    pub fn train_config(&self) -> Result<TrainConfig, BenchError> {
        let mut cfg = TrainConfig::mvn(GeneratorKind::parse(&self.generator)?, ConditioningMode::parse(&self.conditioning)?);
        cfg.encoder = DeepSetConfig {
            d_in: self.dim,
            d_h: self.d_h.max(1),
            d_z: self.d_z,
            blocks: self.blocks,
            normalize: self.normalize,
        };
        cfg.map_hidden = self.map_hidden;
        cfg.stochastic = self.noise_dim > 0;
        cfg.noise_dim = (self.noise_dim > 0).then_some(self.noise_dim);
        cfg.fm_sigma = self.fm_sigma;
        cfg.ode = OdeSolverConfig {
            atol: self.ode_atol,
            rtol: self.ode_rtol,
            h0: self.ode_h0,
            max_steps: self.ode_max_steps,
            method: OdeMethod::Dopri5,
        };
        Ok(cfg)
    }
}

pub fn write_model<W: Write>(model: &TransportModel, mut w: W) -> Result<(), BenchError> {
    let header = serde_json::to_vec(&ModelHeader::describe(model)).map_err(|e| BenchError::Format(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + header.len() + 8 * model.store.num_scalars() + 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for (_, t) in model.store.iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    w.write_all(&buf)?;
    Ok(())
}

/// Hex SHA-256 trailer of a serialized model.
pub fn model_hash(model: &TransportModel) -> Result<String, BenchError> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    Ok(hex(&buf[buf.len() - 32..]))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_model<R: Read>(mut r: R) -> Result<TransportModel, BenchError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = |m: &str| BenchError::Format(m.into());
    if buf.len() < 16 + 32 || &buf[..4] != MAGIC {
        return Err(bad("not a model file"));
    }
    let (body, trailer) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(bad("content hash mismatch"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(BenchError::Format(format!("unsupported model version {version}")));
    }
    let hlen = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let hend = 16usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| bad("truncated header"))?;
    let header: ModelHeader = serde_json::from_slice(&body[16..hend]).map_err(|e| BenchError::Format(e.to_string()))?;

    let cfg = header.train_config()?;
    let mut model = TransportModel::init(&cfg, header.dim, header.onehot_centroids.clone())?;
    let layout: Vec<(String, Vec<usize>)> = model.store.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
    if layout != header.params {
        return Err(bad("parameter layout does not match the architecture"));
    }
    let mut pos = hend;
    let mut tensors = Vec::with_capacity(layout.len());
    for (_, shape) in &layout {
        let n: usize = shape.iter().product();
        let end = pos + 8 * n;
        if end > body.len() {
            return Err(bad("truncated parameter data"));
        }
        let data = body[pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(shape.clone(), data)?);
        pos = end;
    }
    if pos != body.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    model.store.load(tensors)?;
    model.log = header
        .log
        .iter()
        .map(|&(epoch, steps, mean_loss)| EpochLog { epoch, steps, mean_loss })
        .collect();
    Ok(model)
}

pub fn save_model(model: &TransportModel, path: &Path) -> Result<(), BenchError> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TransportModel, BenchError> {
    read_model(std::fs::File::open(path)?)
}
