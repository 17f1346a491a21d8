//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `AMBICKPT` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | header length `H` (`u32`) |
//! | H     | UTF-8 JSON header: architecture, freeze mask, probe layout, dropout stream state, config hash, parameter count |
//! | 8·P   | `P` raw `f64` parameters in canonical order (blocks, head, probes; weights row-major then bias) |
//! | 32    | SHA-256 over every preceding byte |

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Architecture, FreezeMask, LayeredClassifier, Probe};
use crate::error::{Error, Result};
use crate::netcore::{DenseLayer, Matrix};

const MAGIC: &[u8; 8] = b"AMBICKPT";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A model plus the hash of the configuration that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: LayeredClassifier,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    freeze: FreezeMask,
    probes: Vec<ProbeHeader>,
    rng: RngState,
    config_hash: String,
    param_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeHeader {
    attach_after: usize,
    frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bytes =
            hex::decode(&self.seed).map_err(|e| Error::Checkpoint(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Checkpoint(format!("rng word position: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Writes `model` to `path` atomically (temp file + rename).
pub fn save_checkpoint(path: &Path, model: &LayeredClassifier, config_hash: &str) -> Result<()> {
    let header = Header {
        architecture: model.arch.clone(),
        freeze: model.freeze.clone(),
        probes: model
            .probes
            .iter()
            .map(|p| ProbeHeader {
                attach_after: p.attach_after,
                frozen: p.frozen,
            })
            .collect(),
        rng: RngState::capture(&model.rng),
        config_hash: config_hash.to_string(),
        param_count: model.param_count(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let params = model.flat_params();
    let mut buf = Vec::with_capacity(16 + header_bytes.len() + params.len() * 8 + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for v in params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

/// Loads a checkpoint and rejects it unless its architecture equals `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &Architecture) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.architecture() != expected {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: file has {:?}, expected {:?}",
            ckpt.model.architecture(),
            expected
        )));
    }
    Ok(ckpt)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |what: &str| Error::Checkpoint(format!("corrupt or truncated file: {what}"));
    if bytes.len() < 16 + DIGEST_LEN {
        return Err(corrupt("too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("hash mismatch".into()));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .ok_or_else(|| corrupt("header length"))?;
    if header_end > body.len() {
        return Err(corrupt("header length"));
    }
    let header: Header = serde_json::from_slice(&body[16..header_end])?;
    header.architecture.validate()?;
    let payload = &body[header_end..];
    if payload.len() != header.param_count * 8 {
        return Err(corrupt("payload length"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));

    let arch = header.architecture;
    let mut take_layer = |fan_in: usize, fan_out: usize| -> Result<DenseLayer> {
        let w: Vec<f64> = values.by_ref().take(fan_in * fan_out).collect();
        let b: Vec<f64> = values.by_ref().take(fan_out).collect();
        if w.len() != fan_in * fan_out || b.len() != fan_out {
            return Err(corrupt("parameter count"));
        }
        DenseLayer::from_parts(Matrix::from_vec(fan_in, fan_out, w)?, b)
    };
    let mut blocks = Vec::with_capacity(arch.depth);
    for i in 1..=arch.depth {
        let fan_in = if i == 1 { arch.input_dim } else { arch.width };
        let dense = take_layer(fan_in, arch.width)?;
        blocks.push(LayeredClassifier::make_block(&arch, i, dense));
    }
    let head = take_layer(arch.width, arch.num_classes)?;
    let mut probes = Vec::with_capacity(header.probes.len());
    for p in &header.probes {
        if p.attach_after == 0 || p.attach_after >= arch.depth {
            return Err(corrupt("probe position"));
        }
        let mut probe = Probe::new(p.attach_after, take_layer(arch.width, arch.num_classes)?);
        probe.frozen = p.frozen;
        probes.push(probe);
    }
    if header.freeze.blocks.len() != arch.depth {
        return Err(corrupt("freeze mask"));
    }
    let rng = header.rng.restore()?;
    let model = LayeredClassifier::from_parts(arch, blocks, head, probes, header.freeze, rng);
    if model.param_count() != header.param_count {
        return Err(corrupt("parameter count"));
    }
    Ok(Checkpoint {
        model,
        config_hash: header.config_hash,
    })
}
