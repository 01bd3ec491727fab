//! Binary parameter checkpoints.
//!
//! Layout: the 8-byte magic `VQMCCKPT`, a little-endian `u32` format version,
//! a little-endian `u32` header length, a JSON header (seed, hyperparameters,
//! system size and the name/shape/offset of every block), then every
//! parameter as a little-endian `f64`. Values are stored bit-for-bit.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NetworkHyperparams, ParamLayout, WavefunctionParams};

const MAGIC: &[u8; 8] = b"VQMCCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint header disagrees with the layout implied by its hyperparameters: {0}")]
    Layout(String),
    #[error("checkpoint data truncated: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    seed: u64,
    hyperparams: NetworkHyperparams,
    n_up: usize,
    n_down: usize,
    n_nuclei: usize,
    n_params: usize,
    blocks: Vec<BlockHeader>,
}

pub fn write<W: Write>(params: &WavefunctionParams, mut w: W) -> Result<(), CheckpointError> {
    let l = params.layout();
    let header = Header {
        seed: params.seed,
        hyperparams: l.hp,
        n_up: l.n_up,
        n_down: l.n_down,
        n_nuclei: l.n_nuclei,
        n_params: l.n_params(),
        blocks: l
            .blocks()
            .iter()
            .map(|b| BlockHeader {
                name: b.name.clone(),
                shape: b.shape.clone(),
                offset: b.offset,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(8 * params.len());
    for v in params.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<WavefunctionParams, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    r.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    header
        .hyperparams
        .validate()
        .map_err(|e| CheckpointError::Layout(e.to_string()))?;

    let layout = ParamLayout::new(header.hyperparams, header.n_up, header.n_down, header.n_nuclei);
    if layout.n_params() != header.n_params || layout.blocks().len() != header.blocks.len() {
        return Err(CheckpointError::Layout("parameter count".into()));
    }
    for (b, h) in layout.blocks().iter().zip(&header.blocks) {
        if b.name != h.name || b.shape != h.shape || b.offset != h.offset {
            return Err(CheckpointError::Layout(format!("block {}", h.name)));
        }
    }

    let mut bytes = Vec::with_capacity(8 * header.n_params);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.n_params {
        return Err(CheckpointError::Truncated {
            expected: header.n_params,
            found: bytes.len() / 8,
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(WavefunctionParams::from_parts(layout, data, header.seed))
}

pub fn to_bytes(params: &WavefunctionParams) -> Vec<u8> {
    let mut out = Vec::new();
    write(params, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<WavefunctionParams, CheckpointError> {
    read(bytes)
}

/// Writes atomically: a sibling temporary file is renamed over `path`.
pub fn save(params: &WavefunctionParams, path: &Path) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_bytes(params))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<WavefunctionParams, CheckpointError> {
    read(io::BufReader::new(fs::File::open(path)?))
}
