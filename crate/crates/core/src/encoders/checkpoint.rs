//! Checkpoint file format: magic, JSON manifest (config, step, seed,
//! name→(offset, shape) index), then the flat little-endian f64
//! parameter blob.

use std::io::{Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, ParamEntry, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DGCMCKPT";

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    seed: u64,
    params: Vec<ParamEntry>,
}

pub fn save_checkpoint(path: &Path, model: &Model, step: u64, seed: u64) -> Result<()> {
    let header = Header {
        format_version: 1,
        config: model.config.clone(),
        step,
        seed,
        params: model.params.entries().to_vec(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |buf: &[u8]| file.write_all(buf).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(header_json.len() as u64).to_le_bytes())?;
    write(&header_json)?;
    let mut blob = Vec::with_capacity(model.params.n_params() * 8);
    for v in model.params.data() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    write(&blob)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, u64, u64)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::data(format!("{}: not a checkpoint file", path.display())));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::data(format!("{}: bad header: {}", path.display(), e)))?;

    let mut blob = Vec::new();
    file.read_to_end(&mut blob).map_err(|e| Error::io(path, e))?;
    let expected: usize = header.params.iter().map(|e| e.len()).sum();
    if blob.len() != expected * 8 {
        return Err(Error::data(format!(
            "{}: blob holds {} bytes, expected {}",
            path.display(),
            blob.len(),
            expected * 8
        )));
    }
    let mut store = ParamStore::new();
    for entry in &header.params {
        let start = entry.offset * 8;
        let values: Vec<f64> = blob[start..start + entry.len() * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(&entry.name, entry.shape.clone(), values);
    }
    let model = Model {
        config: header.config,
        params: store,
    };
    model.config.validate()?;
    Ok((model, header.step, header.seed))
}
