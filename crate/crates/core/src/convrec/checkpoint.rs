//! `convrec.bin`: `CNV1`, the parameter count as u64 LE, the parameters as
//! f64 LE in model layout, then an `EMB1` embedding block. `convrec.json`
//! holds the tower configuration needed to interpret them.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConvRecModel, ConvTowerConfig, EmbeddingMode};
use crate::embed::{read_embeddings, read_f64s, read_u64, write_embeddings, MaskMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CONVREC_MAGIC: &[u8; 4] = b"CNV1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvRecMetadata {
    pub tower: ConvTowerConfig,
    pub mode: EmbeddingMode,
    pub train_mask: MaskMode,
    pub k: usize,
    pub n_params: usize,
}

pub fn save_convrec<T: Scalar>(dir: &Path, model: &ConvRecModel<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = ConvRecMetadata {
        tower: model.tower.clone(),
        mode: model.mode,
        train_mask: model.train_mask,
        k: model.k(),
        n_params: model.n_params(),
    };
    let mut buf = Vec::with_capacity(12 + 8 * model.n_params());
    buf.write_all(CONVREC_MAGIC)?;
    buf.write_all(&(model.n_params() as u64).to_le_bytes())?;
    for v in &model.params {
        buf.write_all(&v.as_f64().to_le_bytes())?;
    }
    write_embeddings(&mut buf, &model.embeddings)?;
    fs::write(dir.join("convrec.bin"), buf)?;
    fs::write(dir.join("convrec.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_convrec<T: Scalar>(dir: &Path) -> Result<ConvRecModel<T>> {
    let meta: ConvRecMetadata = serde_json::from_str(&fs::read_to_string(dir.join("convrec.json"))?)?;
    let bytes = fs::read(dir.join("convrec.bin"))?;
    let mut input = bytes.as_slice();
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CONVREC_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected CNV1")));
    }
    let n = read_u64(&mut input)? as usize;
    if n != meta.n_params {
        return Err(Error::Format(format!("{n} parameters stored, metadata says {}", meta.n_params)));
    }
    let params: Vec<T> = read_f64s(&mut input, n)?.into_iter().map(T::lit).collect();
    let embeddings = read_embeddings::<T>(&mut input)?;
    if embeddings.k() != meta.k {
        return Err(Error::Format(format!("embedding K {} differs from metadata K {}", embeddings.k(), meta.k)));
    }
    let mut model = ConvRecModel::new(embeddings, meta.mode, &meta.tower, meta.train_mask)?;
    model.set_params(params).map_err(|e| Error::Format(format!("tower does not match parameters: {e}")))?;
    Ok(model)
}
