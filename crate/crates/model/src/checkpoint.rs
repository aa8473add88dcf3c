//! Single-file checkpoints: a version header line followed by one JSON record
//! with the model configuration, vocabularies and every parameter tensor.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use cgt_core::grammar::Grammar;
use cgt_core::text::Vocabs;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::model::{Ablation, Model, ModelDims, ModelError};
use crate::params::ParamStore;

pub const CHECKPOINT_HEADER: &str = "codegen-test-ckpt-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (header {0:?})")]
    Header(String),
    #[error("malformed checkpoint: {0}")]
    Format(#[from] serde_json::Error),
    #[error("parameter {0} missing from checkpoint")]
    Missing(String),
    #[error("parameter {name} has shape {found:?}, expected {want:?}")]
    Shape { name: String, found: (usize, usize), want: (usize, usize) },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct Record {
    config: ModelConfig,
    dims: ModelDims,
    ablation: Ablation,
    vocabs: Vocabs,
    params: ParamStore,
}

pub fn write_checkpoint(model: &Model, out: &mut impl Write) -> Result<(), CheckpointError> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    let rec = Record {
        config: model.config.clone(),
        dims: model.dims,
        ablation: model.ablation,
        vocabs: model.vocabs.clone(),
        params: model.store.clone(),
    };
    serde_json::to_writer(&mut *out, &rec)?;
    writeln!(out)?;
    Ok(())
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn read_checkpoint(input: impl Read, grammar: &Grammar) -> Result<Model, CheckpointError> {
    let mut r = BufReader::new(input);
    let mut header = String::new();
    r.read_line(&mut header)?;
    if header.trim_end() != CHECKPOINT_HEADER {
        return Err(CheckpointError::Header(header.trim_end().to_string()));
    }
    let mut rec: Record = serde_json::from_reader(r)?;
    rec.params.reindex();
    let mut vocabs = rec.vocabs;
    vocabs.reindex();
    let dims = ModelDims::new(&vocabs, grammar);
    if dims.n_rules != rec.dims.n_rules || dims.n_kinds != rec.dims.n_kinds {
        return Err(ModelError::GrammarMismatch {
            found: dims.n_rules,
            kinds: dims.n_kinds,
            rules: rec.dims.n_rules,
            want_kinds: rec.dims.n_kinds,
        }
        .into());
    }
    let mut model = Model::new(rec.config, vocabs, grammar, 0)?;
    model.ablation = rec.ablation;
    for id in 0..model.store.len() {
        let name = model.store.name(id).to_string();
        let src = rec.params.id(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        let value = rec.params.value(src);
        let want = model.store.value(id).dim();
        if value.dim() != want {
            return Err(CheckpointError::Shape { name, found: value.dim(), want });
        }
        *model.store.value_mut(id) = value.clone();
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path, grammar: &Grammar) -> Result<Model, CheckpointError> {
    read_checkpoint(std::fs::File::open(path)?, grammar)
}
