//! Versioned JSON checkpoints of trained models.
//!
//! Floats are written in shortest round-trip form, so a load reproduces
//! every parameter bit for bit.

use std::path::Path;

use labelagg_core::{GuidingModel, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "labelagg-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: TrainedModel,
}

pub fn to_string(model: &TrainedModel) -> Result<String> {
    let env = Envelope { format: FORMAT.into(), version: VERSION, model: model.clone() };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Checkpoint(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_str(text: &str) -> Result<TrainedModel> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if env.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", env.format)));
    }
    if env.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", env.version)));
    }
    let m = env.model;
    m.network.check_shapes()?;
    let expected_beta = match &m.guiding {
        GuidingModel::WorkerAbility(_) => 2 * m.num_workers,
        GuidingModel::Confusion(_) => m.num_classes * m.num_workers * m.num_classes,
    };
    if m.guiding.params().len() != expected_beta
        || m.guiding.num_workers() != m.num_workers
        || m.guiding.num_classes() != m.num_classes
        || m.network.num_classes != m.num_classes
        || m.network.input_dim != m.num_workers * m.num_classes
        || m.prior.num_classes() != m.num_classes
    {
        return Err(Error::Checkpoint("inconsistent dimensions".into()));
    }
    Ok(m)
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    crate::io::write(path, &to_string(model)?)
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}
