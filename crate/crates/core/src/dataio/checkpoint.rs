use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::backbones::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::featurespace::FeatureEncoder;
use crate::numcore::{ParamStore, Tensor};
use crate::trainer::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "mono-ctr-checkpoint";

/// A trained model with everything needed to encode raw rows for it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub encoder: FeatureEncoder,
    pub model: Model,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    /// Base64 of little-endian f64 values.
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format: String,
    version: u32,
    seed: u64,
    model_spec: ModelSpec,
    field_names: Vec<String>,
    table_sizes: Vec<usize>,
    n_categorical: usize,
    optimizer_step: u64,
    encoder: FeatureEncoder,
    train_config: Option<TrainConfig>,
    params: Vec<TensorRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format: Option<String>,
    version: Option<u32>,
}

fn encode_tensor(t: &Tensor) -> String {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_tensor(rec: &TensorRecord) -> Result<Tensor> {
    let corrupt = |what: &str| Error::CorruptFile(format!("tensor `{}`: {what}", rec.name));
    let bytes = STANDARD.decode(&rec.data).map_err(|e| corrupt(&e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(corrupt("payload is not a whole number of f64 values"));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(rec.shape.clone(), data).map_err(|e| corrupt(&e.to_string()))
}

impl Checkpoint {
    pub fn new(encoder: FeatureEncoder, model: Model, train_config: Option<TrainConfig>, seed: u64) -> Self {
        Self {
            encoder,
            model,
            train_config,
            seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.model, &self.encoder, self.train_config.as_ref(), self.seed)
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    encoder: &FeatureEncoder,
    config: Option<&TrainConfig>,
    seed: u64,
) -> Result<()> {
    let envelope = Envelope {
        format: FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        seed,
        model_spec: model.spec().clone(),
        field_names: model.field_names().to_vec(),
        table_sizes: model.table_sizes().to_vec(),
        n_categorical: model.n_categorical(),
        optimizer_step: model.params().step(),
        encoder: encoder.clone(),
        train_config: config.cloned(),
        params: model
            .params()
            .iter()
            .map(|(name, t)| TensorRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: encode_tensor(t),
            })
            .collect(),
    };
    let text = serde_json::to_string(&envelope)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    if probe.format.as_deref() != Some(FORMAT) {
        return Err(Error::CorruptFile(format!("not a {FORMAT} file")));
    }
    match probe.version {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(Error::VersionMismatch {
                found,
                expected: CHECKPOINT_VERSION,
            })
        }
        None => return Err(Error::CorruptFile("missing version".into())),
    }
    let env: Envelope = serde_json::from_str(&text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let mut store = ParamStore::new();
    for rec in &env.params {
        store
            .insert(rec.name.clone(), decode_tensor(rec)?)
            .map_err(|e| Error::CorruptFile(e.to_string()))?;
    }
    store.set_step(env.optimizer_step);
    if env.encoder.table_sizes() != env.table_sizes {
        return Err(Error::CorruptFile("encoder does not match the model's tables".into()));
    }
    let model = Model::from_params(env.model_spec, env.field_names, env.table_sizes, env.n_categorical, store)
        .map_err(|e| Error::CorruptFile(e.to_string()))?;
    Ok(Checkpoint {
        encoder: env.encoder,
        model,
        train_config: env.train_config,
        seed: env.seed,
    })
}
