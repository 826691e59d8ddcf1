use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assemble_model, Model, ModelError, ModelSpec};
use crate::graph::Relation;
use crate::numeric::{Rng, Tensor};

pub const CHECKPOINT_FORMAT: &str = "socnav-gnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk model: spec, feature layout tag, relation vocabulary and every
/// parameter tensor in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub feature_layout: String,
    pub relation_vocab: Vec<String>,
    pub spec: ModelSpec,
    pub params: Vec<CheckpointParam>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            feature_layout: model.variant().layout_tag(),
            relation_vocab: vocab(),
            spec: model.spec().clone(),
            params: model
                .param_names()
                .iter()
                .zip(model.params())
                .map(|(name, t)| CheckpointParam {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model, ModelError> {
        let bad = |m: String| Err(ModelError::Checkpoint(m));
        if self.format != CHECKPOINT_FORMAT {
            return bad(format!("unknown format {:?}", self.format));
        }
        if self.version != CHECKPOINT_VERSION {
            return bad(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            ));
        }
        let layout = self.spec.variant.layout_tag();
        if self.feature_layout != layout {
            return bad(format!(
                "feature layout {:?} does not match this build ({layout:?})",
                self.feature_layout
            ));
        }
        if self.relation_vocab != vocab() {
            return bad("relation vocabulary does not match this build".into());
        }
        let mut model = assemble_model(&self.spec, &mut Rng::new(0))?;
        if self.params.len() != model.params().len() {
            return bad(format!(
                "expected {} parameter tensors, found {}",
                model.params().len(),
                self.params.len()
            ));
        }
        let mut params = Vec::with_capacity(self.params.len());
        for (p, expected) in self.params.into_iter().zip(model.param_names()) {
            if &p.name != expected {
                return bad(format!(
                    "parameter {:?} found where {expected:?} was expected",
                    p.name
                ));
            }
            let t = Tensor::new(p.shape, p.data)
                .map_err(|e| ModelError::Checkpoint(format!("parameter {}: {e}", p.name)))?;
            if !t.is_finite() {
                return bad(format!("parameter {} has non-finite entries", p.name));
            }
            params.push(t);
        }
        model.set_params(params)?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ModelError::Checkpoint(format!("{path}: {}", e.into_inner()))
        })
    }
}

fn vocab() -> Vec<String> {
    Relation::vocabulary()
        .into_iter()
        .map(String::from)
        .collect()
}

impl Model {
    pub fn to_checkpoint_json(&self) -> String {
        Checkpoint::from_model(self).to_json()
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Model, ModelError> {
        Checkpoint::from_json(text)?.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_checkpoint_json()).map_err(|e| io_error(path, e))
    }

    pub fn load(path: &Path) -> Result<Model, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Model::from_checkpoint_json(&text)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
