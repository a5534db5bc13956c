use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::EditQualityModel;
use super::params::{group_of, ParamStore};
use super::tensor::Matrix;
use super::ModelError;

pub const CHECKPOINT_FORMAT: &str = "editscore-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRecord {
    pub group: String,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub groups: Vec<GroupRecord>,
}

impl Checkpoint {
    pub fn from_model(m: &EditQualityModel) -> Self {
        let mut groups: Vec<GroupRecord> = Vec::new();
        for (name, value) in m.params().iter() {
            let group = group_of(name);
            if groups.last().map(|g| g.group.as_str()) != Some(group) {
                groups.push(GroupRecord { group: group.to_string(), tensors: Vec::new() });
            }
            groups.last_mut().unwrap().tensors.push(TensorRecord {
                name: name.to_string(),
                rows: value.rows,
                cols: value.cols,
                data: value.data.clone(),
            });
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: m.config().clone(),
            groups,
        }
    }

    pub fn into_model(self) -> Result<EditQualityModel, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        self.config.validate()?;
        let mut by_name = BTreeMap::new();
        for g in self.groups {
            for t in g.tensors {
                if group_of(&t.name) != g.group {
                    return Err(ModelError::Checkpoint(format!("tensor {} filed under group {}", t.name, g.group)));
                }
                if t.data.len() != t.rows * t.cols {
                    return Err(ModelError::Checkpoint(format!("tensor {} has wrong data length", t.name)));
                }
                let name = t.name.clone();
                if by_name.insert(name.clone(), Matrix::from_vec(t.rows, t.cols, t.data)).is_some() {
                    return Err(ModelError::Checkpoint(format!("duplicate tensor {name}")));
                }
            }
        }
        let mut store = ParamStore::new(&[], 0);
        for spec in self.config.param_specs() {
            let m = by_name
                .remove(&spec.name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {}", spec.name)))?;
            store.push(&spec.name, m);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(ModelError::Checkpoint(format!("unexpected tensor {extra}")));
        }
        EditQualityModel::from_parts(self.config, store)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

pub fn save_checkpoint(m: &EditQualityModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, Checkpoint::from_model(m).to_json())
        .map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })
}

pub fn load_checkpoint(path: &Path) -> Result<EditQualityModel, ModelError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;
    Checkpoint::from_json(&text)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FusionMode;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig { fusion: FusionMode::Attention, shared_source_encoder: false, ..ModelConfig::stub() };
        let m = EditQualityModel::new(cfg, 11).unwrap();
        let back = Checkpoint::from_json(&Checkpoint::from_model(&m).to_json()).unwrap().into_model().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn tampering_is_detected() {
        let m = EditQualityModel::new(ModelConfig::stub(), 11).unwrap();
        let mut c = Checkpoint::from_model(&m);
        c.groups[0].tensors[0].data.pop();
        assert!(c.clone().into_model().is_err());
        let mut c = Checkpoint::from_model(&m);
        c.groups.pop();
        assert!(c.into_model().is_err());
        let mut c = Checkpoint::from_model(&m);
        c.version = 9;
        assert!(c.into_model().is_err());
        assert!(Checkpoint::from_json("{}").is_err());
    }
}
