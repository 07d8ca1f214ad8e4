//! JSON snapshot of a trained network, its config and, for `ole_grsvnet`,
//! the fitted subspace classifier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::SubspaceSet;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SubspaceBasis};
use crate::net::{Layer, MlpParams};

use super::config::TrainConfig;
use super::train::RunOutcome;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl MatrixRecord {
    fn from_matrix(m: &Matrix) -> Self {
        MatrixRecord {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    weight: MatrixRecord,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SubspaceRecord {
    bases: Vec<MatrixRecord>,
    built_from: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    config: TrainConfig,
    layers: Vec<LayerRecord>,
    subspaces: Option<SubspaceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: MlpParams,
    pub subspaces: Option<SubspaceSet>,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &RunOutcome) -> Self {
        Checkpoint {
            config: outcome.config.clone(),
            params: outcome.params.clone(),
            subspaces: outcome.subspaces.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            layers: self
                .params
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weight: MatrixRecord::from_matrix(&l.weight),
                    bias: l.bias.clone(),
                })
                .collect(),
            subspaces: self.subspaces.as_ref().map(|s| SubspaceRecord {
                bases: s
                    .bases
                    .iter()
                    .map(|b| MatrixRecord::from_matrix(&b.u))
                    .collect(),
                built_from: s.built_from.clone(),
            }),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format version {}, expected {FORMAT_VERSION}",
                file.format_version
            )));
        }
        file.config.validate()?;
        let layers = file
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    weight: l.weight.to_matrix()?,
                    bias: l.bias.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = MlpParams::from_layers(layers)?;
        if params.dims() != file.config.network_dims() {
            return Err(Error::dim(
                "checkpoint",
                format!("{:?}", file.config.network_dims()),
                format!("{:?}", params.dims()),
            ));
        }
        let subspaces = match file.subspaces {
            None => None,
            Some(rec) => {
                let bases = rec
                    .bases
                    .iter()
                    .enumerate()
                    .map(|(k, m)| Ok(SubspaceBasis::new(k + 1, m.to_matrix()?)))
                    .collect::<Result<Vec<_>>>()?;
                Some(SubspaceSet::new(bases, rec.built_from)?)
            }
        };
        Ok(Checkpoint {
            config: file.config,
            params,
            subspaces,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.into(),
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::fit;
    use crate::data::{DatasetSpec, LabelMode};
    use crate::harness::config::Mode;
    use crate::net::xavier_init;

    #[test]
    fn round_trips_exactly() {
        let cfg = TrainConfig::new(Mode::OleGrsvnet, DatasetSpec::toy(LabelMode::True, 2));
        let params = xavier_init(&cfg.network_dims(), 9).unwrap();
        let feats = vec![
            Matrix::from_fn(128, 2, |i, j| (i + j) as f64 / 7.0),
            Matrix::from_fn(128, 1, |i, _| (i % 3) as f64),
            Matrix::from_fn(128, 3, |i, j| ((i * j) % 5) as f64 - 2.0),
        ];
        let ckpt = Checkpoint {
            config: cfg,
            params,
            subspaces: Some(fit(&feats, 0.1).unwrap()),
        };
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn rejects_mismatched_layers_and_versions() {
        let cfg = TrainConfig::new(Mode::Softmax, DatasetSpec::toy(LabelMode::True, 2));
        let params = xavier_init(&[10, 4, 3], 1).unwrap();
        let ckpt = Checkpoint {
            config: cfg,
            params,
            subspaces: None,
        };
        assert!(Checkpoint::from_json(&ckpt.to_json()).is_err());
        let text = ckpt
            .to_json()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(Checkpoint::from_json(&text).is_err());
    }
}
