use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};

/// Which network is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// MLP with a softmax head.
    Softmax,
    /// Same, with coupled L2 weight decay.
    SoftmaxWd,
    /// Softmax cross entropy plus a weighted OLE penalty on the last
    /// hidden features of the whole batch.
    SoftmaxOle,
    /// OLE on the geometry sub-batch plus λ times the subspace validation
    /// loss of the validation sub-batch.
    OleGrsvnet,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Softmax,
        Mode::SoftmaxWd,
        Mode::SoftmaxOle,
        Mode::OleGrsvnet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Softmax => "softmax",
            Mode::SoftmaxWd => "softmax_wd",
            Mode::SoftmaxOle => "softmax_ole",
            Mode::OleGrsvnet => "ole_grsvnet",
        }
    }

    pub fn uses_softmax_head(self) -> bool {
        self != Mode::OleGrsvnet
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected one of softmax, softmax_wd, softmax_ole, ole_grsvnet")))
    }
}

/// Full description of one experiment. Loaded from TOML; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::hidden_dims")]
    pub hidden_dims: Vec<usize>,
    pub mode: Mode,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::ole_weight")]
    pub ole_weight: f64,
    #[serde(default = "defaults::weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::momentum")]
    pub momentum: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::g_fraction")]
    pub g_fraction: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::ratio")]
    pub ratio: f64,
    #[serde(default = "defaults::trunc")]
    pub trunc: f64,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
}

mod defaults {
    pub fn hidden_dims() -> Vec<usize> {
        vec![128; 3]
    }
    pub fn lambda() -> f64 {
        5.0
    }
    pub fn ole_weight() -> f64 {
        0.5
    }
    pub fn weight_decay() -> f64 {
        1e-4
    }
    pub fn lr() -> f64 {
        0.01
    }
    pub fn momentum() -> f64 {
        0.9
    }
    pub fn epochs() -> usize {
        2000
    }
    pub fn batch_size() -> usize {
        150
    }
    pub fn g_fraction() -> f64 {
        0.5
    }
    pub fn eps() -> f64 {
        crate::loss::DEFAULT_EPS
    }
    pub fn ratio() -> f64 {
        0.1
    }
    pub fn trunc() -> f64 {
        1e-6
    }
}

impl TrainConfig {
    /// Defaults for every field except the mode and dataset.
    pub fn new(mode: Mode, dataset: DatasetSpec) -> Self {
        TrainConfig {
            hidden_dims: defaults::hidden_dims(),
            mode,
            lambda: defaults::lambda(),
            ole_weight: defaults::ole_weight(),
            weight_decay: defaults::weight_decay(),
            lr: defaults::lr(),
            momentum: defaults::momentum(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            g_fraction: defaults::g_fraction(),
            eps: defaults::eps(),
            ratio: defaults::ratio(),
            trunc: defaults::trunc(),
            seed: 0,
            dataset,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.into(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad(format!(
                "hidden_dims must be non-empty and positive, got {:?}",
                self.hidden_dims
            ));
        }
        if self.mode == Mode::OleGrsvnet && !(self.lambda > 0.0) {
            return bad(format!(
                "lambda must be positive for ole_grsvnet, got {}",
                self.lambda
            ));
        }
        if self.mode == Mode::SoftmaxOle && !(self.ole_weight > 0.0) {
            return bad(format!(
                "ole_weight must be positive for softmax_ole, got {}",
                self.ole_weight
            ));
        }
        if self.mode == Mode::SoftmaxWd && !(self.weight_decay > 0.0) {
            return bad(format!(
                "weight_decay must be positive for softmax_wd, got {}",
                self.weight_decay
            ));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        let n_train = self.dataset.classes * self.dataset.per_class;
        if self.batch_size < 2 || self.batch_size > n_train {
            return bad(format!(
                "batch_size must lie in 2..={n_train}, got {}",
                self.batch_size
            ));
        }
        if !(self.g_fraction > 0.0 && self.g_fraction < 1.0) {
            return bad(format!(
                "g_fraction must lie in (0, 1), got {}",
                self.g_fraction
            ));
        }
        if !(self.eps > 0.0) || !(self.trunc > 0.0) {
            return bad("eps and trunc must be positive".into());
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must lie in (0, 1], got {}", self.ratio));
        }
        Ok(())
    }

    /// Layer widths of the trained network: input, hidden layers, then the
    /// softmax logits for the softmax modes.
    pub fn network_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.dataset.dim];
        dims.extend_from_slice(&self.hidden_dims);
        if self.mode.uses_softmax_head() {
            dims.push(self.dataset.classes);
        }
        dims
    }

    /// Weight decay actually applied by the optimizer.
    pub fn effective_weight_decay(&self) -> f64 {
        if self.mode == Mode::SoftmaxWd {
            self.weight_decay
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
mode = "ole_grsvnet"
hidden_dims = [128, 128, 128]
lambda = 5.0
epochs = 10
seed = 3

[dataset]
kind = "subspace_gaussian"
classes = 3
per_class = 500
dim = 10
amplification = 50.0
label_mode = "shuffled"
seed = 1
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = TrainConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.mode, Mode::OleGrsvnet);
        assert_eq!(cfg.batch_size, 150);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.network_dims(), vec![10, 128, 128, 128]);
        let again = TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = SAMPLE.replace("seed = 3", "seed = 3\nlearning_rate = 0.1");
        assert!(TrainConfig::from_toml_str(&text).is_err());
        let text = SAMPLE.replace("seed = 1", "seed = 1\nnoise = 2");
        assert!(TrainConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn lambda_must_be_positive_for_grsvnet() {
        let text = SAMPLE.replace("lambda = 5.0", "lambda = 0.0");
        assert!(matches!(
            TrainConfig::from_toml_str(&text),
            Err(Error::Config(_))
        ));
        let text = text.replace("ole_grsvnet", "softmax");
        assert!(TrainConfig::from_toml_str(&text).is_ok());
    }

    #[test]
    fn softmax_modes_get_a_head() {
        let text = SAMPLE.replace("ole_grsvnet", "softmax_wd");
        let cfg = TrainConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.network_dims(), vec![10, 128, 128, 128, 3]);
        assert_eq!(cfg.effective_weight_decay(), 1e-4);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("vgg".parse::<Mode>().is_err());
    }
}
