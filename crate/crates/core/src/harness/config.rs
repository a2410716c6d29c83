use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::init::INIT_STD;
use crate::model::{VariantSpec, DEFAULT_HEADS, DEFAULT_THRESHOLD};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Training configuration. The on-disk form is TOML with the same keys,
/// every key optional:
///
/// ```toml
/// seed = 42
/// d = 32
/// batch_size = 16
/// epochs = 20
/// lr = 1e-4
/// variant = "mime"          # preset name, or an inline table
/// train = "data/train.jsonl"
/// val = "data/val.jsonl"
/// test = "data/test.jsonl"
/// threshold = 0.5
/// precision = "f32"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub d: usize,
    pub heads: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    #[serde(serialize_with = "ser_variant", deserialize_with = "de_variant")]
    pub variant: VariantSpec,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub threshold: f64,
    pub precision: Precision,
    pub init_std: f64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            d: 32,
            heads: DEFAULT_HEADS,
            batch_size: 16,
            epochs: 20,
            lr: 1e-4,
            variant: VariantSpec::mime(),
            train: None,
            val: None,
            test: None,
            threshold: DEFAULT_THRESHOLD,
            precision: Precision::F32,
            init_std: INIT_STD,
            checkpoint: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum VariantRepr {
    Name(String),
    Spec(VariantSpec),
}

fn ser_variant<S: Serializer>(v: &VariantSpec, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v.name() {
        Some(n) => VariantRepr::Name(n.to_string()).serialize(s),
        None => VariantRepr::Spec(*v).serialize(s),
    }
}

fn de_variant<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<VariantSpec, D::Error> {
    match VariantRepr::deserialize(d)? {
        VariantRepr::Name(n) => VariantSpec::preset(&n).map_err(serde::de::Error::custom),
        VariantRepr::Spec(s) => Ok(s),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive and finite");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; relative corpus paths resolve against the
    /// config file's directory.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.train,
            &mut cfg.val,
            &mut cfg.test,
            &mut cfg.checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
