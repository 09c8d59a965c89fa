use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::linalg::{Rng, RngState};
use crate::model::{Model, ModelDoc, FORMAT_VERSION};
use crate::params::{NamedBlock, Parameters};

use super::trainer::SHUFFLE_STREAM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamDoc {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<NamedBlock>,
    pub v: Vec<NamedBlock>,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelDoc,
    pub optimizer: AdamDoc,
    pub epoch: usize,
    pub rng: RngState,
    /// Echo of the configuration that produced this checkpoint.
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format_version {}", ck.format_version)));
        }
        Ok(ck)
    }
}

impl Trainer {
    pub fn to_checkpoint(&self, config: serde_json::Value) -> Checkpoint {
        let o = &self.optimizer;
        Checkpoint {
            format_version: FORMAT_VERSION,
            model: self.model.to_doc(),
            optimizer: AdamDoc {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                step: o.step,
                m: o.m.to_blocks(),
                v: o.v.to_blocks(),
            },
            epoch: self.epoch,
            rng: self.rng.state(self.cfg.seed),
            config,
        }
    }

    /// Resume from `ck`. Optimizer hyperparameters come from the checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: TrainConfig) -> Result<Trainer> {
        let model = Model::from_doc(&ck.model)?;
        if ck.rng.seed != cfg.seed {
            return Err(Error::Checkpoint(format!(
                "checkpoint seed {} differs from configured seed {}",
                ck.rng.seed, cfg.seed
            )));
        }
        let mut trainer = Trainer::new(model, cfg)?;
        let o = &ck.optimizer;
        let mut opt = Adam::new(&trainer.model, o.lr, o.beta1, o.beta2, o.eps);
        opt.step = o.step;
        opt.m.load_blocks(&o.m)?;
        opt.v.load_blocks(&o.v)?;
        trainer.optimizer = opt;
        trainer.epoch = ck.epoch;
        trainer.rng = Rng::from_state(&ck.rng, SHUFFLE_STREAM)?;
        Ok(trainer)
    }
}
