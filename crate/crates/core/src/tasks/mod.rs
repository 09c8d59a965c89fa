//! Benchmark data: synthetic long-dependency generators and CSV time series
//! with chronological splitting and sliding windows.

mod series;
mod synthetic;

pub use series::{
    load_csv_series, window_and_split, windows_in_range, write_csv_series, Normalizer, Series, SplitSpec, Splits, WindowSpec,
};
pub use synthetic::{
    gen_adding_problem, gen_distractor_classification, gen_first_token_recall, gen_synthetic_forecast,
    ForecastComponents, Sinusoid,
};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification { classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Row-major `[batch, out_dim]`.
    Values { out_dim: usize, data: Vec<f64> },
    Labels(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Values(&'a [f64]),
    Label(usize),
}

/// Equal-length sequences stored as a row-major `[batch, time, feature]` array.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    inputs: Vec<f64>,
    batch: usize,
    time: usize,
    features: usize,
    pub targets: Targets,
    pub kind: TaskKind,
    /// Whether inputs and targets are z-scored.
    pub normalized: bool,
}

impl SequenceBatch {
    pub fn new(
        inputs: Vec<f64>,
        (batch, time, features): (usize, usize, usize),
        targets: Targets,
        kind: TaskKind,
    ) -> Result<Self> {
        if inputs.len() != batch * time * features {
            return Err(Error::Data(format!(
                "input buffer has {} values, expected {batch}×{time}×{features}",
                inputs.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite input feature".into()));
        }
        let n_targets = match &targets {
            Targets::Values { out_dim, data } => {
                if *out_dim == 0 || data.len() != batch * out_dim {
                    return Err(Error::Data("target buffer does not match batch size".into()));
                }
                batch
            }
            Targets::Labels(l) => l.len(),
        };
        if n_targets != batch {
            return Err(Error::Data(format!("{n_targets} targets for {batch} sequences")));
        }
        if let (TaskKind::Classification { classes }, Targets::Labels(l)) = (kind, &targets) {
            if l.iter().any(|&c| c >= classes) {
                return Err(Error::Data("label out of range".into()));
            }
        }
        Ok(SequenceBatch {
            inputs,
            batch,
            time,
            features,
            targets,
            kind,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    pub fn seq_len(&self) -> usize {
        self.time
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn out_dim(&self) -> usize {
        match (&self.targets, self.kind) {
            (Targets::Values { out_dim, .. }, _) => *out_dim,
            (Targets::Labels(_), TaskKind::Classification { classes }) => classes,
            (Targets::Labels(_), TaskKind::Regression) => 1,
        }
    }

    /// Feature vector of sequence `i` at step `t`.
    pub fn step(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.time + t) * self.features;
        &self.inputs[start..start + self.features]
    }

    pub fn sequence(&self, i: usize) -> Vec<Vector> {
        (0..self.time).map(|t| Vector::from(self.step(i, t))).collect()
    }

    pub fn target(&self, i: usize) -> Target<'_> {
        match &self.targets {
            Targets::Values { out_dim, data } => Target::Values(&data[i * out_dim..(i + 1) * out_dim]),
            Targets::Labels(l) => Target::Label(l[i]),
        }
    }

    pub fn raw_inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// SHA-256 over shape, inputs and targets.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for n in [self.batch, self.time, self.features] {
            h.update((n as u64).to_le_bytes());
        }
        for v in &self.inputs {
            h.update(v.to_bits().to_le_bytes());
        }
        match &self.targets {
            Targets::Values { data, .. } => data.iter().for_each(|v| h.update(v.to_bits().to_le_bytes())),
            Targets::Labels(l) => l.iter().for_each(|&c| h.update((c as u64).to_le_bytes())),
        }
        hex::encode(h.finalize())
    }
}
