use std::time::Instant;

use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsAccumulator, MetricsReport};
use crate::linalg::Rng;
use crate::model::Model;
use crate::params::{scale, Parameters};
use crate::tasks::SequenceBatch;

use super::{backward_sequence, clip_global_norm, forward_sequence, Adam, TrainConfig};

/// Stream used for the per-epoch shuffle.
pub(crate) const SHUFFLE_STREAM: u64 = 7;

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub report: MetricsReport,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,split,loss,mse,mae,accuracy,wall_ms";

    pub fn csv_row(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            r.loss,
            r.mse,
            r.mae,
            r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.wall_ms
        )
    }
}

/// Single-threaded mini-batch trainer. Samples within a batch are processed
/// in shuffled-index order and their gradients summed in that order, so runs
/// are bit-reproducible.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: Adam<Model>,
    /// Completed epochs.
    pub epoch: usize,
    pub cfg: TrainConfig,
    pub(crate) rng: Rng,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.loss_kind()?;
        let optimizer = Adam::new(&model, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        Ok(Trainer {
            rng: Rng::fork(cfg.seed, SHUFFLE_STREAM),
            model,
            optimizer,
            epoch: 0,
            cfg,
        })
    }

    /// One pass over `data`. Returns metrics of the outputs seen during the
    /// pass.
    pub fn train_epoch(&mut self, data: &SequenceBatch) -> Result<MetricsReport> {
        if data.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if data.seq_len() == 0 {
            return Err(Error::Empty("sequence"));
        }
        let start = Instant::now();
        let loss = self.cfg.loss_kind()?;
        let policy = self.cfg.reset_policy;
        let mut order: Vec<usize> = (0..data.len()).collect();
        self.rng.shuffle(&mut order);

        let mut acc = MetricsAccumulator::default();
        let mut carry = None;
        let mut grads = self.model.zeros_like();
        for batch in order.chunks(self.cfg.batch_size) {
            grads.fill(0.0);
            for &i in batch {
                let init = policy.initial_state(carry.as_ref(), self.model.hidden_dim());
                let fwd = forward_sequence(&self.model, &data.sequence(i), &init)?;
                let (l, d_out) = loss.value_and_grad(&fwd.output, data.target(i))?;
                acc.add(&fwd.output, data.target(i), l);
                backward_sequence(&self.model, &fwd, &d_out, None, self.cfg.bptt_window, &mut grads)?;
                carry = Some(fwd.final_state);
            }
            scale(&mut grads, 1.0 / batch.len() as f64);
            clip_global_norm(&mut grads, self.cfg.grad_clip_norm)?;
            self.optimizer.update(&mut self.model, &grads)?;
        }
        self.epoch += 1;
        acc.report(data.normalized, start.elapsed().as_millis() as u64)
    }

    /// Train until `cfg.epochs` epochs are complete (or patience runs out),
    /// logging a train row and, when `val` is given, a val row per epoch.
    pub fn fit(
        &mut self,
        train: &SequenceBatch,
        val: Option<&SequenceBatch>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>> {
        let loss = self.cfg.loss_kind()?;
        let mut log = Vec::new();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        while self.epoch < self.cfg.epochs {
            let report = self.train_epoch(train)?;
            let rec = EpochRecord {
                epoch: self.epoch,
                split: "train",
                report,
            };
            on_epoch(&rec);
            log.push(rec);
            if let Some(val) = val {
                let report = evaluate(&self.model, val, self.cfg.reset_policy, loss)?;
                let val_loss = report.loss;
                let rec = EpochRecord {
                    epoch: self.epoch,
                    split: "val",
                    report,
                };
                on_epoch(&rec);
                log.push(rec);
                if val_loss < best {
                    best = val_loss;
                    stale = 0;
                } else {
                    stale += 1;
                }
                if self.cfg.patience.is_some_and(|p| stale >= p) {
                    log::info!("stopping after {} epochs without validation improvement", stale);
                    break;
                }
            }
        }
        Ok(log)
    }
}
