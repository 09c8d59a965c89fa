//! Metrics, efficiency accounting and state-trace export.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{Model, Trace};
use crate::tasks::{SequenceBatch, Target};
use crate::train::{forward_sequence, softmax, LossKind, ResetPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub loss: f64,
    pub mse: f64,
    pub mae: f64,
    /// Classification tasks only.
    pub accuracy: Option<f64>,
    pub n_samples: usize,
    /// Whether mse/mae are in z-scored units.
    pub normalized: bool,
    pub wall_ms: u64,
}

impl MetricsReport {
    /// The report with timing zeroed, for comparisons.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport { wall_ms: 0, ..self.clone() }
    }
}

/// Running sums behind a [`MetricsReport`]. For classification, mse and mae
/// compare softmax probabilities with the one-hot label.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    loss: f64,
    sq: f64,
    abs: f64,
    elems: usize,
    correct: usize,
    classified: usize,
    n: usize,
}

impl MetricsAccumulator {
    pub fn add(&mut self, output: &Vector, target: Target<'_>, loss: f64) {
        self.loss += loss;
        self.n += 1;
        match target {
            Target::Values(t) => {
                for (p, t) in output.iter().zip(t) {
                    self.sq += (p - t).powi(2);
                    self.abs += (p - t).abs();
                }
                self.elems += t.len();
            }
            Target::Label(l) => {
                let probs = softmax(output.as_slice());
                for (k, p) in probs.iter().enumerate() {
                    let t = f64::from(k == l);
                    self.sq += (p - t).powi(2);
                    self.abs += (p - t).abs();
                }
                self.elems += probs.len();
                self.classified += 1;
                if argmax(output.as_slice()) == l {
                    self.correct += 1;
                }
            }
        }
    }

    pub fn report(&self, normalized: bool, wall_ms: u64) -> Result<MetricsReport> {
        if self.n == 0 {
            return Err(Error::Empty("evaluation split"));
        }
        Ok(MetricsReport {
            loss: self.loss / self.n as f64,
            mse: self.sq / self.elems as f64,
            mae: self.abs / self.elems as f64,
            accuracy: (self.classified > 0).then(|| self.correct as f64 / self.classified as f64),
            n_samples: self.n,
            normalized,
            wall_ms,
        })
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = k;
        }
    }
    best
}

/// Metrics over the whole split in order, without touching the model. States
/// carry across consecutive sequences as `policy` dictates, starting from zero.
pub fn evaluate(model: &Model, data: &SequenceBatch, policy: ResetPolicy, loss: LossKind) -> Result<MetricsReport> {
    let start = Instant::now();
    let mut acc = MetricsAccumulator::default();
    let mut carry: Option<CellState> = None;
    for i in 0..data.len() {
        let init = policy.initial_state(carry.as_ref(), model.hidden_dim());
        let fwd = forward_sequence(model, &data.sequence(i), &init)?;
        let (l, _) = loss.value_and_grad(&fwd.output, data.target(i))?;
        acc.add(&fwd.output, data.target(i), l);
        carry = Some(fwd.final_state);
    }
    acc.report(data.normalized, start.elapsed().as_millis() as u64)
}

/// Repeat each window's last observed target value over the horizon.
/// `target_features` maps each target column to its input feature index.
pub fn persistence_baseline(data: &SequenceBatch, target_features: &[usize]) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::default();
    let last = data.seq_len().checked_sub(1).ok_or(Error::Empty("sequence"))?;
    for i in 0..data.len() {
        let Target::Values(y) = data.target(i) else {
            return Err(Error::Config("persistence baseline needs regression targets".into()));
        };
        let x = data.step(i, last);
        let pred: Vector = y
            .iter()
            .enumerate()
            .map(|(k, _)| x[target_features[k % target_features.len()]])
            .collect::<Vec<_>>()
            .into();
        let mse = crate::train::mse(pred.as_slice(), y)?;
        acc.add(&pred, Target::Values(y), mse);
    }
    acc.report(data.normalized, 0)
}

/// Per-step `T`, `C`, `S` and switch values for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    pub t: Vec<Vector>,
    pub c: Vec<Vector>,
    pub s: Vec<Vector>,
    pub m: Vec<Vector>,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// CSV with header `step,unit,T,C,S,m` and one row per (step, unit).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,unit,T,C,S,m\n");
        for step in 0..self.len() {
            for unit in 0..self.s[step].len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    step, unit, self.t[step][unit], self.c[step][unit], self.s[step][unit], self.m[step][unit]
                ));
            }
        }
        out
    }
}

pub fn trace_sequence(model: &Model, steps: &[Vector], init: &CellState) -> Result<StateTrace> {
    let fwd = forward_sequence(model, steps, init)?;
    let mut out = StateTrace {
        t: Vec::new(),
        c: Vec::new(),
        s: Vec::new(),
        m: Vec::new(),
    };
    for trace in &fwd.traces {
        let (state, m) = match trace {
            Trace::Petnn(t) => (&t.out, t.m.clone()),
            Trace::Vanilla(t) => {
                let h = t.s.len();
                out.t.push(Vector::zeros(h));
                out.c.push(Vector::zeros(h));
                out.s.push(t.s.clone());
                out.m.push(Vector::zeros(h));
                continue;
            }
        };
        out.t.push(state.t.clone());
        out.c.push(state.c.clone());
        out.s.push(state.s.clone());
        out.m.push(m);
    }
    Ok(out)
}

/// Trace one sequence from a zero state and write it as CSV.
pub fn export_trace(model: &Model, steps: &[Vector], path: &Path) -> Result<StateTrace> {
    let trace = trace_sequence(model, steps, &CellState::zeros(model.hidden_dim()))?;
    crate::io::write_atomic(path, trace.to_csv().as_bytes())?;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub params: u64,
    pub seq_len: u64,
    pub flops_per_step: u64,
    pub recurrent_flops: u64,
    pub head_flops: u64,
    pub flops_per_sequence: u64,
}

/// Parameters of cell and head; FLOPs are `seq_len` cell steps plus one read-out.
pub fn efficiency_report(model: &Model, seq_len: usize) -> EfficiencyReport {
    let per_step = model.flop_count_per_step();
    let recurrent = per_step * seq_len as u64;
    let head = model.head_flops();
    EfficiencyReport {
        params: model.param_count(),
        seq_len: seq_len as u64,
        flops_per_step: per_step,
        recurrent_flops: recurrent,
        head_flops: head,
        flops_per_sequence: recurrent + head,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellConfig;
    use crate::linalg::{InitScheme, Rng};
    use crate::tasks::{gen_first_token_recall, SequenceBatch, TaskKind, Targets};

    #[test]
    fn perfect_predictor_scores_zero() {
        let mut acc = MetricsAccumulator::default();
        let y = Vector::from(vec![0.5, -1.0]);
        acc.add(&y, Target::Values(&[0.5, -1.0]), 0.0);
        let r = acc.report(false, 0).unwrap();
        assert_eq!((r.mse, r.mae, r.accuracy), (0.0, 0.0, None));
        assert!(MetricsAccumulator::default().report(false, 0).is_err());
    }

    #[test]
    fn constant_class_predictor_hits_chance() {
        let k = 4;
        let data = gen_first_token_recall(&mut Rng::new(1), 4000, 2, k).unwrap();
        let mut acc = MetricsAccumulator::default();
        let logits = Vector::from(vec![1.0, 0.0, 0.0, 0.0]);
        for i in 0..data.len() {
            acc.add(&logits, data.target(i), 0.0);
        }
        let a = acc.report(false, 0).unwrap().accuracy.unwrap();
        assert!((a - 0.25).abs() < 0.03, "{a}");
    }

    #[test]
    fn evaluate_is_repeatable() {
        let data = gen_first_token_recall(&mut Rng::new(2), 20, 5, 3).unwrap();
        let model = Model::petnn(CellConfig::new(7, 4), 3, &mut Rng::new(3), InitScheme::GlorotUniform).unwrap();
        let before = model.clone();
        let a = evaluate(&model, &data, ResetPolicy::RESET, LossKind::CrossEntropy).unwrap();
        let b = evaluate(&model, &data, ResetPolicy::RESET, LossKind::CrossEntropy).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        assert_eq!(model, before);
    }

    #[test]
    fn trace_cardinality_and_switch_consistency() {
        let model = Model::petnn(CellConfig::new(2, 2), 1, &mut Rng::new(5), InitScheme::GlorotUniform).unwrap();
        let steps: Vec<Vector> = (0..3).map(|t| Vector::from(vec![t as f64 * 0.3, -0.2])).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = export_trace(&model, &steps, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 6);
        assert_eq!(trace.len(), 3);
        for row in rows {
            let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
            assert!(cols[5] == 0.0 || cols[5] == 1.0);
            if cols[5] == 1.0 {
                assert_eq!(cols[2], 0.0);
            }
        }
    }

    #[test]
    fn persistence_on_constant_windows_is_exact() {
        let data = SequenceBatch::new(
            vec![1.0, 2.0, 3.0, 3.0],
            (2, 2, 1),
            Targets::Values { out_dim: 2, data: vec![2.0, 2.0, 3.0, 3.0] },
            TaskKind::Regression,
        )
        .unwrap();
        let r = persistence_baseline(&data, &[0]).unwrap();
        assert_eq!(r.mse, 0.0);
    }

    #[test]
    fn efficiency_linear_in_length() {
        let model = Model::petnn(CellConfig::new(1, 1), 1, &mut Rng::new(1), InitScheme::Zero).unwrap();
        let a = efficiency_report(&model, 50);
        let b = efficiency_report(&model, 100);
        assert_eq!(b.recurrent_flops, 2 * a.recurrent_flops);
        assert_eq!(a.params, 16 + 2);
    }
}
