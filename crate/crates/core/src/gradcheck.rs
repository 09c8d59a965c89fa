//! Central finite-difference check of the analytic sequence gradient.
//!
//! The scalar under test is a random weighted sum of the read-out output and
//! the final `T`, `C` and `S`, so every path through the cell carries signal.
//! Finite differences only call the forward pass.

use serde::Serialize;

use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};
use crate::model::Model;
use crate::params::Parameters;
use crate::train::{backward_sequence, forward_sequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub eps: f64,
    /// Lower bound on the relative-error denominator.
    pub denom_floor: f64,
    /// Minimum `|t_raw|` over every unit and step for a point to count as safe.
    pub switch_margin: f64,
    pub max_attempts: usize,
    /// Corrupt the analytic gradient. Used to confirm the check can fail.
    pub sabotage: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            eps: 1e-5,
            denom_floor: 1e-4,
            switch_margin: 1e-3,
            max_attempts: 100,
            sabotage: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub name: String,
    pub len: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seq_len: usize,
    pub attempts: usize,
    /// Smallest `|t_raw|` seen at the accepted point; `None` for models without a time channel.
    pub min_abs_t_raw: Option<f64>,
    pub blocks: Vec<BlockError>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error <= tol)
    }
}

/// Weights defining the scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub output: Vector,
    pub final_state: CellState,
}

impl LossWeights {
    pub fn random(rng: &mut Rng, out_dim: usize, hidden_dim: usize) -> Self {
        let mut v = |n: usize| Vector::from((0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>());
        let output = v(out_dim);
        let final_state = CellState {
            t: v(hidden_dim),
            c: v(hidden_dim),
            s: v(hidden_dim),
        };
        LossWeights { output, final_state }
    }

    fn apply(&self, out: &Vector, state: &CellState) -> Result<f64> {
        Ok(out.dot(&self.output)?
            + state.t.dot(&self.final_state.t)?
            + state.c.dot(&self.final_state.c)?
            + state.s.dot(&self.final_state.s)?)
    }
}

fn loss(model: &Model, steps: &[Vector], init: &CellState, w: &LossWeights) -> Result<f64> {
    let fwd = forward_sequence(model, steps, init)?;
    w.apply(&fwd.output, &fwd.final_state)
}

fn min_abs_t_raw(model: &Model, steps: &[Vector], init: &CellState) -> Result<Option<f64>> {
    let fwd = forward_sequence(model, steps, init)?;
    let mut min: Option<f64> = None;
    for tr in &fwd.traces {
        if let Some(p) = tr.as_petnn() {
            for &v in p.t_raw.iter() {
                let a = v.abs();
                min = Some(min.map_or(a, |m: f64| m.min(a)));
            }
        }
    }
    Ok(min)
}

fn state_slot(s: &mut CellState, which: usize, k: usize) -> &mut f64 {
    match which {
        0 => &mut s.t[k],
        1 => &mut s.c[k],
        _ => &mut s.s[k],
    }
}

fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn central<F: FnMut(f64) -> Result<f64>>(x0: f64, eps: f64, mut f: F) -> Result<f64> {
    let plus = f(x0 + eps)?;
    let minus = f(x0 - eps)?;
    Ok((plus - minus) / (2.0 * eps))
}

struct ErrorTally {
    name: String,
    len: usize,
    abs: f64,
    rel: f64,
}

impl ErrorTally {
    fn new(name: impl Into<String>) -> Self {
        ErrorTally {
            name: name.into(),
            len: 0,
            abs: 0.0,
            rel: 0.0,
        }
    }

    fn push(&mut self, analytic: f64, numeric: f64, floor: f64) {
        self.len += 1;
        self.abs = self.abs.max((analytic - numeric).abs());
        self.rel = self.rel.max(rel_error(analytic, numeric, floor));
    }

    fn finish(self) -> BlockError {
        BlockError {
            name: self.name,
            len: self.len,
            max_abs_error: self.abs,
            max_rel_error: self.rel,
        }
    }
}

/// Compare analytic and numeric gradients at one point. Does not check switch
/// safety; see [`gradcheck`] for the resampling driver.
pub fn check_point(model: &Model, steps: &[Vector], init: &CellState, w: &LossWeights, opts: &GradcheckOptions) -> Result<Vec<BlockError>> {
    let fwd = forward_sequence(model, steps, init)?;
    let mut grads = model.zeros_like();
    let seq = backward_sequence(model, &fwd, &w.output, Some(&w.final_state), None, &mut grads)?;
    let distort = if opts.sabotage { 1.0 + 1e-3 } else { 1.0 };
    let (eps, floor) = (opts.eps, opts.denom_floor);

    let mut out = Vec::new();
    let analytic: Vec<(String, Vec<f64>)> = grads.blocks().iter().map(|b| (b.name.to_string(), b.data.to_vec())).collect();
    let mut probe = model.clone();
    for (bi, (name, g)) in analytic.iter().enumerate() {
        let mut tally = ErrorTally::new(name.clone());
        for (k, &ga) in g.iter().enumerate() {
            let x0 = probe.blocks()[bi].data[k];
            let numeric = central(x0, eps, |v| {
                probe.blocks_mut()[bi].1[k] = v;
                loss(&probe, steps, init, w)
            })?;
            probe.blocks_mut()[bi].1[k] = x0;
            tally.push(ga * distort, numeric, floor);
        }
        out.push(tally.finish());
    }

    let mut state = init.clone();
    for (label, which) in [("init_T", 0usize), ("init_C", 1), ("init_S", 2)] {
        let analytic = match which {
            0 => &seq.init_state.t,
            1 => &seq.init_state.c,
            _ => &seq.init_state.s,
        };
        let mut tally = ErrorTally::new(label);
        for k in 0..analytic.len() {
            let x0 = *state_slot(&mut state, which, k);
            let numeric = central(x0, eps, |v| {
                *state_slot(&mut state, which, k) = v;
                loss(model, steps, &state, w)
            })?;
            *state_slot(&mut state, which, k) = x0;
            tally.push(analytic[k] * distort, numeric, floor);
        }
        out.push(tally.finish());
    }

    let mut xs = steps.to_vec();
    let mut tally = ErrorTally::new("inputs");
    for t in 0..xs.len() {
        for k in 0..xs[t].len() {
            let x0 = xs[t][k];
            let numeric = central(x0, eps, |v| {
                xs[t][k] = v;
                loss(model, &xs, init, w)
            })?;
            xs[t][k] = x0;
            tally.push(seq.inputs[t][k] * distort, numeric, floor);
        }
    }
    out.push(tally.finish());
    Ok(out)
}

/// Draw inputs, an initial state and loss weights until every `|t_raw|` clears
/// the switch margin, then run [`check_point`].
pub fn gradcheck(model: &Model, seq_len: usize, rng: &mut Rng, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if seq_len == 0 {
        return Err(Error::Empty("sequence"));
    }
    let (d, h) = (model.input_dim(), model.hidden_dim());
    for attempt in 1..=opts.max_attempts {
        let steps: Vec<Vector> = (0..seq_len)
            .map(|_| Vector::from((0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>()))
            .collect();
        let mut draw = |lo: f64, hi: f64| Vector::from((0..h).map(|_| rng.uniform_range(lo, hi)).collect::<Vec<_>>());
        let init = CellState {
            t: draw(0.0, 2.0),
            c: draw(-1.0, 1.0),
            s: draw(-0.5, 0.5),
        };
        let weights = LossWeights::random(rng, model.out_dim(), h);
        let min_t = min_abs_t_raw(model, &steps, &init)?;
        if min_t.is_some_and(|m| m < opts.switch_margin) {
            log::debug!("gradcheck attempt {attempt}: min |t_raw| = {:.3e}, resampling", min_t.unwrap_or(0.0));
            continue;
        }
        let blocks = check_point(model, &steps, &init, &weights, opts)?;
        return Ok(GradcheckReport {
            seq_len,
            attempts: attempt,
            min_abs_t_raw: min_t,
            blocks,
        });
    }
    Err(Error::Precondition(format!(
        "no switch-safe point (all |t_raw| >= {}) found in {} attempts",
        opts.switch_margin, opts.max_attempts
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{CellConfig, UpdateVariant};
    use crate::linalg::InitScheme;

    #[test]
    fn rel_error_uses_floor() {
        assert_eq!(rel_error(0.0, 0.0, 1e-4), 0.0);
        assert!((rel_error(1e-9, 2e-9, 1e-4) - 1e-5).abs() < 1e-18);
        assert!((rel_error(2.0, 1.0, 1e-4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sabotage_is_detected() {
        let mut rng = Rng::new(3);
        let cfg = CellConfig::new(3, 4).with_variant(UpdateVariant::SelfSelective);
        let model = Model::petnn(cfg, 2, &mut rng, InitScheme::GlorotUniform).unwrap();
        let opts = GradcheckOptions {
            sabotage: true,
            ..Default::default()
        };
        let report = gradcheck(&model, 3, &mut rng, &opts).unwrap();
        assert!(!report.passes(1e-5));
    }
}
