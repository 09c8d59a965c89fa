//! Unrolled forward pass over a sequence and its reverse-order gradient.

use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{Model, Trace};

#[derive(Debug, Clone)]
pub struct SequenceForward {
    pub traces: Vec<Trace>,
    pub final_state: CellState,
    /// Head output read from the final hidden state.
    pub output: Vector,
}

pub fn forward_sequence(model: &Model, steps: &[Vector], init: &CellState) -> Result<SequenceForward> {
    if steps.is_empty() {
        return Err(Error::Empty("sequence"));
    }
    let mut state = init.clone();
    let mut traces = Vec::with_capacity(steps.len());
    for (t, x) in steps.iter().enumerate() {
        let (next, trace) = model.step(&state, x).map_err(|e| e.at_step(t))?;
        traces.push(trace);
        state = next;
    }
    let output = model.head.forward(&state.s)?;
    if !output.is_finite() {
        return Err(Error::NonFinite {
            stage: "readout",
            step: Some(steps.len()),
        });
    }
    Ok(SequenceForward {
        traces,
        final_state: state,
        output,
    })
}

/// Gradients with respect to the initial state and every input step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGrads {
    pub init_state: CellState,
    pub inputs: Vec<Vector>,
}

/// Accumulate `∂L/∂θ` into `grads` given `d_output = ∂L/∂y` and, optionally,
/// a direct gradient on the final state. With `window = Some(k)` only the last
/// `k` steps are unrolled; earlier steps receive zero gradient.
pub fn backward_sequence(
    model: &Model,
    fwd: &SequenceForward,
    d_output: &Vector,
    d_final: Option<&CellState>,
    window: Option<usize>,
    grads: &mut Model,
) -> Result<SequenceGrads> {
    let h = model.hidden_dim();
    if fwd.traces.is_empty() {
        return Err(Error::Empty("trace"));
    }
    if d_output.len() != model.out_dim() {
        return Err(Error::shape("backward_sequence/output", (model.out_dim(), 1), (d_output.len(), 1)));
    }
    grads.head.w_out.add_outer(d_output, &fwd.final_state.s)?;
    grads.head.b_out.add_assign(d_output)?;
    let mut g = match d_final {
        Some(d) => d.clone(),
        None => CellState::zeros(h),
    };
    g.s.add_assign(&model.head.w_out.matvec_t(d_output)?)?;

    let len = fwd.traces.len();
    let stop = window.map_or(0, |k| len.saturating_sub(k));
    let mut inputs = vec![Vector::zeros(model.input_dim()); len];
    for t in (stop..len).rev() {
        let step = model.step_backward_into(&fwd.traces[t], &g, grads)?;
        inputs[t] = step.x;
        g = step.state;
    }
    if stop > 0 {
        g = CellState::zeros(h);
    }
    Ok(SequenceGrads { init_state: g, inputs })
}
