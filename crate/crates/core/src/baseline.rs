//! Elman RNN used as a reference under the same training harness:
//! `s = tanh(W_xh·x + W_hh·s_prev + b)`.

use serde::{Deserialize, Serialize};

use crate::cell::{CellState, InputGrads};
use crate::error::{Error, Result};
use crate::linalg::{init_weights, InitScheme, Matrix, Rng, Vector};
use crate::params::{Block, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanillaConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanillaRnn {
    pub w_xh: Matrix,
    pub w_hh: Matrix,
    pub b_h: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanillaTrace {
    pub x: Vector,
    pub s_prev: Vector,
    pub s: Vector,
}

impl VanillaRnn {
    pub fn zeros(cfg: &VanillaConfig) -> Self {
        VanillaRnn {
            w_xh: Matrix::zeros(cfg.hidden_dim, cfg.input_dim),
            w_hh: Matrix::zeros(cfg.hidden_dim, cfg.hidden_dim),
            b_h: Vector::zeros(cfg.hidden_dim),
        }
    }

    pub fn init(cfg: &VanillaConfig, rng: &mut Rng, scheme: InitScheme) -> Self {
        VanillaRnn {
            w_xh: init_weights(rng, cfg.hidden_dim, cfg.input_dim, scheme),
            w_hh: init_weights(rng, cfg.hidden_dim, cfg.hidden_dim, scheme),
            b_h: Vector::zeros(cfg.hidden_dim),
        }
    }

    pub fn config(&self) -> VanillaConfig {
        VanillaConfig {
            input_dim: self.w_xh.cols(),
            hidden_dim: self.w_xh.rows(),
        }
    }

    /// Only `s` is used; `t` and `c` pass through as zeros.
    pub fn step(&self, state: &CellState, x: &Vector) -> Result<(CellState, VanillaTrace)> {
        let pre = self.w_xh.affine(x, &self.b_h)?.add(&self.w_hh.matvec(&state.s)?)?;
        let s = pre.tanh();
        if !s.is_finite() {
            return Err(Error::NonFinite { stage: "rnn", step: None });
        }
        let h = s.len();
        let trace = VanillaTrace {
            x: x.clone(),
            s_prev: state.s.clone(),
            s: s.clone(),
        };
        Ok((
            CellState {
                t: Vector::zeros(h),
                c: Vector::zeros(h),
                s,
            },
            trace,
        ))
    }

    pub fn step_backward_into(&self, trace: &VanillaTrace, grad_out: &CellState, grads: &mut VanillaRnn) -> Result<InputGrads> {
        let dpre: Vector = grad_out
            .s
            .iter()
            .zip(trace.s.iter())
            .map(|(g, s)| g * (1.0 - s * s))
            .collect::<Vec<_>>()
            .into();
        grads.w_xh.add_outer(&dpre, &trace.x)?;
        grads.w_hh.add_outer(&dpre, &trace.s_prev)?;
        grads.b_h.add_assign(&dpre)?;
        let h = trace.s.len();
        Ok(InputGrads {
            state: CellState {
                t: Vector::zeros(h),
                c: Vector::zeros(h),
                s: self.w_hh.matvec_t(&dpre)?,
            },
            x: self.w_xh.matvec_t(&dpre)?,
        })
    }
}

impl Parameters for VanillaRnn {
    fn blocks(&self) -> Vec<Block<'_>> {
        vec![
            Block {
                name: "W_xh",
                rows: self.w_xh.rows(),
                cols: self.w_xh.cols(),
                data: self.w_xh.as_slice(),
            },
            Block {
                name: "W_hh",
                rows: self.w_hh.rows(),
                cols: self.w_hh.cols(),
                data: self.w_hh.as_slice(),
            },
            Block {
                name: "b_h",
                rows: self.b_h.len(),
                cols: 1,
                data: self.b_h.as_slice(),
            },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("W_xh", self.w_xh.as_mut_slice()),
            ("W_hh", self.w_hh.as_mut_slice()),
            ("b_h", self.b_h.as_mut_slice()),
        ]
    }
}

/// `h·(d + h + 1)`.
pub fn param_count(cfg: &VanillaConfig) -> u64 {
    let (d, h) = (cfg.input_dim as u64, cfg.hidden_dim as u64);
    h * (d + h + 1)
}

/// Same FLOP convention as the cell: two transforms, bias add, tanh.
pub fn flop_count_per_step(cfg: &VanillaConfig) -> u64 {
    let (d, h) = (cfg.input_dim as u64, cfg.hidden_dim as u64);
    2 * h * d + 2 * h * h + 2 * h + 4 * h
}
