//! The energy-transition recurrent cell.
//!
//! Each hidden unit carries three quantities: a remaining time `T`, a stored
//! energy `C` and an emitted hidden state `S`. One step runs:
//!
//! ```text
//! u      = [x, s_prev]
//! z_t    = W_zt·u + b_zt        z_c = W_zc·u + b_zc        z_w = W_zw·u + b_zw
//! i      = W_i·x + b_i          r   = W_r·x + b_r
//! t_raw  = r ⊙ σ_time(t_prev + z_t) − 1
//! m      = [t_raw ≤ 0]          t   = (1 − m) ⊙ t_raw
//! c      = (1 − m) ⊙ c_prev + m ⊙ i + z_c
//! h      = act_cand(W_h·[x, s_prev ⊙ (1 − m) ⊙ c_prev] + b_h)
//! s      = act_out((1 − w) ⊙ s_prev + w ⊙ h),   w = squash(z_w)
//! ```
//!
//! The last line is replaced by one of the alternative update strategies when
//! [`UpdateVariant`] says so. The switch `m` is a hard threshold; the backward
//! pass treats it as a constant (straight-through).

mod backward;
mod count;

pub use backward::{step_backward, step_backward_into, InputGrads};
pub use count::{flop_count_per_step, param_count};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{init_weights, sigmoid, InitScheme, Matrix, Rng, Vector};
use crate::params::{Block, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_vec(self, x: &Vector) -> Vector {
        x.map(|v| self.apply(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixSquash {
    #[default]
    Sigmoid,
    /// Use the raw mixing weight verbatim.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Release when `t_raw ≤ 0`.
    #[default]
    ReleaseOnLeqZero,
    /// Release when `t_raw < 0`.
    ReleaseOnLtZero,
}

impl BoundaryRule {
    pub fn releases(self, t_raw: f64) -> bool {
        match self {
            BoundaryRule::ReleaseOnLeqZero => t_raw <= 0.0,
            BoundaryRule::ReleaseOnLtZero => t_raw < 0.0,
        }
    }
}

/// Strategy used to form the new hidden state from `s_prev` and the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateVariant {
    /// Learned convex mix of old state and candidate.
    #[default]
    SelfSelective,
    /// LSTM-style forget and update gates: `s = f ⊙ s_prev + g ⊙ h`.
    TraditionalGating,
    /// `s = z_w ⊙ s_prev + h`, no squashing.
    QuasiLinear,
    /// Convex mix whose weight comes from a stabilized exponential gate.
    ExpGating,
}

impl UpdateVariant {
    pub const ALL: [UpdateVariant; 4] = [
        UpdateVariant::SelfSelective,
        UpdateVariant::TraditionalGating,
        UpdateVariant::QuasiLinear,
        UpdateVariant::ExpGating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UpdateVariant::SelfSelective => "self_selective",
            UpdateVariant::TraditionalGating => "traditional_gating",
            UpdateVariant::QuasiLinear => "quasi_linear",
            UpdateVariant::ExpGating => "exp_gating",
        }
    }
}

/// Floor added to the exponential gate's normalizer.
pub const EXP_GATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "default_time_activation")]
    pub time_activation: Activation,
    #[serde(default = "default_tanh")]
    pub candidate_activation: Activation,
    #[serde(default = "default_tanh")]
    pub output_activation: Activation,
    #[serde(default)]
    pub mix_gate_squash: MixSquash,
    #[serde(default)]
    pub boundary_rule: BoundaryRule,
    #[serde(default)]
    pub update_variant: UpdateVariant,
}

fn default_time_activation() -> Activation {
    Activation::Sigmoid
}

fn default_tanh() -> Activation {
    Activation::Tanh
}

impl CellConfig {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        CellConfig {
            input_dim,
            hidden_dim,
            time_activation: Activation::Sigmoid,
            candidate_activation: Activation::Tanh,
            output_activation: Activation::Tanh,
            mix_gate_squash: MixSquash::Sigmoid,
            boundary_rule: BoundaryRule::ReleaseOnLeqZero,
            update_variant: UpdateVariant::SelfSelective,
        }
    }

    pub fn with_variant(mut self, variant: UpdateVariant) -> Self {
        self.update_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "cell dimensions must be at least 1 (input_dim={}, hidden_dim={})",
                self.input_dim, self.hidden_dim
            )));
        }
        if self.time_activation == Activation::Identity {
            return Err(Error::Config("time_activation must be sigmoid or tanh".into()));
        }
        if self.candidate_activation == Activation::Identity {
            return Err(Error::Config("candidate_activation must be tanh or sigmoid".into()));
        }
        Ok(())
    }

    /// Width of `[x, s]`.
    pub fn joint_dim(&self) -> usize {
        self.input_dim + self.hidden_dim
    }
}

/// Parameters that only some update variants use.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantParams {
    None,
    Gates {
        w_f: Matrix,
        b_f: Vector,
        w_u: Matrix,
        b_u: Vector,
    },
    ExpGate {
        w_g: Matrix,
        b_g: Vector,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub w_zt: Matrix,
    pub b_zt: Vector,
    pub w_zc: Matrix,
    pub b_zc: Vector,
    pub w_zw: Matrix,
    pub b_zw: Vector,
    pub w_i: Matrix,
    pub b_i: Vector,
    pub w_r: Matrix,
    pub b_r: Vector,
    pub w_h: Matrix,
    pub b_h: Vector,
    pub extra: VariantParams,
}

impl CellParams {
    pub fn zeros(cfg: &CellConfig) -> Self {
        let (d, h, j) = (cfg.input_dim, cfg.hidden_dim, cfg.joint_dim());
        let extra = match cfg.update_variant {
            UpdateVariant::TraditionalGating => VariantParams::Gates {
                w_f: Matrix::zeros(h, j),
                b_f: Vector::zeros(h),
                w_u: Matrix::zeros(h, j),
                b_u: Vector::zeros(h),
            },
            UpdateVariant::ExpGating => VariantParams::ExpGate {
                w_g: Matrix::zeros(h, j),
                b_g: Vector::zeros(h),
            },
            _ => VariantParams::None,
        };
        CellParams {
            w_zt: Matrix::zeros(h, j),
            b_zt: Vector::zeros(h),
            w_zc: Matrix::zeros(h, j),
            b_zc: Vector::zeros(h),
            w_zw: Matrix::zeros(h, j),
            b_zw: Vector::zeros(h),
            w_i: Matrix::zeros(h, d),
            b_i: Vector::zeros(h),
            w_r: Matrix::zeros(h, d),
            b_r: Vector::zeros(h),
            w_h: Matrix::zeros(h, j),
            b_h: Vector::zeros(h),
            extra,
        }
    }

    /// Weights drawn per `scheme`, biases zero. Matrices are drawn in
    /// canonical block order. Quasi-linear then zeroes `W_zw`: its raw
    /// multiplier on `s_prev` starts at 0 (`S_t = h_t`) instead of a random
    /// value that can exceed 1 and compound over long sequences.
    pub fn init(cfg: &CellConfig, rng: &mut Rng, scheme: InitScheme) -> Self {
        let mut p = CellParams::zeros(cfg);
        for (name, data) in p.blocks_mut() {
            if name.starts_with("W_") {
                let rows = cfg.hidden_dim;
                let cols = data.len() / rows;
                data.copy_from_slice(init_weights(rng, rows, cols, scheme).as_slice());
            }
        }
        if cfg.update_variant == UpdateVariant::QuasiLinear {
            p.w_zw.as_mut_slice().fill(0.0);
        }
        p
    }

    /// Set the bias of whichever gate admits the candidate into `s`. Negative
    /// values make the initial cell favour keeping `s_prev`. Self-selective
    /// sets `b_zw`, exponential gating `b_g`, traditional gating `b_u = v` and
    /// `b_f = −v`. Quasi-linear has no such gate and is left unchanged.
    pub fn set_update_gate_bias(&mut self, cfg: &CellConfig, v: f64) {
        match (cfg.update_variant, &mut self.extra) {
            (UpdateVariant::SelfSelective, _) => self.b_zw.as_mut_slice().fill(v),
            (UpdateVariant::ExpGating, VariantParams::ExpGate { b_g, .. }) => b_g.as_mut_slice().fill(v),
            (UpdateVariant::TraditionalGating, VariantParams::Gates { b_f, b_u, .. }) => {
                b_u.as_mut_slice().fill(v);
                b_f.as_mut_slice().fill(-v);
            }
            _ => {}
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_zt.len()
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols()
    }

    fn check_shapes(&self, cfg: &CellConfig) -> Result<()> {
        let reference = CellParams::zeros(cfg);
        for (a, b) in self.blocks().iter().zip(reference.blocks()) {
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(Error::shape(b.name, (b.rows, b.cols), (a.rows, a.cols)));
            }
        }
        if self.blocks().len() != reference.blocks().len() {
            return Err(Error::Config(format!(
                "parameters do not carry the blocks needed by {}",
                cfg.update_variant.name()
            )));
        }
        Ok(())
    }
}

fn mat_block<'a>(name: &'static str, m: &'a Matrix) -> Block<'a> {
    Block {
        name,
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_slice(),
    }
}

fn vec_block<'a>(name: &'static str, v: &'a Vector) -> Block<'a> {
    Block {
        name,
        rows: v.len(),
        cols: 1,
        data: v.as_slice(),
    }
}

impl Parameters for CellParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = vec![
            mat_block("W_zt", &self.w_zt),
            vec_block("b_zt", &self.b_zt),
            mat_block("W_zc", &self.w_zc),
            vec_block("b_zc", &self.b_zc),
            mat_block("W_zw", &self.w_zw),
            vec_block("b_zw", &self.b_zw),
            mat_block("W_i", &self.w_i),
            vec_block("b_i", &self.b_i),
            mat_block("W_r", &self.w_r),
            vec_block("b_r", &self.b_r),
            mat_block("W_h", &self.w_h),
            vec_block("b_h", &self.b_h),
        ];
        match &self.extra {
            VariantParams::None => {}
            VariantParams::Gates { w_f, b_f, w_u, b_u } => out.extend([
                mat_block("W_f", w_f),
                vec_block("b_f", b_f),
                mat_block("W_u", w_u),
                vec_block("b_u", b_u),
            ]),
            VariantParams::ExpGate { w_g, b_g } => {
                out.extend([mat_block("W_g", w_g), vec_block("b_g", b_g)])
            }
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("W_zt", self.w_zt.as_mut_slice()),
            ("b_zt", self.b_zt.as_mut_slice()),
            ("W_zc", self.w_zc.as_mut_slice()),
            ("b_zc", self.b_zc.as_mut_slice()),
            ("W_zw", self.w_zw.as_mut_slice()),
            ("b_zw", self.b_zw.as_mut_slice()),
            ("W_i", self.w_i.as_mut_slice()),
            ("b_i", self.b_i.as_mut_slice()),
            ("W_r", self.w_r.as_mut_slice()),
            ("b_r", self.b_r.as_mut_slice()),
            ("W_h", self.w_h.as_mut_slice()),
            ("b_h", self.b_h.as_mut_slice()),
        ];
        match &mut self.extra {
            VariantParams::None => {}
            VariantParams::Gates { w_f, b_f, w_u, b_u } => out.extend([
                ("W_f", w_f.as_mut_slice()),
                ("b_f", b_f.as_mut_slice()),
                ("W_u", w_u.as_mut_slice()),
                ("b_u", b_u.as_mut_slice()),
            ]),
            VariantParams::ExpGate { w_g, b_g } => {
                out.extend([("W_g", w_g.as_mut_slice()), ("b_g", b_g.as_mut_slice())])
            }
        }
        out
    }
}

/// Per-unit remaining time, stored energy and hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub t: Vector,
    pub c: Vector,
    pub s: Vector,
}

impl CellState {
    pub fn zeros(h: usize) -> Self {
        CellState {
            t: Vector::zeros(h),
            c: Vector::zeros(h),
            s: Vector::zeros(h),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.s.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.c.is_finite() && self.s.is_finite()
    }
}

/// Intermediates of the hidden-state update, by strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum MixTrace {
    /// Self-selective and exponential gating: `s = act_out((1 − w)·s_prev + w·h)`.
    Convex { w: Vector, s_pre: Vector },
    /// `s = f·s_prev + g·h`.
    Gated { u: Vector, f: Vector, g: Vector },
    /// `s = z_w·s_prev + h`.
    QuasiLinear,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub x: Vector,
    pub s_prev: Vector,
    pub c_prev: Vector,
    pub t_prev: Vector,
    /// `[x, s_prev]`.
    pub joint: Vector,
    pub z_t: Vector,
    pub z_c: Vector,
    pub z_w_raw: Vector,
    pub i_t: Vector,
    pub r_t: Vector,
    /// `σ_time(t_prev + z_t)`.
    pub t_act: Vector,
    pub t_raw: Vector,
    /// Release switch, exactly 0.0 or 1.0 per unit.
    pub m: Vector,
    /// `[x, s_prev ⊙ (1 − m) ⊙ c_prev]`.
    pub cand_input: Vector,
    pub h: Vector,
    pub mix: MixTrace,
    pub out: CellState,
}

/// `(z_t, z_c, z_w_raw)`.
pub fn compute_gates(p: &CellParams, x: &Vector, s_prev: &Vector) -> Result<(Vector, Vector, Vector)> {
    let joint = x.concat(s_prev);
    Ok((
        p.w_zt.affine(&joint, &p.b_zt)?,
        p.w_zc.affine(&joint, &p.b_zc)?,
        p.w_zw.affine(&joint, &p.b_zw)?,
    ))
}

/// `(i_t, r_t)`: ground level and decay rate, from the input only.
pub fn compute_ground_and_decay(p: &CellParams, x: &Vector) -> Result<(Vector, Vector)> {
    Ok((p.w_i.affine(x, &p.b_i)?, p.w_r.affine(x, &p.b_r)?))
}

/// Unclamped remaining time `r ⊙ σ(t_prev + z_t) − 1`.
pub fn update_time(t_prev: &Vector, z_t: &Vector, r_t: &Vector, cfg: &CellConfig) -> Result<Vector> {
    let act = cfg.time_activation.apply_vec(&t_prev.add(z_t)?);
    Ok(r_t.mul(&act)?.map(|v| v - 1.0))
}

/// `(m, t_new)`: released units get `m = 1` and `t = 0`.
pub fn compute_switch(t_raw: &Vector, cfg: &CellConfig) -> (Vector, Vector) {
    let m = t_raw.map(|t| if cfg.boundary_rule.releases(t) { 1.0 } else { 0.0 });
    let t = t_raw.map(|t| if cfg.boundary_rule.releases(t) { 0.0 } else { t });
    (m, t)
}

/// `(1 − m) ⊙ c_prev + m ⊙ i + z_c`.
pub fn update_cell_state(c_prev: &Vector, m: &Vector, i_t: &Vector, z_c: &Vector) -> Result<Vector> {
    let n = c_prev.len();
    for (op, other) in [("update_cell_state/m", m), ("update_cell_state/i", i_t), ("update_cell_state/z_c", z_c)] {
        if other.len() != n {
            return Err(Error::shape(op, (n, 1), (other.len(), 1)));
        }
    }
    Ok((0..n)
        .map(|k| (1.0 - m[k]) * c_prev[k] + m[k] * i_t[k] + z_c[k])
        .collect::<Vec<_>>()
        .into())
}

fn memory_path(s_prev: &Vector, c_prev: &Vector, m: &Vector) -> Result<Vector> {
    s_prev.mul(&m.map(|v| 1.0 - v))?.mul(c_prev)
}

/// Candidate `act(W_h·[x, s_prev ⊙ (1 − m) ⊙ c_prev] + b_h)`.
pub fn compute_candidate(
    p: &CellParams,
    x: &Vector,
    s_prev: &Vector,
    c_prev: &Vector,
    m: &Vector,
    cfg: &CellConfig,
) -> Result<Vector> {
    let input = x.concat(&memory_path(s_prev, c_prev, m)?);
    Ok(cfg.candidate_activation.apply_vec(&p.w_h.affine(&input, &p.b_h)?))
}

/// Result of a hidden-state update: new state plus the trace of how it was mixed.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenUpdate {
    pub s: Vector,
    pub mix: MixTrace,
}

fn convex_mix(s_prev: &Vector, h: &Vector, w: Vector, act_out: Activation) -> Result<HiddenUpdate> {
    if s_prev.len() != h.len() || w.len() != h.len() {
        return Err(Error::shape("convex_mix", (s_prev.len(), h.len()), (w.len(), 1)));
    }
    let s_pre: Vector = (0..h.len())
        .map(|k| (1.0 - w[k]) * s_prev[k] + w[k] * h[k])
        .collect::<Vec<_>>()
        .into();
    Ok(HiddenUpdate {
        s: act_out.apply_vec(&s_pre),
        mix: MixTrace::Convex { w, s_pre },
    })
}

/// Self-selective mix `act_out((1 − w) ⊙ s_prev + w ⊙ h)` with `w = squash(z_w_raw)`.
pub fn update_hidden(s_prev: &Vector, h: &Vector, z_w_raw: &Vector, cfg: &CellConfig) -> Result<HiddenUpdate> {
    let w = match cfg.mix_gate_squash {
        MixSquash::Sigmoid => z_w_raw.sigmoid(),
        MixSquash::None => z_w_raw.clone(),
    };
    convex_mix(s_prev, h, w, cfg.output_activation)
}

/// `f ⊙ s_prev + g ⊙ h` with sigmoid forget/update gates on `[x, s_prev]`.
pub fn update_hidden_traditional_gating(p: &CellParams, joint: &Vector, s_prev: &Vector, h: &Vector) -> Result<HiddenUpdate> {
    let VariantParams::Gates { w_f, b_f, w_u, b_u } = &p.extra else {
        return Err(Error::Config("traditional_gating needs gate parameters".into()));
    };
    let f = w_f.affine(joint, b_f)?.sigmoid();
    let g = w_u.affine(joint, b_u)?.sigmoid();
    let s = f.mul(s_prev)?.add(&g.mul(h)?)?;
    Ok(HiddenUpdate {
        s,
        mix: MixTrace::Gated { u: joint.clone(), f, g },
    })
}

/// `z_w_raw ⊙ s_prev + h`.
pub fn update_hidden_quasi_linear(s_prev: &Vector, h: &Vector, z_w_raw: &Vector) -> Result<HiddenUpdate> {
    Ok(HiddenUpdate {
        s: z_w_raw.mul(s_prev)?.add(h)?,
        mix: MixTrace::QuasiLinear,
    })
}

/// `exp(z) / (exp(z) + 1 + ε)`, evaluated without overflow.
pub fn exp_gate(z: f64) -> f64 {
    let k = 1.0 + EXP_GATE_EPS;
    if z >= 0.0 {
        1.0 / (1.0 + k * (-z).exp())
    } else {
        let e = z.exp();
        e / (e + k)
    }
}

/// Convex mix whose weight is the stabilized exponential gate of `W_g·[x, s_prev] + b_g`.
pub fn update_hidden_exp_gating(p: &CellParams, joint: &Vector, s_prev: &Vector, h: &Vector, cfg: &CellConfig) -> Result<HiddenUpdate> {
    let VariantParams::ExpGate { w_g, b_g } = &p.extra else {
        return Err(Error::Config("exp_gating needs gate parameters".into()));
    };
    let w = w_g.affine(joint, b_g)?.map(exp_gate);
    convex_mix(s_prev, h, w, cfg.output_activation)
}

fn finite(v: &Vector, stage: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { stage, step: None })
    }
}

/// One forward step. Returns the new state together with its trace.
pub fn step(p: &CellParams, state: &CellState, x: &Vector, cfg: &CellConfig) -> Result<(CellState, StepTrace)> {
    let h = cfg.hidden_dim;
    if x.len() != cfg.input_dim {
        return Err(Error::shape("step/x", (cfg.input_dim, 1), (x.len(), 1)));
    }
    for v in [&state.t, &state.c, &state.s] {
        if v.len() != h {
            return Err(Error::shape("step/state", (h, 1), (v.len(), 1)));
        }
    }
    p.check_shapes(cfg)?;

    let joint = x.concat(&state.s);
    let (z_t, z_c, z_w_raw) = compute_gates(p, x, &state.s)?;
    finite(&z_t, "gates")?;
    finite(&z_c, "gates")?;
    finite(&z_w_raw, "gates")?;
    let (i_t, r_t) = compute_ground_and_decay(p, x)?;
    finite(&i_t, "ground_and_decay")?;
    finite(&r_t, "ground_and_decay")?;

    let t_act = cfg.time_activation.apply_vec(&state.t.add(&z_t)?);
    let t_raw = r_t.mul(&t_act)?.map(|v| v - 1.0);
    finite(&t_raw, "time")?;
    let (m, t_new) = compute_switch(&t_raw, cfg);
    let c_new = update_cell_state(&state.c, &m, &i_t, &z_c)?;
    finite(&c_new, "cell_state")?;

    let cand_input = x.concat(&memory_path(&state.s, &state.c, &m)?);
    let h_val = cfg.candidate_activation.apply_vec(&p.w_h.affine(&cand_input, &p.b_h)?);
    finite(&h_val, "candidate")?;

    let update = match cfg.update_variant {
        UpdateVariant::SelfSelective => update_hidden(&state.s, &h_val, &z_w_raw, cfg)?,
        UpdateVariant::TraditionalGating => update_hidden_traditional_gating(p, &joint, &state.s, &h_val)?,
        UpdateVariant::QuasiLinear => update_hidden_quasi_linear(&state.s, &h_val, &z_w_raw)?,
        UpdateVariant::ExpGating => update_hidden_exp_gating(p, &joint, &state.s, &h_val, cfg)?,
    };
    finite(&update.s, "hidden")?;

    let out = CellState {
        t: t_new,
        c: c_new,
        s: update.s,
    };
    let trace = StepTrace {
        x: x.clone(),
        s_prev: state.s.clone(),
        c_prev: state.c.clone(),
        t_prev: state.t.clone(),
        joint,
        z_t,
        z_c,
        z_w_raw,
        i_t,
        r_t,
        t_act,
        t_raw,
        m,
        cand_input,
        h: h_val,
        mix: update.mix,
        out: out.clone(),
    };
    Ok((out, trace))
}
