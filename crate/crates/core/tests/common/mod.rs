//! Scalar, unit-at-a-time reference for the cell forward step.
#![allow(dead_code)]

use std::collections::HashMap;

use petnn_core::cell::{Activation, BoundaryRule, CellConfig, MixSquash, UpdateVariant};
use petnn_core::{CellParams, Parameters};

pub struct RefOut {
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub m: Vec<f64>,
    pub t_raw: Vec<f64>,
    pub i: Vec<f64>,
    pub z_c: Vec<f64>,
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `Σ_k W[j][k]·u[k] + b[j]` for one row.
fn row(w: &[f64], b: &[f64], cols: usize, j: usize, u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..cols {
        acc += w[j * cols + k] * u[k];
    }
    acc + b[j]
}

pub fn reference_step(cfg: &CellConfig, p: &CellParams, t: &[f64], c: &[f64], s: &[f64], x: &[f64]) -> RefOut {
    let blocks: HashMap<&str, &[f64]> = p.blocks().into_iter().map(|b| (b.name, b.data)).collect();
    let (d, h) = (cfg.input_dim, cfg.hidden_dim);
    let j_dim = d + h;
    let mut u = x.to_vec();
    u.extend_from_slice(s);

    let mut out = RefOut {
        t: vec![0.0; h],
        c: vec![0.0; h],
        s: vec![0.0; h],
        m: vec![0.0; h],
        t_raw: vec![0.0; h],
        i: vec![0.0; h],
        z_c: vec![0.0; h],
    };

    // Switch values first: the candidate for every unit reads the whole memory path.
    for j in 0..h {
        let z_t = row(blocks["W_zt"], blocks["b_zt"], j_dim, j, &u);
        let r = row(blocks["W_r"], blocks["b_r"], d, j, x);
        let t_raw = r * act(cfg.time_activation, t[j] + z_t) - 1.0;
        let release = match cfg.boundary_rule {
            BoundaryRule::ReleaseOnLeqZero => t_raw <= 0.0,
            BoundaryRule::ReleaseOnLtZero => t_raw < 0.0,
        };
        out.t_raw[j] = t_raw;
        out.m[j] = if release { 1.0 } else { 0.0 };
        out.t[j] = if release { 0.0 } else { t_raw };
    }

    let mut cand_in = x.to_vec();
    for j in 0..h {
        cand_in.push(s[j] * (1.0 - out.m[j]) * c[j]);
    }

    for j in 0..h {
        let z_c = row(blocks["W_zc"], blocks["b_zc"], j_dim, j, &u);
        let z_w = row(blocks["W_zw"], blocks["b_zw"], j_dim, j, &u);
        let i = row(blocks["W_i"], blocks["b_i"], d, j, x);
        out.i[j] = i;
        out.z_c[j] = z_c;
        out.c[j] = if out.m[j] == 1.0 { i + z_c } else { c[j] + z_c };
        let hc = act(cfg.candidate_activation, row(blocks["W_h"], blocks["b_h"], j_dim, j, &cand_in));
        out.s[j] = match cfg.update_variant {
            UpdateVariant::SelfSelective => {
                let w = match cfg.mix_gate_squash {
                    MixSquash::Sigmoid => logistic(z_w),
                    MixSquash::None => z_w,
                };
                act(cfg.output_activation, (1.0 - w) * s[j] + w * hc)
            }
            UpdateVariant::TraditionalGating => {
                let f = logistic(row(blocks["W_f"], blocks["b_f"], j_dim, j, &u));
                let g = logistic(row(blocks["W_u"], blocks["b_u"], j_dim, j, &u));
                f * s[j] + g * hc
            }
            UpdateVariant::QuasiLinear => z_w * s[j] + hc,
            UpdateVariant::ExpGating => {
                let e = row(blocks["W_g"], blocks["b_g"], j_dim, j, &u).exp();
                let w = e / (e + 1.0 + 1e-12);
                act(cfg.output_activation, (1.0 - w) * s[j] + w * hc)
            }
        };
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

use petnn_core::linalg::Rng;

pub fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(lo, hi)).collect()
}

/// Random configuration with `d, h ≤ max_dim`, cycling through variants and boundary rules by `i`.
pub fn random_config(rng: &mut Rng, i: usize, max_dim: usize) -> CellConfig {
    let d = 1 + rng.below(max_dim);
    let h = 1 + rng.below(max_dim);
    let mut cfg = CellConfig::new(d, h).with_variant(UpdateVariant::ALL[i % 4]);
    cfg.boundary_rule = if (i / 4) % 2 == 0 {
        BoundaryRule::ReleaseOnLeqZero
    } else {
        BoundaryRule::ReleaseOnLtZero
    };
    cfg.time_activation = [Activation::Sigmoid, Activation::Tanh][rng.below(2)];
    cfg.candidate_activation = [Activation::Tanh, Activation::Sigmoid][rng.below(2)];
    cfg.output_activation = [Activation::Tanh, Activation::Sigmoid, Activation::Identity][rng.below(3)];
    cfg.mix_gate_squash = [MixSquash::Sigmoid, MixSquash::None][rng.below(2)];
    cfg
}

/// Parameters with every entry uniform in `[-1, 1]` and decay biases in `[0, 3]`,
/// which yields a mix of held and released units.
pub fn random_params(rng: &mut Rng, cfg: &CellConfig) -> CellParams {
    let mut p = CellParams::zeros(cfg);
    for (name, data) in p.blocks_mut() {
        let (lo, hi) = if name == "b_r" { (0.0, 3.0) } else { (-1.0, 1.0) };
        for v in data.iter_mut() {
            *v = rng.uniform_range(lo, hi);
        }
    }
    p
}

/// Force unit 0 to land exactly on `t_raw = 0` when `t_prev[0] = 0` and the time activation is sigmoid.
pub fn pin_unit_zero_to_boundary(p: &mut CellParams, cfg: &CellConfig) {
    let j = cfg.input_dim + cfg.hidden_dim;
    let d = cfg.input_dim;
    for (name, data) in p.blocks_mut() {
        match name {
            "W_zt" => data[..j].fill(0.0),
            "b_zt" => data[0] = 0.0,
            "W_r" => data[..d].fill(0.0),
            "b_r" => data[0] = 2.0,
            _ => {}
        }
    }
}
