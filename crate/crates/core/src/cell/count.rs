//! Parameter and FLOP accounting.
//!
//! FLOP convention: a multiply-add is 2 FLOPs, any other elementwise
//! arithmetic op or comparison is 1, and each activation evaluation is 4.

use super::{Activation, CellConfig, MixSquash, UpdateVariant};

const ACTIVATION_FLOPS: u64 = 4;

fn act(a: Activation) -> u64 {
    match a {
        Activation::Identity => 0,
        _ => ACTIVATION_FLOPS,
    }
}

fn affine(rows: u64, cols: u64) -> u64 {
    2 * rows * cols + rows
}

/// Learnable scalars of one cell. The default variant has
/// `4·h·(d+h+1) + 2·h·(d+1)`.
pub fn param_count(cfg: &CellConfig) -> u64 {
    let (d, h) = (cfg.input_dim as u64, cfg.hidden_dim as u64);
    let base = 4 * h * (d + h + 1) + 2 * h * (d + 1);
    let joint_block = h * (d + h + 1);
    base + match cfg.update_variant {
        UpdateVariant::TraditionalGating => 2 * joint_block,
        UpdateVariant::ExpGating => joint_block,
        _ => 0,
    }
}

pub fn flop_count_per_step(cfg: &CellConfig) -> u64 {
    let (d, h) = (cfg.input_dim as u64, cfg.hidden_dim as u64);
    let j = d + h;
    // three joint transforms, two input-only transforms
    let mut flops = 3 * affine(h, j) + 2 * affine(h, d);
    // t_prev + z_t, σ, ·r, −1
    flops += h * (3 + act(cfg.time_activation));
    // threshold
    flops += h;
    // (1−m), ·c_prev, m·i, two adds
    flops += 5 * h;
    // memory path (1−m)·s·c, candidate transform, activation
    flops += 3 * h + affine(h, j) + h * act(cfg.candidate_activation);
    flops += match cfg.update_variant {
        UpdateVariant::SelfSelective => {
            let squash = match cfg.mix_gate_squash {
                MixSquash::Sigmoid => ACTIVATION_FLOPS,
                MixSquash::None => 0,
            };
            h * (squash + 4 + act(cfg.output_activation))
        }
        UpdateVariant::ExpGating => affine(h, j) + h * (ACTIVATION_FLOPS + 4 + act(cfg.output_activation)),
        UpdateVariant::TraditionalGating => 2 * affine(h, j) + h * (2 * ACTIVATION_FLOPS + 3),
        UpdateVariant::QuasiLinear => 2 * h,
    };
    flops
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellParams;
    use crate::params::Parameters;

    #[test]
    fn param_count_examples() {
        assert_eq!(param_count(&CellConfig::new(1, 1)), 16);
        assert_eq!(param_count(&CellConfig::new(2, 3)), 90);
    }

    #[test]
    fn param_count_matches_allocation_for_every_variant() {
        for variant in UpdateVariant::ALL {
            for (d, h) in [(1, 1), (2, 3), (5, 7), (8, 2)] {
                let cfg = CellConfig::new(d, h).with_variant(variant);
                assert_eq!(param_count(&cfg), CellParams::zeros(&cfg).num_scalars() as u64);
            }
        }
    }

    #[test]
    fn flops_grow_with_dims() {
        let small = flop_count_per_step(&CellConfig::new(2, 4));
        let big = flop_count_per_step(&CellConfig::new(2, 8));
        assert!(big > small && small > 0);
    }
}
