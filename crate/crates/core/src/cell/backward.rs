//! Analytic gradients of one cell step.
//!
//! The release switch `m` is held constant: no gradient crosses the threshold
//! comparison, but every product that `m` multiplies is differentiated as
//! usual. On released units the clamped `t = 0` passes no gradient back to
//! the time update.

use super::{CellConfig, CellParams, CellState, MixSquash, MixTrace, StepTrace, UpdateVariant, VariantParams};
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Gradients with respect to the step's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub state: CellState,
    pub x: Vector,
}

fn zip2(a: &Vector, b: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>().into()
}

/// Gradients of a scalar loss given `grad_out = ∂L/∂(t, c, s)` of the step's
/// output. Returns fresh parameter gradients alongside the input gradients.
pub fn step_backward(
    p: &CellParams,
    cfg: &CellConfig,
    trace: &StepTrace,
    grad_out: &CellState,
) -> Result<(CellParams, InputGrads)> {
    let mut grads = CellParams::zeros(cfg);
    let input = step_backward_into(p, cfg, trace, grad_out, &mut grads)?;
    Ok((grads, input))
}

/// As [`step_backward`], adding the parameter gradients into `grads`.
pub fn step_backward_into(
    p: &CellParams,
    cfg: &CellConfig,
    trace: &StepTrace,
    grad_out: &CellState,
    grads: &mut CellParams,
) -> Result<InputGrads> {
    let (d, h) = (cfg.input_dim, cfg.hidden_dim);
    if trace.x.len() != d || trace.s_prev.len() != h {
        return Err(Error::shape("step_backward/trace", (d, h), (trace.x.len(), trace.s_prev.len())));
    }
    for g in [&grad_out.t, &grad_out.c, &grad_out.s] {
        if g.len() != h {
            return Err(Error::shape("step_backward/grad_out", (h, 1), (g.len(), 1)));
        }
    }

    let s_prev = &trace.s_prev;
    let keep = trace.m.map(|m| 1.0 - m);
    let mut ds_prev = Vector::zeros(h);
    let mut djoint = Vector::zeros(d + h);
    let mut dz_w = Vector::zeros(h);
    let dh;

    match (&trace.mix, cfg.update_variant) {
        (MixTrace::Convex { w, .. }, UpdateVariant::SelfSelective | UpdateVariant::ExpGating) => {
            let act = cfg.output_activation;
            let ds_pre = zip2(&grad_out.s, &trace.out.s, |g, s| g * act.derivative_from_output(s));
            ds_prev.add_assign(&zip2(&ds_pre, w, |g, w| g * (1.0 - w)))?;
            dh = ds_pre.mul(w)?;
            let dw = ds_pre.mul(&trace.h.sub(s_prev)?)?;
            if cfg.update_variant == UpdateVariant::SelfSelective {
                dz_w = match cfg.mix_gate_squash {
                    MixSquash::Sigmoid => zip2(&dw, w, |g, w| g * w * (1.0 - w)),
                    MixSquash::None => dw,
                };
            } else {
                let dz_g = zip2(&dw, w, |g, w| g * w * (1.0 - w));
                let VariantParams::ExpGate { w_g, .. } = &p.extra else {
                    return Err(Error::Config("exp_gating needs gate parameters".into()));
                };
                let VariantParams::ExpGate { w_g: gw, b_g: gb } = &mut grads.extra else {
                    return Err(Error::Config("gradient buffer lacks exp gate blocks".into()));
                };
                gw.add_outer(&dz_g, &trace.joint)?;
                gb.add_assign(&dz_g)?;
                djoint.add_assign(&w_g.matvec_t(&dz_g)?)?;
            }
        }
        (MixTrace::Gated { u, f, g }, UpdateVariant::TraditionalGating) => {
            let ds = &grad_out.s;
            ds_prev.add_assign(&ds.mul(f)?)?;
            dh = ds.mul(g)?;
            let df = zip2(&ds.mul(s_prev)?, f, |d, f| d * f * (1.0 - f));
            let dg = zip2(&ds.mul(&trace.h)?, g, |d, g| d * g * (1.0 - g));
            let VariantParams::Gates { w_f, w_u, .. } = &p.extra else {
                return Err(Error::Config("traditional_gating needs gate parameters".into()));
            };
            let VariantParams::Gates { w_f: gwf, b_f: gbf, w_u: gwu, b_u: gbu } = &mut grads.extra else {
                return Err(Error::Config("gradient buffer lacks gate blocks".into()));
            };
            gwf.add_outer(&df, u)?;
            gbf.add_assign(&df)?;
            gwu.add_outer(&dg, u)?;
            gbu.add_assign(&dg)?;
            djoint.add_assign(&w_f.matvec_t(&df)?)?;
            djoint.add_assign(&w_u.matvec_t(&dg)?)?;
        }
        (MixTrace::QuasiLinear, UpdateVariant::QuasiLinear) => {
            let ds = &grad_out.s;
            ds_prev.add_assign(&ds.mul(&trace.z_w_raw)?)?;
            dh = ds.clone();
            dz_w = ds.mul(s_prev)?;
        }
        _ => {
            return Err(Error::Config(format!(
                "trace does not match update variant {}",
                cfg.update_variant.name()
            )))
        }
    }

    // candidate
    let cand = cfg.candidate_activation;
    let dh_pre = zip2(&dh, &trace.h, |g, y| g * cand.derivative_from_output(y));
    grads.w_h.add_outer(&dh_pre, &trace.cand_input)?;
    grads.b_h.add_assign(&dh_pre)?;
    let (mut dx, dmem) = p.w_h.matvec_t(&dh_pre)?.split_at(d);
    let gated = dmem.mul(&keep)?;
    ds_prev.add_assign(&gated.mul(&trace.c_prev)?)?;
    let mut dc_prev = gated.mul(s_prev)?;

    // energy
    dc_prev.add_assign(&grad_out.c.mul(&keep)?)?;
    let di = grad_out.c.mul(&trace.m)?;
    let dz_c = grad_out.c.clone();

    // remaining time
    let dt_raw = grad_out.t.mul(&keep)?;
    let dr = dt_raw.mul(&trace.t_act)?;
    let time = cfg.time_activation;
    let dt_pre: Vector = (0..h)
        .map(|k| dt_raw[k] * trace.r_t[k] * time.derivative_from_output(trace.t_act[k]))
        .collect::<Vec<_>>()
        .into();
    let dt_prev = dt_pre.clone();
    let dz_t = dt_pre;

    // input-only transforms
    grads.w_i.add_outer(&di, &trace.x)?;
    grads.b_i.add_assign(&di)?;
    grads.w_r.add_outer(&dr, &trace.x)?;
    grads.b_r.add_assign(&dr)?;
    dx.add_assign(&p.w_i.matvec_t(&di)?)?;
    dx.add_assign(&p.w_r.matvec_t(&dr)?)?;

    // joint transforms
    grads.w_zt.add_outer(&dz_t, &trace.joint)?;
    grads.b_zt.add_assign(&dz_t)?;
    grads.w_zc.add_outer(&dz_c, &trace.joint)?;
    grads.b_zc.add_assign(&dz_c)?;
    grads.w_zw.add_outer(&dz_w, &trace.joint)?;
    grads.b_zw.add_assign(&dz_w)?;
    djoint.add_assign(&p.w_zt.matvec_t(&dz_t)?)?;
    djoint.add_assign(&p.w_zc.matvec_t(&dz_c)?)?;
    djoint.add_assign(&p.w_zw.matvec_t(&dz_w)?)?;

    let (djx, djs) = djoint.split_at(d);
    dx.add_assign(&djx)?;
    ds_prev.add_assign(&djs)?;

    Ok(InputGrads {
        state: CellState {
            t: dt_prev,
            c: dc_prev,
            s: ds_prev,
        },
        x: dx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{step, UpdateVariant};
    use crate::linalg::{InitScheme, Rng};
    use crate::params::Parameters;

    fn setup(variant: UpdateVariant) -> (CellConfig, CellParams, StepTrace) {
        let cfg = CellConfig::new(3, 4).with_variant(variant);
        let mut rng = Rng::new(11);
        let p = CellParams::init(&cfg, &mut rng, InitScheme::GlorotUniform);
        let state = CellState {
            t: Vector::from(vec![0.5, 1.0, 0.0, 2.0]),
            c: Vector::from(vec![0.3, -0.2, 1.1, 0.0]),
            s: Vector::from(vec![0.1, -0.4, 0.2, 0.6]),
        };
        let (_, trace) = step(&p, &state, &Vector::from(vec![0.2, -0.5, 0.9]), &cfg).unwrap();
        (cfg, p, trace)
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        for variant in UpdateVariant::ALL {
            let (cfg, p, trace) = setup(variant);
            let (grads, input) = step_backward(&p, &cfg, &trace, &CellState::zeros(4)).unwrap();
            assert!(grads.flatten().iter().all(|&g| g == 0.0));
            assert_eq!(input.state, CellState::zeros(4));
            assert!(input.x.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn repeated_backward_is_bit_identical() {
        let (cfg, p, trace) = setup(UpdateVariant::SelfSelective);
        let g = CellState {
            t: Vector::filled(4, 0.3),
            c: Vector::filled(4, -0.7),
            s: Vector::filled(4, 1.0),
        };
        let a = step_backward(&p, &cfg, &trace, &g).unwrap();
        let b = step_backward(&p, &cfg, &trace, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatched_trace() {
        let (cfg, p, trace) = setup(UpdateVariant::SelfSelective);
        let other = cfg.with_variant(UpdateVariant::QuasiLinear);
        assert!(step_backward(&p, &other, &trace, &CellState::zeros(4)).is_err());
        assert!(step_backward(&p, &cfg, &trace, &CellState::zeros(3)).is_err());
    }
}
