mod common;

use common::{max_abs_diff, pin_unit_zero_to_boundary, random_config, random_params, reference_step, uniform_vec};
use petnn_core::cell::{step, Activation, BoundaryRule};
use petnn_core::{CellState, Parameters, Rng, Vector};

fn state(t: &[f64], c: &[f64], s: &[f64]) -> CellState {
    CellState {
        t: Vector::from(t),
        c: Vector::from(c),
        s: Vector::from(s),
    }
}

#[test]
fn vectorized_step_matches_scalar_reference() {
    let mut rng = Rng::new(2024);
    let (mut held, mut released) = (0usize, 0usize);
    for i in 0..100 {
        let cfg = random_config(&mut rng, i, 8);
        let p = random_params(&mut rng, &cfg);
        let h = cfg.hidden_dim;
        for _ in 0..5 {
            let x = uniform_vec(&mut rng, cfg.input_dim, -1.0, 1.0);
            let t = uniform_vec(&mut rng, h, -1.0, 3.0);
            let c = uniform_vec(&mut rng, h, -2.0, 2.0);
            let s = uniform_vec(&mut rng, h, -1.0, 1.0);
            let (got, trace) = step(&p, &state(&t, &c, &s), &Vector::from(&x[..]), &cfg).unwrap();
            let want = reference_step(&cfg, &p, &t, &c, &s, &x);
            assert!(max_abs_diff(got.t.as_slice(), &want.t) <= 1e-12, "T, config {i}");
            assert!(max_abs_diff(got.c.as_slice(), &want.c) <= 1e-12, "C, config {i}");
            assert!(max_abs_diff(got.s.as_slice(), &want.s) <= 1e-12, "S, config {i}");
            assert_eq!(trace.m.as_slice(), &want.m[..], "m, config {i}");
            held += want.m.iter().filter(|&&m| m == 0.0).count();
            released += want.m.iter().filter(|&&m| m == 1.0).count();
        }
    }
    assert!(held > 100 && released > 100, "held {held}, released {released}");
}

#[test]
fn exact_zero_follows_the_boundary_rule() {
    let mut rng = Rng::new(11);
    for i in 0..16 {
        let mut cfg = random_config(&mut rng, i, 6);
        cfg.time_activation = Activation::Sigmoid;
        let mut p = random_params(&mut rng, &cfg);
        pin_unit_zero_to_boundary(&mut p, &cfg);
        let h = cfg.hidden_dim;
        let x = uniform_vec(&mut rng, cfg.input_dim, -1.0, 1.0);
        let mut t = uniform_vec(&mut rng, h, -1.0, 3.0);
        t[0] = 0.0;
        let c = uniform_vec(&mut rng, h, -2.0, 2.0);
        let s = uniform_vec(&mut rng, h, -1.0, 1.0);
        let (got, trace) = step(&p, &state(&t, &c, &s), &Vector::from(&x[..]), &cfg).unwrap();
        let want = reference_step(&cfg, &p, &t, &c, &s, &x);
        assert_eq!(trace.t_raw[0], 0.0);
        let expect_m = if cfg.boundary_rule == BoundaryRule::ReleaseOnLeqZero { 1.0 } else { 0.0 };
        assert_eq!(trace.m[0], expect_m);
        assert_eq!(want.m[0], expect_m);
        assert!(max_abs_diff(got.s.as_slice(), &want.s) <= 1e-12);
        assert!(max_abs_diff(got.c.as_slice(), &want.c) <= 1e-12);
    }
}

#[test]
fn release_semantics_hold_exactly_over_long_runs() {
    let mut rng = Rng::new(99);
    let mut counted = 0usize;
    let (mut released, mut held) = (0usize, 0usize);
    for i in 0..50 {
        let mut cfg = random_config(&mut rng, i, 6);
        cfg.output_activation = Activation::Tanh;
        let mut p = random_params(&mut rng, &cfg);
        // Keep |z_w| < 1 so the quasi-linear recursion stays bounded.
        let shrink = 1.0 / (2.0 * (cfg.joint_dim() + 1) as f64);
        for (name, data) in p.blocks_mut() {
            if name == "W_zw" || name == "b_zw" {
                data.iter_mut().for_each(|v| *v *= shrink);
            }
        }
        let h = cfg.hidden_dim;
        let mut st = state(&uniform_vec(&mut rng, h, 0.0, 2.0), &vec![0.0; h], &vec![0.0; h]);
        for _ in 0..2000 {
            let x = Vector::from(uniform_vec(&mut rng, cfg.input_dim, -1.0, 1.0));
            let (next, tr) = step(&p, &st, &x, &cfg).unwrap();
            for k in 0..h {
                if tr.m[k] == 1.0 {
                    assert_eq!(next.c[k], tr.i_t[k] + tr.z_c[k]);
                    assert_eq!(next.t[k], 0.0);
                    released += 1;
                } else {
                    assert_eq!(tr.m[k], 0.0);
                    assert_eq!(next.c[k], st.c[k] + tr.z_c[k]);
                    assert_eq!(next.t[k], tr.t_raw[k]);
                    held += 1;
                }
            }
            counted += 1;
            st = next;
        }
    }
    assert_eq!(counted, 100_000);
    assert!(released > 0 && held > 0);
}
