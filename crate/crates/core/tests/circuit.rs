mod common;

use common::{chain_oracle, fd_conductance, log_sweep, rel_err};
use fpdsim::circuit::{simulate_transient, solve_pixel_chain, sum_at_node, ReadoutChain, Trace};
use fpdsim::device::{photocurrent, MosfetParams};

fn mismatched_chain(sigma: f64, seed: u64) -> ReadoutChain {
    let p = MosfetParams {
        sigma_rel: sigma,
        ..MosfetParams::pmos_default()
    };
    let n = MosfetParams {
        sigma_rel: sigma,
        ..MosfetParams::nmos_default()
    };
    ReadoutChain::from_devices(p, n, 1.0, 1.0).with_mismatch(seed, seed ^ 1, seed ^ 2)
}

#[test]
fn newton_matches_bisection_oracle_default_chain() {
    let chain = ReadoutChain::default();
    for i in log_sweep(1e-12, 4e-6, 100) {
        let s = solve_pixel_chain(&chain, i).unwrap();
        let (l, r) = chain_oracle(&chain, i);
        assert!(rel_err(s.i_line, l) <= 1e-9, "i={i}: {} vs {l}", s.i_line);
        assert!(rel_err(s.i_row, r) <= 1e-9);
    }
}

#[test]
fn newton_matches_oracle_across_mismatch_seeds() {
    for seed in 0..20 {
        let chain = mismatched_chain(0.02, seed);
        for i in log_sweep(1e-10, 2e-6, 15) {
            let s = solve_pixel_chain(&chain, i).unwrap();
            let (l, r) = chain_oracle(&chain, i);
            assert!(rel_err(s.i_line, l) <= 1e-9, "seed {seed} i={i}");
            assert!(rel_err(s.i_row, r) <= 1e-9, "seed {seed} i={i}");
        }
    }
}

#[test]
fn ratioed_mirrors_scale_output() {
    let mut p = MosfetParams::pmos_default();
    let mut n = MosfetParams::nmos_default();
    p.lambda = 0.0;
    n.lambda = 0.0;
    let chain = ReadoutChain::from_devices(p, n, 2.0, 3.0);
    let s = solve_pixel_chain(&chain, 1e-8).unwrap();
    assert!(rel_err(s.i_line, 6e-8) <= 1e-13);
    let (l, _) = chain_oracle(&chain, 1e-8);
    assert!(rel_err(s.i_line, l) <= 1e-9);
}

#[test]
fn sixteen_pixel_sum_equals_individual_sum() {
    let chain = ReadoutChain::ideal();
    let ips: Vec<f64> = (0..16).map(|k| 1e-9 * (1.0 + k as f64)).collect();
    let outs: Vec<f64> = ips
        .iter()
        .map(|&i| solve_pixel_chain(&chain, i).unwrap().i_line)
        .collect();
    let node = sum_at_node(outs.iter().copied());
    let plain: f64 = outs.iter().sum();
    assert!(rel_err(node, plain) <= 1e-15);
}

fn output_voltages(tr: &Trace) -> Vec<f64> {
    tr.samples.iter().map(|s| s.v_out).collect()
}

/// Small step about a 0.4 lux bias with dt = tau/50.
#[test]
fn step_response_follows_first_order_law() {
    let chain = ReadoutChain::default();
    let (base, step) = (0.4, 0.0004);
    let i_bias = photocurrent(&chain.photodiode, base).unwrap();
    let tau = chain.photodiode.c_node / fd_conductance(&chain.pixel_mirror.reference, i_bias);
    // analytic conductance agrees with the finite difference
    assert!(rel_err(tau, chain.time_constant(i_bias).unwrap()) < 1e-6);

    let dt = tau / 50.0;
    let tr = simulate_transient(&chain, |t| if t > 0.0 { base + step } else { base }, dt, 8.0 * tau).unwrap();
    let v = output_voltages(&tr);
    let v0 = v[0];
    let v_final = solve_pixel_chain(&chain, photocurrent(&chain.photodiode, base + step).unwrap())
        .unwrap()
        .v_line;
    let frac = (v[50] - v0) / (v_final - v0);
    let target = 1.0 - (-1.0f64).exp();
    assert!((frac / target - 1.0).abs() <= 0.01, "fraction at tau = {frac}");
    assert!((v[350] - v_final).abs() <= 1e-3 * v_final);
    // monotone approach, no overshoot
    assert!(v.windows(2).all(|w| w[1] >= w[0]));
    assert!(v.iter().all(|&x| x <= v_final * (1.0 + 1e-12)));
}

#[test]
fn implicit_euler_is_first_order() {
    let chain = ReadoutChain::default();
    let (base, step) = (0.4, 0.0004);
    let tau = chain
        .time_constant(photocurrent(&chain.photodiode, base).unwrap())
        .unwrap();
    let stim = |t: f64| if t > 0.0 { base + step } else { base };
    let coarse = tau / 10.0;
    let t_end = 3.0 * tau;
    let run = |div: usize| output_voltages(&simulate_transient(&chain, stim, coarse / div as f64, t_end).unwrap());
    let (v1, v2, vr) = (run(1), run(2), run(8));
    let err = |v: &[f64], stride: usize| {
        (0..v1.len())
            .map(|k| (v[k * stride] - vr[k * 8]).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(&v1, 1) / err(&v2, 2);
    assert!((1.5..=2.5).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn large_steps_stay_stable() {
    // dt far above the time constant: backward Euler must still settle
    let chain = ReadoutChain::default();
    let tr = simulate_transient(&chain, |t| if t > 0.0 { 2.0 } else { 0.0 }, 1e-4, 1e-2).unwrap();
    let v_final = solve_pixel_chain(&chain, photocurrent(&chain.photodiode, 2.0).unwrap())
        .unwrap()
        .v_line;
    let last = tr.samples.last().unwrap().v_out;
    assert!(rel_err(last, v_final) < 1e-9);
}

#[test]
fn trace_time_axis_is_uniform() {
    let chain = ReadoutChain::default();
    let dt = 3.3e-9;
    let tr = simulate_transient(&chain, |_| 0.2, dt, 1e-6).unwrap();
    assert_eq!(tr.samples[0].t, 0.0);
    for w in tr.samples.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(((w[1].t - w[0].t) / dt - 1.0).abs() <= 1e-9);
    }
}
