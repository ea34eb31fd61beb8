mod common;

use common::rel_err;
use fpdsim::array::{build_panel, PanelConfig, Scene};
use fpdsim::circuit::ReadoutChain;
use fpdsim::device::{photocurrent, MosfetParams};
use fpdsim::validation::{led_test, multi_pixel_response, pulsed_response, Stimulus, BENCH_LED_LUX};
use proptest::prelude::*;

fn led_panel() -> fpdsim::array::Panel {
    build_panel(&PanelConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lit_set_is_cartesian_product(lux in proptest::collection::vec(0.0f64..1.5, 16), v_ref in 0.0f64..6.0) {
        let led = led_test(&led_panel(), &Scene::new(4, 4, lux).unwrap(), v_ref).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                prop_assert_eq!(led.is_lit(r, c), led.line_out[r] == 5.0 && led.row_out[c] == 5.0);
            }
        }
    }

    #[test]
    fn raising_threshold_never_adds_leds(lux in proptest::collection::vec(0.0f64..1.5, 16),
                                         v_ref in 0.0f64..6.0, dv in 0.0f64..2.0) {
        let panel = led_panel();
        let scene = Scene::new(4, 4, lux).unwrap();
        let lo = led_test(&panel, &scene, v_ref).unwrap();
        let hi = led_test(&panel, &scene, v_ref + dv).unwrap();
        for (a, b) in lo.lit.iter().zip(&hi.lit) {
            prop_assert!(*a || !*b);
        }
    }

    #[test]
    fn transposed_scene_transposes_leds(lux in proptest::collection::vec(0.0f64..1.5, 16), v_ref in 0.0f64..6.0) {
        let panel = led_panel();
        let scene = Scene::new(4, 4, lux).unwrap();
        let a = led_test(&panel, &scene, v_ref).unwrap();
        let b = led_test(&panel, &scene.transpose(), v_ref).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                prop_assert_eq!(a.is_lit(r, c), b.is_lit(c, r));
            }
        }
    }
}

#[test]
fn every_single_bright_pixel_lights_only_itself() {
    let panel = led_panel();
    for k in 0..16 {
        let mut lux = vec![0.0; 16];
        lux[k] = 1.0;
        let led = led_test(&panel, &Scene::new(4, 4, lux).unwrap(), 0.5).unwrap();
        assert_eq!(led.lit_set(), vec![(k / 4, k % 4)]);
    }
}

#[test]
fn bright_pixel_at_one_two() {
    // dark line sum ~4 pA -> 4 uV; bright pixel at 1 lux -> ~1 V on line 1 and row 2
    let panel = led_panel();
    let mut lux = vec![0.0; 16];
    lux[4 + 2] = 1.0;
    let led = led_test(&panel, &Scene::new(4, 4, lux).unwrap(), 0.5).unwrap();
    assert_eq!(led.lit_set(), vec![(1, 2)]);
    assert_eq!(led.line_out, vec![0.0, 5.0, 0.0, 0.0]);
    assert_eq!(led.row_out, vec![0.0, 0.0, 5.0, 0.0]);
}

#[test]
fn threshold_above_range_lights_nothing() {
    let led = led_test(&led_panel(), &Scene::uniform(4, 4, 1.0).unwrap(), 10.0).unwrap();
    assert!(led.lit_set().is_empty());
}

fn fast_pulse(amplitude: f64, baseline: f64, chain: &ReadoutChain) -> (Stimulus, f64) {
    let tau = chain
        .time_constant(photocurrent(&chain.photodiode, baseline).unwrap())
        .unwrap();
    (Stimulus::pulse_train(amplitude, 20.0 * tau, 0.5, baseline), tau)
}

#[test]
fn duty_one_is_a_step() {
    let chain = ReadoutChain::default();
    let stim = Stimulus::pulse_train(0.4, 1e-6, 1.0, 0.1);
    let a = pulsed_response(&chain, &stim, 5e-9, 2e-6).unwrap();
    let b = fpdsim::circuit::simulate_transient(&chain, |t| if t > 0.0 { 0.5 } else { 0.1 }, 5e-9, 2e-6).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pulse_train_reaches_periodic_steady_state() {
    let chain = ReadoutChain::default();
    let (stim, tau) = fast_pulse(BENCH_LED_LUX, 0.1, &chain);
    let per_period = 400;
    let dt = stim.period / per_period as f64;
    let tr = pulsed_response(&chain, &stim, dt, 12.0 * stim.period).unwrap();
    assert!(tau > 0.0);
    let v: Vec<f64> = tr.samples.iter().map(|s| s.v_out).collect();
    let base = v[0];
    let p10: Vec<f64> = v[10 * per_period..11 * per_period].to_vec();
    let p11: Vec<f64> = v[11 * per_period..12 * per_period].to_vec();
    let rms = |x: &mut dyn Iterator<Item = f64>| {
        let (s, n) = x.fold((0.0, 0usize), |(s, n), d| (s + d * d, n + 1));
        (s / n as f64).sqrt()
    };
    let diff = rms(&mut p10.iter().zip(&p11).map(|(a, b)| a - b));
    let signal = rms(&mut p10.iter().map(|a| a - base));
    assert!(diff <= 1e-3 * signal, "diff {diff} signal {signal}");
}

#[test]
fn small_pulses_scale_linearly() {
    let chain = ReadoutChain::default();
    let baseline = 0.4;
    let amp = 0.002;
    let (stim, _) = fast_pulse(amp, baseline, &chain);
    let dt = stim.period / 200.0;
    let t_end = 3.0 * stim.period;
    let dev = |a: f64| -> Vec<f64> {
        let s = Stimulus { amplitude: a, ..stim };
        let tr = pulsed_response(&chain, &s, dt, t_end).unwrap();
        let b = tr.samples[0].v_out;
        tr.samples.iter().map(|p| p.v_out - b).collect()
    };
    let one = dev(amp);
    let peak = one.iter().cloned().fold(0.0, f64::max);
    for a in [0.5, 2.0, 3.0] {
        let scaled = dev(amp * a);
        for (x, y) in one.iter().zip(&scaled) {
            assert!((y - a * x).abs() <= 0.01 * a * peak, "scale {a}");
        }
    }
}

#[test]
fn one_pixel_set_equals_single_chain() {
    let panel = build_panel(&PanelConfig {
        seed: 3,
        ..PanelConfig::default()
    })
    .unwrap();
    let stim = Stimulus::pulse_train(BENCH_LED_LUX, 2e-6, 0.5, 0.05);
    let single = pulsed_response(panel.chain(2, 1), &stim, 1e-8, 4e-6).unwrap();
    let multi = multi_pixel_response(&panel, &[(2, 1)], &stim, 1e-8, 4e-6).unwrap();
    assert_eq!(single, multi);
}

#[test]
fn mismatched_pixels_superpose() {
    let sigma = 0.02;
    let mut cfg = PanelConfig {
        seed: 99,
        ..PanelConfig::default()
    };
    let p = MosfetParams {
        sigma_rel: sigma,
        ..MosfetParams::pmos_default()
    };
    let n = MosfetParams {
        sigma_rel: sigma,
        ..MosfetParams::nmos_default()
    };
    cfg.chain = ReadoutChain::from_devices(p, n, 1.0, 1.0);
    let panel = build_panel(&cfg).unwrap();
    let stim = Stimulus::pulse_train(BENCH_LED_LUX, 2e-6, 0.5, 0.05);
    let pixels = [(0, 0), (1, 3), (3, 2)];
    let joint = multi_pixel_response(&panel, &pixels, &stim, 1e-8, 4e-6).unwrap();
    let parts: Vec<_> = pixels
        .iter()
        .map(|&(r, c)| pulsed_response(panel.chain(r, c), &stim, 1e-8, 4e-6).unwrap())
        .collect();
    for (k, s) in joint.samples.iter().enumerate() {
        let sum: f64 = parts.iter().map(|t| t.samples[k].i_out).sum();
        assert!(rel_err(s.i_out, sum) <= 1e-9);
    }
    // distinct chains really differ
    assert_ne!(parts[0].samples[50].i_out, parts[1].samples[50].i_out);
}
