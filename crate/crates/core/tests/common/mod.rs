//! Test-only oracles, independent of the library's Newton solvers and device
//! evaluation code.

#![allow(dead_code)]

use fpdsim::circuit::ReadoutChain;
use fpdsim::device::MosfetParams;

/// Square-law drain current, NMOS frame, written out separately from the
/// library model.
pub fn square_law(m: &MosfetParams, vov: f64, vds: f64) -> f64 {
    if vov <= 0.0 || vds <= 0.0 {
        0.0
    } else if vds < vov {
        m.kp * (2.0 * vov * vds - vds * vds) * (1.0 + m.lambda * vds)
    } else {
        m.kp * vov * vov * (1.0 + m.lambda * vds)
    }
}

/// Root of a monotone `f` on `[lo, hi]`, bisected until the interval cannot
/// shrink further in floating point.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let increasing = f(hi) > f(lo);
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below = f(mid) < 0.0;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nested bisection through the chain: M1 overdrive first, then the line
/// and row diode nodes. Returns `(i_line, i_row)`.
pub fn chain_oracle(chain: &ReadoutChain, i_photo: f64) -> (f64, f64) {
    let m1 = chain.pixel_mirror.reference;
    let y = if i_photo == 0.0 {
        0.0
    } else {
        bisect(
            |y| square_law(&m1, y, m1.vth + y) - i_photo,
            0.0,
            chain.vdd - m1.vth,
        )
    };
    let branch = |out_idx: usize, bus: &fpdsim::circuit::MirrorSpec| -> f64 {
        let m_out = chain.pixel_mirror.outputs[out_idx];
        let vov_out = y + (m1.vth - m_out.vth);
        let sink = bus.reference;
        let feed = |x: f64| {
            chain.pixel_mirror.ratio * square_law(&m_out, vov_out, chain.vdd - sink.vth - x)
        };
        let x = if feed(0.0) <= 0.0 {
            0.0
        } else {
            bisect(
                |x| feed(x) - square_law(&sink, x, sink.vth + x),
                0.0,
                chain.vdd - sink.vth,
            )
        };
        let m5 = bus.outputs[0];
        bus.ratio * square_law(&m5, x + (sink.vth - m5.vth), chain.v_sense)
    };
    (branch(0, &chain.line_mirror), branch(1, &chain.row_mirror))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_sweep(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Node conductance from a central finite difference of the DC
/// diode curve `i -> |vgs|`.
pub fn fd_conductance(m1: &MosfetParams, i: f64) -> f64 {
    let h = 1e-4 * i;
    let v_hi = fpdsim::device::diode_connected_vgs(m1, i + h).unwrap().abs();
    let v_lo = fpdsim::device::diode_connected_vgs(m1, i - h).unwrap().abs();
    2.0 * h / (v_hi - v_lo)
}
