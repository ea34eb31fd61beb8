//! DC and transient solution of the per-pixel readout chain.
//!
//! Topology (all voltages in each device's NMOS frame):
//!
//! ```text
//!   Vdd ──┬──────────────┬──────────────┐
//!        M1 (diode)     M2             M3           pixel PMOS mirror
//!         │              │              │
//!    photodiode     line node      row node
//!         │          M4 (diode)     M4' (diode)     line / row NMOS mirrors
//!        gnd         M5 → TIA       M5' → TIA
//! ```
//!
//! The photodiode sinks `i_photo` from the M1 node. M2 and M3 copy the M1
//! current into the diode-connected references M4 and M4' of the line and
//! row mirrors, whose outputs M5 and M5' feed transimpedance stages held at
//! `v_sense`. Node unknowns are expressed as device overdrives so that
//! picoampere operating points keep full relative precision.

use serde::{Deserialize, Serialize};

use crate::device::{photocurrent, MosfetParams, PhotodiodeParams};
use crate::error::{FpdError, Result};
use crate::newton::{self, NewtonFailure, NewtonOptions};
use crate::seed;

/// A diode-connected reference device and one or more output devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorSpec {
    pub reference: MosfetParams,
    pub outputs: Vec<MosfetParams>,
    /// Output-to-reference width ratio, applied to every output.
    pub ratio: f64,
}

impl MirrorSpec {
    pub fn matched(device: MosfetParams, n_outputs: usize, ratio: f64) -> Self {
        MirrorSpec {
            reference: device,
            outputs: vec![device; n_outputs],
            ratio,
        }
    }

    /// Independent mismatch draw for every device; device `k` (0 is the
    /// reference) uses seed `derive(seed, [k])`.
    pub fn with_mismatch(&self, seed: u64) -> Self {
        let draw = |k: usize, m: &MosfetParams| {
            crate::device::apply_mismatch(m, seed::derive(seed, &[k as u64]))
        };
        MirrorSpec {
            reference: draw(0, &self.reference),
            outputs: self
                .outputs
                .iter()
                .enumerate()
                .map(|(k, m)| draw(k + 1, m))
                .collect(),
            ratio: self.ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return Err(FpdError::domain(format!(
                "mirror ratio must be > 0, got {}",
                self.ratio
            )));
        }
        if self.outputs.is_empty() {
            return Err(FpdError::domain("mirror needs at least one output"));
        }
        self.reference.validate()?;
        for out in &self.outputs {
            out.validate()?;
            if out.polarity != self.reference.polarity {
                return Err(FpdError::domain(
                    "mirror reference and outputs must share polarity",
                ));
            }
        }
        Ok(())
    }

    /// Overdrive of output `idx` when the reference runs at `ref_ov`.
    fn output_overdrive(&self, idx: usize, ref_ov: f64) -> f64 {
        ref_ov + (self.reference.vth - self.outputs[idx].vth)
    }

    fn output_current(&self, idx: usize, ref_ov: f64, vds: f64) -> f64 {
        self.ratio
            * self.outputs[idx].current_at_overdrive(self.output_overdrive(idx, ref_ov), vds)
    }

    fn feed(&self, idx: usize, ref_ov: f64) -> Feed {
        Feed {
            device: self.outputs[idx],
            vov: self.output_overdrive(idx, ref_ov),
            ratio: self.ratio,
        }
    }
}

/// Current of the first mirror output for input current `i_in`, with the
/// output device at drain-source magnitude `v_out`.
pub fn mirror_dc(spec: &MirrorSpec, i_in: f64, v_out: f64, vdd: f64) -> Result<f64> {
    spec.validate()?;
    if !(i_in >= 0.0 && i_in.is_finite()) {
        return Err(FpdError::domain(format!("mirror input must be >= 0, got {i_in}")));
    }
    if !(0.0..=vdd).contains(&v_out) {
        return Err(FpdError::domain(format!(
            "mirror output voltage {v_out} outside [0, {vdd}]"
        )));
    }
    let ref_ov = spec.reference.diode_overdrive(i_in, &NewtonOptions::default())?;
    let v_g = spec.reference.vth + ref_ov;
    if v_g > vdd {
        return Err(FpdError::Compliance {
            what: "mirror reference".into(),
            required: v_g,
            available: vdd,
        });
    }
    Ok(spec.output_current(0, ref_ov, v_out))
}

/// An output device sourcing current into a shared diode node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Feed {
    device: MosfetParams,
    vov: f64,
    ratio: f64,
}

impl Feed {
    fn eval(&self, vds: f64) -> (f64, f64) {
        let (i, _, di_dvds) = self.device.eval(self.vov, vds);
        (self.ratio * i, self.ratio * di_dvds)
    }
}

fn solver_error(what: &str, e: NewtonFailure, opts: &NewtonOptions) -> FpdError {
    match e {
        NewtonFailure::NoBracket { f_lo, .. } => FpdError::Solver {
            what: format!("{what} (root not bracketed)"),
            iterations: 0,
            residual: f_lo,
            time: None,
        },
        NewtonFailure::MaxIterations { residual, .. } => FpdError::Solver {
            what: what.to_string(),
            iterations: opts.max_iter,
            residual,
            time: None,
        },
    }
}

/// Overdrive of the diode-connected `sink` when `feeds` push current into
/// its node from the supply. KCL: `sum(feeds) = I_sink`.
pub(crate) fn solve_sink_node(
    sink: &MosfetParams,
    feeds: &[Feed],
    vdd: f64,
    opts: &NewtonOptions,
) -> Result<f64> {
    let hi = vdd - sink.vth;
    if hi <= 0.0 {
        return Err(FpdError::Compliance {
            what: "mirror reference threshold".into(),
            required: sink.vth,
            available: vdd,
        });
    }
    let residual = |x: f64| {
        let vds_sink = sink.vth + x;
        let (mut i_in, mut di_in) = (0.0, 0.0);
        for f in feeds {
            let (i, di_dvds) = f.eval(vdd - vds_sink);
            i_in += i;
            di_in -= di_dvds;
        }
        let (i_s, d_ov, d_ds) = sink.eval(x, vds_sink);
        (i_in - i_s, di_in - d_ov - d_ds)
    };
    let i_max = residual(0.0).0;
    if i_max <= 0.0 {
        return Ok(0.0);
    }
    let x0 = (i_max / sink.kp).sqrt();
    newton::solve(residual, x0, 0.0, hi, i_max, opts)
        .map_err(|e| solver_error("mirror node KCL", e, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutChain {
    /// PMOS M1 (reference) with outputs M2 (line branch) and M3 (row branch).
    pub pixel_mirror: MirrorSpec,
    /// NMOS M4 (reference) and M5.
    pub line_mirror: MirrorSpec,
    /// NMOS M4' (reference) and M5'.
    pub row_mirror: MirrorSpec,
    /// Transimpedance gain, volts per ampere.
    pub r_trans: f64,
    pub vdd: f64,
    /// Drain voltage at which the transimpedance inputs hold M5 and M5'.
    pub v_sense: f64,
    pub photodiode: PhotodiodeParams,
    pub solver: NewtonOptions,
}

impl Default for ReadoutChain {
    fn default() -> Self {
        ReadoutChain::from_devices(
            MosfetParams::pmos_default(),
            MosfetParams::nmos_default(),
            1.0,
            1.0,
        )
    }
}

pub const LINE_BRANCH: usize = 0;
pub const ROW_BRANCH: usize = 1;

impl ReadoutChain {
    /// Matched chain from one PMOS and one NMOS template.
    pub fn from_devices(pmos: MosfetParams, nmos: MosfetParams, pixel_ratio: f64, bus_ratio: f64) -> Self {
        ReadoutChain {
            pixel_mirror: MirrorSpec::matched(pmos, 2, pixel_ratio),
            line_mirror: MirrorSpec::matched(nmos, 1, bus_ratio),
            row_mirror: MirrorSpec::matched(nmos, 1, bus_ratio),
            r_trans: 1e6,
            vdd: 5.0,
            v_sense: 2.5,
            photodiode: PhotodiodeParams::default(),
            solver: NewtonOptions::default(),
        }
    }

    /// Unity-ratio chain with lambda = 0 and no mismatch: a pure current copier.
    pub fn ideal() -> Self {
        let mut p = MosfetParams::pmos_default();
        let mut n = MosfetParams::nmos_default();
        p.lambda = 0.0;
        n.lambda = 0.0;
        ReadoutChain::from_devices(p, n, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.pixel_mirror.validate()?;
        self.line_mirror.validate()?;
        self.row_mirror.validate()?;
        self.photodiode.validate()?;
        if self.pixel_mirror.outputs.len() < 2 {
            return Err(FpdError::domain("pixel mirror needs line and row outputs"));
        }
        if !(self.vdd > 0.0 && self.vdd.is_finite()) {
            return Err(FpdError::domain(format!("vdd must be > 0, got {}", self.vdd)));
        }
        if !(self.r_trans > 0.0 && self.r_trans.is_finite()) {
            return Err(FpdError::domain(format!(
                "r_trans must be > 0, got {}",
                self.r_trans
            )));
        }
        if !(self.v_sense > 0.0 && self.v_sense <= self.vdd) {
            return Err(FpdError::domain(format!(
                "v_sense must lie in (0, vdd], got {}",
                self.v_sense
            )));
        }
        Ok(())
    }

    /// Overdrive of M1 carrying `i_photo` at DC.
    pub fn pixel_overdrive(&self, i_photo: f64) -> Result<f64> {
        if !(i_photo >= 0.0 && i_photo.is_finite()) {
            return Err(FpdError::domain(format!(
                "photocurrent must be >= 0, got {i_photo}"
            )));
        }
        let m1 = &self.pixel_mirror.reference;
        let hi = self.vdd - m1.vth;
        if hi <= 0.0 || m1.current_at_overdrive(hi, self.vdd) < i_photo {
            let need = m1.vth + m1.diode_overdrive(i_photo, &self.solver)?;
            return Err(FpdError::Compliance {
                what: "pixel reference M1".into(),
                required: need,
                available: self.vdd,
            });
        }
        m1.diode_overdrive(i_photo, &self.solver)
    }

    /// Current delivered by pixel branch `branch` (0 = line, 1 = row) into
    /// its bus node when M1 runs at overdrive `pixel_ov`.
    pub(crate) fn pixel_feed(&self, branch: usize, pixel_ov: f64) -> Feed {
        self.pixel_mirror.feed(branch, pixel_ov)
    }

    fn bus_output(&self, mirror: &MirrorSpec, feeds: &[Feed]) -> Result<f64> {
        let x = solve_sink_node(&mirror.reference, feeds, self.vdd, &self.solver)?;
        Ok(mirror.output_current(0, x, self.v_sense))
    }

    /// Line-mirror output for an arbitrary set of pixel feeds sharing its node.
    pub(crate) fn line_output(&self, feeds: &[Feed]) -> Result<f64> {
        self.bus_output(&self.line_mirror, feeds)
    }

    pub(crate) fn row_output(&self, feeds: &[Feed]) -> Result<f64> {
        self.bus_output(&self.row_mirror, feeds)
    }

    /// Line and row output currents with M1 at overdrive `pixel_ov`.
    pub fn outputs_at_overdrive(&self, pixel_ov: f64) -> Result<(f64, f64)> {
        let i_line = self.line_output(&[self.pixel_feed(LINE_BRANCH, pixel_ov)])?;
        let i_row = self.row_output(&[self.pixel_feed(ROW_BRANCH, pixel_ov)])?;
        Ok((i_line, i_row))
    }

    /// Analytic small-signal conductance of the M1 node at `i_photo`.
    pub fn node_conductance(&self, i_photo: f64) -> Result<f64> {
        let y = self.pixel_overdrive(i_photo)?;
        let m1 = &self.pixel_mirror.reference;
        let (_, d_ov, d_ds) = m1.eval(y, m1.vth + y);
        Ok(d_ov + d_ds)
    }

    /// Linearized time constant `c_node / g` of the M1 node at `i_photo`.
    pub fn time_constant(&self, i_photo: f64) -> Result<f64> {
        Ok(self.photodiode.c_node / self.node_conductance(i_photo)?)
    }

    /// Per-device mismatch using the coordinate-derived seeds of a panel
    /// pixel. Line and row mirrors are keyed by their bus index.
    pub fn with_mismatch(&self, pixel_seed: u64, line_seed: u64, row_seed: u64) -> Self {
        ReadoutChain {
            pixel_mirror: self.pixel_mirror.with_mismatch(pixel_seed),
            line_mirror: self.line_mirror.with_mismatch(line_seed),
            row_mirror: self.row_mirror.with_mismatch(row_seed),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutSample {
    pub i_line: f64,
    pub i_row: f64,
    pub v_line: f64,
    pub v_row: f64,
}

/// DC operating point of the full chain for a given photocurrent.
pub fn solve_pixel_chain(chain: &ReadoutChain, i_photo: f64) -> Result<ReadoutSample> {
    let y = chain.pixel_overdrive(i_photo)?;
    let (i_line, i_row) = chain.outputs_at_overdrive(y)?;
    Ok(ReadoutSample {
        i_line,
        i_row,
        v_line: chain.r_trans * i_line,
        v_row: chain.r_trans * i_row,
    })
}

/// Kirchhoff sum of currents entering one node, Neumaier-compensated.
pub fn sum_at_node<I>(currents: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in currents {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub i_out: f64,
    pub v_out: f64,
}

/// Uniformly sampled time series of the line output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub samples: Vec<TraceSample>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn currents(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.i_out)
    }
}

pub(crate) fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FpdError::domain(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end >= dt && t_end.is_finite()) {
        return Err(FpdError::domain(format!(
            "t_end must be >= dt, got t_end={t_end}, dt={dt}"
        )));
    }
    Ok((t_end / dt * (1.0 + 1e-12)).floor() as usize)
}

/// Backward-Euler integration of `c_node * dy/dt = i_photo(t) - I_M1(y)` for
/// the M1 overdrive `y`, starting from the DC point at `stimulus(0)`.
/// Downstream mirror nodes are treated as quasi-static.
pub fn simulate_transient<S>(chain: &ReadoutChain, stimulus: S, dt: f64, t_end: f64) -> Result<Trace>
where
    S: Fn(f64) -> f64,
{
    chain.validate()?;
    let n = step_count(dt, t_end)?;
    let m1 = chain.pixel_mirror.reference;
    let c = chain.photodiode.c_node;
    let hi = chain.vdd - m1.vth;
    let opts = chain.solver;

    let sample = |t: f64, y: f64| -> Result<TraceSample> {
        let (i_out, _) = chain.outputs_at_overdrive(y)?;
        Ok(TraceSample {
            t,
            i_out,
            v_out: chain.r_trans * i_out,
        })
    };

    let mut y = chain.pixel_overdrive(photocurrent(&chain.photodiode, stimulus(0.0))?)?;
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(sample(0.0, y)?);

    for k in 1..=n {
        let t = k as f64 * dt;
        let ip = photocurrent(&chain.photodiode, stimulus(t)).map_err(|e| match e {
            FpdError::Domain(msg) => FpdError::Domain(format!("{msg} at t={t:e} s")),
            other => other,
        })?;
        let y_prev = y;
        let residual = |v: f64| {
            let (i, d_ov, d_ds) = m1.eval(v, m1.vth + v);
            (c * (v - y_prev) / dt + i - ip, c / dt + d_ov + d_ds)
        };
        let lo = y_prev.min(0.0);
        if residual(hi).0 < 0.0 {
            return Err(FpdError::Compliance {
                what: format!("pixel node at t={t:e} s"),
                required: m1.vth + hi,
                available: chain.vdd,
            });
        }
        let scale = ip.max(m1.current_at_overdrive(y_prev, m1.vth + y_prev));
        y = newton::solve(residual, y_prev, lo, hi, scale, &opts)
            .map_err(|e| solver_error("implicit Euler step", e, &opts).at_time(t))?;
        samples.push(sample(t, y).map_err(|e| e.at_time(t))?);
    }
    Ok(Trace { dt, samples })
}
