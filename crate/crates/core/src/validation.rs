//! Bench experiments on the simulated matrix: the comparator / AND-gate LED
//! test and pulsed-illumination dynamic responses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{Panel, Scene};
use crate::circuit::{simulate_transient, sum_at_node, ReadoutChain, Trace, TraceSample, LINE_BRANCH, ROW_BRANCH};
use crate::device::{comparator_out, ComparatorSpec};
use crate::error::{FpdError, Result};

/// Default pulse amplitude of the bench LED, lux.
pub const BENCH_LED_LUX: f64 = 0.4;

/// Relative distance within which a sample time is treated as lying on a pulse edge.
const EDGE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Constant,
    Pulse,
}

/// Illumination waveform in lux.
///
/// A pulse train sits at `baseline` at `t <= 0` and, within each period
/// `(nT, (n+1)T]`, rises to `baseline + amplitude` for the first `duty * T`.
/// With `duty = 1` this is a step at `t = 0+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub kind: Waveform,
    pub amplitude: f64,
    pub period: f64,
    pub duty: f64,
    pub baseline: f64,
}

impl Stimulus {
    pub fn constant(lux: f64) -> Self {
        Stimulus {
            kind: Waveform::Constant,
            amplitude: lux,
            period: 0.0,
            duty: 1.0,
            baseline: 0.0,
        }
    }

    pub fn pulse_train(amplitude: f64, period: f64, duty: f64, baseline: f64) -> Self {
        Stimulus {
            kind: Waveform::Pulse,
            amplitude,
            period,
            duty,
            baseline,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.amplitude, self.period, self.duty, self.baseline]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FpdError::domain("stimulus parameters must be finite"));
        }
        if self.amplitude < 0.0 {
            return Err(FpdError::domain("stimulus amplitude must be >= 0"));
        }
        if self.baseline < 0.0 {
            return Err(FpdError::domain("stimulus baseline must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(FpdError::domain("stimulus duty must lie in [0, 1]"));
        }
        if self.kind == Waveform::Pulse && self.period <= 0.0 {
            return Err(FpdError::domain("pulse period must be > 0"));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            Waveform::Constant => self.baseline + self.amplitude,
            Waveform::Pulse => {
                if t <= 0.0 {
                    return self.baseline;
                }
                // snap to the nearest edge so grid-aligned samples classify consistently
                let mut x = t / self.period;
                if (x - x.round()).abs() <= EDGE_SNAP * x.max(1.0) {
                    x = x.round();
                }
                let n = x.ceil() - 1.0;
                let mut frac = x - n;
                if (frac - self.duty).abs() <= EDGE_SNAP * x.max(1.0) {
                    frac = self.duty;
                }
                if frac <= self.duty && self.duty > 0.0 {
                    self.baseline + self.amplitude
                } else {
                    self.baseline
                }
            }
        }
    }
}

/// Result of the LED validation test.
#[derive(Debug, Clone, PartialEq)]
pub struct LedMatrixState {
    pub rows: usize,
    pub cols: usize,
    /// Row-major lit flags.
    pub lit: Vec<bool>,
    /// Comparator output per line, 0 or 5 V.
    pub line_out: Vec<f64>,
    /// Comparator output per row (data column), 0 or 5 V.
    pub row_out: Vec<f64>,
    pub v_line: Vec<f64>,
    pub v_row: Vec<f64>,
}

impl LedMatrixState {
    pub fn is_lit(&self, r: usize, c: usize) -> bool {
        self.lit[r * self.cols + c]
    }

    pub fn lit_set(&self) -> Vec<(usize, usize)> {
        (0..self.rows * self.cols)
            .filter(|&i| self.lit[i])
            .map(|i| (i / self.cols, i % self.cols))
            .collect()
    }
}

/// Comparator per line bus and per row bus, ANDed into the LED grid.
///
/// All pixels drive their buses at once: line `i`'s NMOS mirror sums the
/// line-branch currents of every pixel on that line, and row `j`'s mirror
/// sums the row branches of that column. LED `(i, j)` lights when both the
/// line-`i` and row-`j` comparators are high, so two bright pixels on
/// different lines and rows also light the two crossing "ghost" LEDs.
pub fn led_test(panel: &Panel, scene: &Scene, v_ref: f64) -> Result<LedMatrixState> {
    let ip = panel.photocurrents(scene)?;
    let (rows, cols) = (panel.rows(), panel.cols());
    let ov: Vec<f64> = panel
        .chains()
        .par_iter()
        .zip(ip.par_iter())
        .map(|(ch, &i)| ch.pixel_overdrive(i))
        .collect::<Result<_>>()?;
    let r_trans = panel.cfg.chain.r_trans;

    let v_line: Vec<f64> = (0..rows)
        .map(|r| {
            let feeds: Vec<_> = (0..cols)
                .map(|c| panel.chain(r, c).pixel_feed(LINE_BRANCH, ov[r * cols + c]))
                .collect();
            panel.chain(r, 0).line_output(&feeds).map(|i| r_trans * i)
        })
        .collect::<Result<_>>()?;
    let v_row: Vec<f64> = (0..cols)
        .map(|c| {
            let feeds: Vec<_> = (0..rows)
                .map(|r| panel.chain(r, c).pixel_feed(ROW_BRANCH, ov[r * cols + c]))
                .collect();
            panel.chain(0, c).row_output(&feeds).map(|i| r_trans * i)
        })
        .collect::<Result<_>>()?;

    let comp = ComparatorSpec::new(v_ref);
    let line_out: Vec<f64> = v_line.iter().map(|&v| comparator_out(&comp, v)).collect();
    let row_out: Vec<f64> = v_row.iter().map(|&v| comparator_out(&comp, v)).collect();
    let mut lit = Vec::with_capacity(rows * cols);
    for lo in &line_out {
        for ro in &row_out {
            lit.push(comp.is_high(*lo) && comp.is_high(*ro));
        }
    }
    Ok(LedMatrixState {
        rows,
        cols,
        lit,
        line_out,
        row_out,
        v_line,
        v_row,
    })
}

/// Line-output transient of one chain under a stimulus waveform.
pub fn pulsed_response(chain: &ReadoutChain, stim: &Stimulus, dt: f64, t_end: f64) -> Result<Trace> {
    stim.validate()?;
    simulate_transient(chain, |t| stim.value(t), dt, t_end)
}

/// Summed-node transient of several pixels illuminated by the same
/// waveform. Chains are independent; they couple only at the summing node.
pub fn multi_pixel_response(
    panel: &Panel,
    pixels: &[(usize, usize)],
    stim: &Stimulus,
    dt: f64,
    t_end: f64,
) -> Result<Trace> {
    if pixels.is_empty() {
        return Err(FpdError::domain("pixel set is empty"));
    }
    let mut sorted = pixels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != pixels.len() {
        return Err(FpdError::domain("pixel set contains duplicates"));
    }
    if let Some(&(r, c)) = pixels
        .iter()
        .find(|&&(r, c)| r >= panel.rows() || c >= panel.cols())
    {
        return Err(FpdError::domain(format!("pixel ({r},{c}) outside panel")));
    }
    stim.validate()?;

    let traces: Vec<Trace> = pixels
        .par_iter()
        .map(|&(r, c)| pulsed_response(panel.chain(r, c), stim, dt, t_end))
        .collect::<Result<_>>()?;
    let r_trans = panel.cfg.chain.r_trans;
    let samples = (0..traces[0].len())
        .map(|k| {
            let i_out = sum_at_node(traces.iter().map(|tr| tr.samples[k].i_out));
            TraceSample {
                t: traces[0].samples[k].t,
                i_out,
                v_out: r_trans * i_out,
            }
        })
        .collect();
    Ok(Trace { dt, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_panel, PanelConfig};

    #[test]
    fn pulse_train_shape() {
        let s = Stimulus::pulse_train(0.4, 1.0, 0.25, 0.1);
        assert_eq!(s.value(0.0), 0.1);
        assert_eq!(s.value(0.1), 0.5);
        assert_eq!(s.value(0.25), 0.5);
        assert_eq!(s.value(0.3), 0.1);
        assert_eq!(s.value(1.0), 0.1);
        assert_eq!(s.value(1.2), 0.5);
        let step = Stimulus::pulse_train(0.4, 1.0, 1.0, 0.0);
        assert_eq!(step.value(0.0), 0.0);
        for t in [1e-9, 0.5, 1.0, 2.0, 7.3] {
            assert_eq!(step.value(t), 0.4);
        }
        let never = Stimulus::pulse_train(0.4, 1.0, 0.0, 0.2);
        assert_eq!(never.value(0.5), 0.2);
    }

    #[test]
    fn grid_aligned_edges_classify_consistently() {
        let s = Stimulus::pulse_train(1.0, 7.3e-6, 0.5, 0.0);
        let dt = s.period / 400.0;
        for n in 1..50u32 {
            let k = 400 * n;
            assert_eq!(s.value(k as f64 * dt), 0.0, "period start {n}");
            assert_eq!(s.value((k + 1) as f64 * dt), 1.0);
            assert_eq!(s.value((k + 200) as f64 * dt), 1.0, "duty edge {n}");
            assert_eq!(s.value((k + 201) as f64 * dt), 0.0);
        }
    }

    #[test]
    fn stimulus_validation() {
        assert!(Stimulus::pulse_train(-0.1, 1.0, 0.5, 0.0).validate().is_err());
        assert!(Stimulus::pulse_train(0.1, 0.0, 0.5, 0.0).validate().is_err());
        assert!(Stimulus::pulse_train(0.1, 1.0, 1.5, 0.0).validate().is_err());
        assert!(Stimulus::constant(0.4).validate().is_ok());
    }

    #[test]
    fn dark_scene_lights_nothing() {
        let panel = build_panel(&PanelConfig::default()).unwrap();
        let led = led_test(&panel, &Scene::uniform(4, 4, 0.0).unwrap(), 0.01).unwrap();
        assert!(led.lit_set().is_empty());
        assert!(led.line_out.iter().chain(&led.row_out).all(|&v| v == 0.0));
    }

    #[test]
    fn ghost_intersections() {
        let panel = build_panel(&PanelConfig::default()).unwrap();
        let mut lux = vec![0.0; 16];
        lux[0] = 1.0;
        lux[15] = 1.0;
        let led = led_test(&panel, &Scene::new(4, 4, lux).unwrap(), 0.5).unwrap();
        assert_eq!(led.lit_set(), vec![(0, 0), (0, 3), (3, 0), (3, 3)]);
    }

    #[test]
    fn empty_pixel_set_is_rejected() {
        let panel = build_panel(&PanelConfig::default()).unwrap();
        let stim = Stimulus::pulse_train(BENCH_LED_LUX, 1e-6, 0.5, 0.1);
        assert!(multi_pixel_response(&panel, &[], &stim, 1e-8, 1e-7).is_err());
        assert!(multi_pixel_response(&panel, &[(0, 0), (0, 0)], &stim, 1e-8, 1e-7).is_err());
        assert!(multi_pixel_response(&panel, &[(4, 0)], &stim, 1e-8, 1e-7).is_err());
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let chain = ReadoutChain::default();
        let stim = Stimulus::pulse_train(0.0, 1e-6, 0.5, 0.3);
        let tr = pulsed_response(&chain, &stim, 1e-8, 4e-6).unwrap();
        let first = tr.samples[0].i_out;
        assert!(tr.currents().all(|i| (i - first).abs() <= 1e-12 * first));
    }
}
