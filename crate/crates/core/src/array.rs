//! Panel-level readout: progressive row scanning, binning by current
//! summation at a shared node, resolution reduction, and ADC quantization.

use rayon::prelude::*;

use crate::circuit::{solve_pixel_chain, sum_at_node, ReadoutChain};
use crate::device::{photocurrent, tft_pass, TftSwitch};
use crate::error::{FpdError, Result};
use crate::seed;
use crate::validation::Stimulus;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelConfig {
    pub rows: usize,
    pub cols: usize,
    /// Frame period, seconds. Each pixel integrates for the whole frame.
    pub frame_time: f64,
    /// Template chain; device `sigma_rel` controls per-pixel mismatch.
    pub chain: ReadoutChain,
    pub tft: TftSwitch,
    pub seed: u64,
    pub adc_bits: u32,
    pub v_full_scale: f64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            rows: 4,
            cols: 4,
            frame_time: 1e-3,
            chain: ReadoutChain::default(),
            tft: TftSwitch::default(),
            seed: 0,
            adc_bits: 12,
            v_full_scale: 5.0,
        }
    }
}

impl PanelConfig {
    /// Check every invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.rows < 1 {
            return Err(FpdError::config("rows", "must be >= 1"));
        }
        if self.cols < 1 {
            return Err(FpdError::config("cols", "must be >= 1"));
        }
        if !(self.frame_time > 0.0 && self.frame_time.is_finite()) {
            return Err(FpdError::config("frame_time", "must be > 0"));
        }
        if !(1..=24).contains(&self.adc_bits) {
            return Err(FpdError::config("adc_bits", "must be in [1, 24]"));
        }
        if !(self.v_full_scale > 0.0 && self.v_full_scale.is_finite()) {
            return Err(FpdError::config("v_full_scale", "must be > 0"));
        }
        if !(self.tft.r_on >= 0.0 && self.tft.r_on.is_finite()) {
            return Err(FpdError::config("r_on", "must be >= 0"));
        }
        if !(self.tft.i_leak >= 0.0 && self.tft.i_leak.is_finite()) {
            return Err(FpdError::config("i_leak", "must be >= 0"));
        }
        self.chain
            .validate()
            .map_err(|e| FpdError::config("chain", e.to_string()))
    }
}

/// Illuminance map in lux, row-major, with optional per-pixel waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rows: usize,
    pub cols: usize,
    pub lux: Vec<f64>,
    pub modulation: Option<Vec<Option<Stimulus>>>,
}

impl Scene {
    pub fn new(rows: usize, cols: usize, lux: Vec<f64>) -> Result<Self> {
        if lux.len() != rows * cols {
            return Err(FpdError::domain(format!(
                "scene has {} values, expected {rows}x{cols}",
                lux.len()
            )));
        }
        if let Some(bad) = lux.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(FpdError::domain(format!(
                "scene illuminance must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Scene {
            rows,
            cols,
            lux,
            modulation: None,
        })
    }

    pub fn uniform(rows: usize, cols: usize, lux: f64) -> Result<Self> {
        Scene::new(rows, cols, vec![lux; rows * cols])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.lux[r * self.cols + c]
    }

    /// Attach a waveform to pixel `(r, c)`; it replaces the static value in
    /// [`Scene::lux_at_time`].
    pub fn modulate(&mut self, r: usize, c: usize, stim: Stimulus) -> Result<()> {
        stim.validate()?;
        let n = self.rows * self.cols;
        let slot = self.modulation.get_or_insert_with(|| vec![None; n]);
        slot[r * self.cols + c] = Some(stim);
        Ok(())
    }

    pub fn lux_at_time(&self, r: usize, c: usize, t: f64) -> f64 {
        let idx = r * self.cols + c;
        match self.modulation.as_ref().and_then(|m| m[idx].as_ref()) {
            Some(stim) => stim.value(t),
            None => self.lux[idx],
        }
    }

    pub fn transpose(&self) -> Scene {
        let mut lux = Vec::with_capacity(self.lux.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                lux.push(self.get(r, c));
            }
        }
        Scene {
            rows: self.cols,
            cols: self.rows,
            lux,
            modulation: None,
        }
    }
}

/// A panel whose per-pixel chains carry their mismatch draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub cfg: PanelConfig,
    chains: Vec<ReadoutChain>,
}

impl Panel {
    pub fn rows(&self) -> usize {
        self.cfg.rows
    }

    pub fn cols(&self) -> usize {
        self.cfg.cols
    }

    pub fn chain(&self, r: usize, c: usize) -> &ReadoutChain {
        &self.chains[r * self.cfg.cols + c]
    }

    pub fn chains(&self) -> &[ReadoutChain] {
        &self.chains
    }

    fn check_scene(&self, scene: &Scene) -> Result<()> {
        if scene.rows != self.cfg.rows || scene.cols != self.cfg.cols {
            return Err(FpdError::domain(format!(
                "scene is {}x{} but panel is {}x{}",
                scene.rows, scene.cols, self.cfg.rows, self.cfg.cols
            )));
        }
        Ok(())
    }

    /// Photocurrent of every pixel, row-major.
    pub fn photocurrents(&self, scene: &Scene) -> Result<Vec<f64>> {
        self.check_scene(scene)?;
        scene
            .lux
            .iter()
            .zip(&self.chains)
            .map(|(&e, ch)| photocurrent(&ch.photodiode, e))
            .collect()
    }

    /// Line-branch DC output current of every pixel chain, row-major.
    pub fn pixel_currents(&self, scene: &Scene) -> Result<Vec<f64>> {
        let ip = self.photocurrents(scene)?;
        self.chains
            .par_iter()
            .zip(ip.par_iter())
            .map(|(ch, &i)| solve_pixel_chain(ch, i).map(|s| s.i_line))
            .collect()
    }

    fn quantize(&self, i: f64) -> u32 {
        adc_quantize(
            self.cfg.chain.r_trans * i,
            self.cfg.adc_bits,
            self.cfg.v_full_scale,
        )
    }
}

/// Instantiate every pixel chain with mismatch drawn from coordinate-derived
/// seeds (see [`crate::seed`]).
pub fn build_panel(cfg: &PanelConfig) -> Result<Panel> {
    cfg.validate()?;
    let mut chains = Vec::with_capacity(cfg.rows * cfg.cols);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            chains.push(cfg.chain.with_mismatch(
                seed::derive(cfg.seed, &[seed::PIXEL, r as u64, c as u64]),
                seed::derive(cfg.seed, &[seed::LINE, r as u64]),
                seed::derive(cfg.seed, &[seed::ROW, c as u64]),
            ));
        }
    }
    Ok(Panel {
        cfg: cfg.clone(),
        chains,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    Scan,
    Sum,
    Average,
}

impl ReadMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReadMode::Scan => "scan",
            ReadMode::Sum => "sum",
            ReadMode::Average => "avg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeta {
    pub frame_time: f64,
    pub adc_bits: u32,
    pub v_full_scale: f64,
    pub r_trans: f64,
    pub pattern: String,
    pub mode: ReadMode,
    pub seed: u64,
}

/// Digital output of one read, with the pre-quantization currents kept
/// alongside the codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// (rows, cols) of the output grid.
    pub shape: (usize, usize),
    pub codes: Vec<u32>,
    pub currents: Vec<f64>,
    /// Number of pixels contributing to each value.
    pub sizes: Vec<usize>,
    pub meta: FrameMeta,
}

impl Frame {
    pub fn code(&self, r: usize, c: usize) -> u32 {
        self.codes[r * self.shape.1 + c]
    }

    pub fn voltage(&self, idx: usize) -> f64 {
        self.meta.r_trans * self.currents[idx]
    }

    /// Charge integrated over one frame, `i * frame_time`.
    pub fn charge(&self, idx: usize) -> f64 {
        self.currents[idx] * self.meta.frame_time
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.meta.adc_bits) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanEvent {
    pub t_select: f64,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanLog {
    pub events: Vec<ScanEvent>,
}

impl ScanLog {
    pub fn rows(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.row).collect()
    }
}

/// Progressive scan, top row first.
///
/// Selecting a row closes its TFTs; every other pixel on the same data line
/// contributes only its off-state leakage. The value read is the chain's DC
/// output, since the current-mode pixel keeps integrating for the full frame.
pub fn scan_frame(panel: &Panel, scene: &Scene) -> Result<(Frame, ScanLog)> {
    let pix = panel.pixel_currents(scene)?;
    let (rows, cols) = (panel.rows(), panel.cols());
    let line_period = panel.cfg.frame_time / rows as f64;
    let on = panel.cfg.tft.with_gate(true);
    let off = panel.cfg.tft.with_gate(false);

    let mut log = ScanLog::default();
    let mut currents = vec![0.0; rows * cols];
    for r in 0..rows {
        log.events.push(ScanEvent {
            t_select: r as f64 * line_period,
            row: r,
        });
        for c in 0..cols {
            let selected = tft_pass(&on, pix[r * cols + c]);
            let leakage = (0..rows)
                .filter(|&k| k != r)
                .map(|k| tft_pass(&off, pix[k * cols + c]));
            currents[r * cols + c] = sum_at_node(std::iter::once(selected).chain(leakage));
        }
    }
    let codes = currents.iter().map(|&i| panel.quantize(i)).collect();
    let frame = Frame {
        shape: (rows, cols),
        codes,
        currents,
        sizes: vec![1; rows * cols],
        meta: frame_meta(panel, "scan", ReadMode::Scan),
    };
    Ok((frame, log))
}

fn frame_meta(panel: &Panel, pattern: &str, mode: ReadMode) -> FrameMeta {
    FrameMeta {
        frame_time: panel.cfg.frame_time,
        adc_bits: panel.cfg.adc_bits,
        v_full_scale: panel.cfg.v_full_scale,
        r_trans: panel.cfg.chain.r_trans,
        pattern: pattern.to_string(),
        mode,
        seed: panel.cfg.seed,
    }
}

/// Disjoint cover of the panel by summation groups.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPattern {
    pub id: String,
    pub groups: Vec<Vec<(usize, usize)>>,
    /// Output grid for block patterns; `None` lays groups out as one row.
    pub grid: Option<(usize, usize)>,
}

impl BinPattern {
    pub fn singletons(rows: usize, cols: usize) -> Self {
        let groups = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| vec![(r, c)]))
            .collect();
        BinPattern {
            id: "1x1".into(),
            groups,
            grid: Some((rows, cols)),
        }
    }

    /// Tiles of `br x bc` pixels, row-major; edge tiles are clipped when the
    /// panel size is not a multiple of the block size.
    pub fn blocks(rows: usize, cols: usize, br: usize, bc: usize) -> Result<Self> {
        if br == 0 || bc == 0 {
            return Err(FpdError::Pattern {
                msg: format!("block size {br}x{bc} must be positive"),
                coords: vec![],
            });
        }
        let (gr, gc) = (rows.div_ceil(br), cols.div_ceil(bc));
        let mut groups = Vec::with_capacity(gr * gc);
        for bi in 0..gr {
            for bj in 0..gc {
                let mut g = Vec::with_capacity(br * bc);
                for r in bi * br..((bi + 1) * br).min(rows) {
                    for c in bj * bc..((bj + 1) * bc).min(cols) {
                        g.push((r, c));
                    }
                }
                groups.push(g);
            }
        }
        Ok(BinPattern {
            id: format!("{br}x{bc}"),
            groups,
            grid: Some((gr, gc)),
        })
    }

    pub fn whole(rows: usize, cols: usize) -> Self {
        let mut p = BinPattern::blocks(rows, cols, rows.max(1), cols.max(1))
            .expect("non-zero block");
        p.id = "whole".into();
        p
    }

    pub fn custom(groups: Vec<Vec<(usize, usize)>>) -> Self {
        BinPattern {
            id: "custom".into(),
            groups,
            grid: None,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.unwrap_or((1, self.groups.len()))
    }

    /// Groups must be non-empty, in range, pairwise disjoint, and cover
    /// every pixel.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if let Some(k) = self.groups.iter().position(|g| g.is_empty()) {
            return Err(FpdError::Pattern {
                msg: format!("group {k} is empty"),
                coords: vec![],
            });
        }
        let out_of_range: Vec<_> = self
            .groups
            .iter()
            .flatten()
            .copied()
            .filter(|&(r, c)| r >= rows || c >= cols)
            .collect();
        if !out_of_range.is_empty() {
            return Err(FpdError::Pattern {
                msg: format!("coordinates outside the {rows}x{cols} panel"),
                coords: out_of_range,
            });
        }
        let mut seen = vec![0usize; rows * cols];
        for &(r, c) in self.groups.iter().flatten() {
            seen[r * cols + c] += 1;
        }
        let coords_where = |pred: &dyn Fn(usize) -> bool| -> Vec<(usize, usize)> {
            (0..rows * cols)
                .filter(|&i| pred(seen[i]))
                .map(|i| (i / cols, i % cols))
                .collect()
        };
        let overlap = coords_where(&|n| n > 1);
        if !overlap.is_empty() {
            return Err(FpdError::Pattern {
                msg: "groups overlap".into(),
                coords: overlap,
            });
        }
        let gaps = coords_where(&|n| n == 0);
        if !gaps.is_empty() {
            return Err(FpdError::Pattern {
                msg: "pixels not covered by any group".into(),
                coords: gaps,
            });
        }
        if let Some((gr, gc)) = self.grid {
            if gr * gc != self.groups.len() {
                return Err(FpdError::Pattern {
                    msg: format!("grid {gr}x{gc} does not match {} groups", self.groups.len()),
                    coords: vec![],
                });
            }
        }
        Ok(())
    }
}

fn group_read(panel: &Panel, scene: &Scene, pattern: &BinPattern, mode: ReadMode) -> Result<Frame> {
    pattern.validate(panel.rows(), panel.cols())?;
    let pix = panel.pixel_currents(scene)?;
    let on = panel.cfg.tft.with_gate(true);
    let cols = panel.cols();
    let mut currents = Vec::with_capacity(pattern.groups.len());
    let mut sizes = Vec::with_capacity(pattern.groups.len());
    for g in &pattern.groups {
        let sum = sum_at_node(g.iter().map(|&(r, c)| tft_pass(&on, pix[r * cols + c])));
        currents.push(match mode {
            ReadMode::Average => sum / g.len() as f64,
            _ => sum,
        });
        sizes.push(g.len());
    }
    let codes = currents.iter().map(|&i| panel.quantize(i)).collect();
    Ok(Frame {
        shape: pattern.shape(),
        codes,
        currents,
        sizes,
        meta: frame_meta(panel, &pattern.id, mode),
    })
}

/// One reading per group of the summed line currents of its members.
pub fn binned_read(panel: &Panel, scene: &Scene, pattern: &BinPattern) -> Result<Frame> {
    group_read(panel, scene, pattern, ReadMode::Sum)
}

/// Like [`binned_read`] but each group reports its mean pixel current.
pub fn resolution_reduce(panel: &Panel, scene: &Scene, pattern: &BinPattern) -> Result<Frame> {
    group_read(panel, scene, pattern, ReadMode::Average)
}

/// `clamp(floor(v / v_full * 2^bits), 0, 2^bits - 1)`.
pub fn adc_quantize(v: f64, bits: u32, v_full: f64) -> u32 {
    assert!((1..=31).contains(&bits), "adc bits out of range: {bits}");
    let top = (1u64 << bits) - 1;
    let x = (v / v_full * (1u64 << bits) as f64).floor();
    if x.is_nan() || x <= 0.0 {
        0
    } else if x >= top as f64 {
        top as u32
    } else {
        x as u32
    }
}
