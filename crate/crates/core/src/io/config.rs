//! Sectioned `key = value` configuration (TOML syntax).
//!
//! Every key is optional and falls back to its default; unknown sections or
//! keys are rejected. Command-line flags override file values.

use serde::{Deserialize, Serialize};

use crate::array::PanelConfig;
use crate::circuit::ReadoutChain;
use crate::device::{MosfetParams, PhotodiodeParams, Polarity, TftSwitch};
use crate::error::{FpdError, Result};
use crate::newton::NewtonOptions;

/// Everything a run needs: the panel plus bench settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub panel: PanelConfig,
    /// Comparator reference for the LED test, volts.
    pub v_ref: f64,
    /// Illuminance assigned to the maximum gray level of PGM scenes.
    pub lux_max: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            panel: PanelConfig::default(),
            v_ref: 0.1,
            lux_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PanelSection {
    rows: i64,
    cols: i64,
    frame_time: f64,
    adc_bits: i64,
    v_full_scale: f64,
    seed: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SupplySection {
    vdd: f64,
    v_sense: f64,
    r_trans: f64,
}

/// Missing keys fall back to the defaults of the section's polarity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DeviceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    vth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MirrorSection {
    pixel_ratio: f64,
    bus_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TftSection {
    r_on: f64,
    i_leak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchSection {
    v_ref: f64,
    lux_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolverSection {
    abs_tol: f64,
    rel_tol: f64,
    max_iter: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PhotodiodeSection {
    responsivity: f64,
    dark_current: f64,
    c_node: f64,
}

/// On-disk layout of [`SimConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigDocument {
    panel: PanelSection,
    supply: SupplySection,
    nmos: DeviceSection,
    pmos: DeviceSection,
    mirror: MirrorSection,
    photodiode: PhotodiodeSection,
    tft: TftSection,
    bench: BenchSection,
    solver: SolverSection,
}

impl From<&MosfetParams> for DeviceSection {
    fn from(m: &MosfetParams) -> Self {
        DeviceSection {
            vth: Some(m.vth),
            kp: Some(m.kp),
            lambda: Some(m.lambda),
            sigma_rel: Some(m.sigma_rel),
        }
    }
}

impl From<&SimConfig> for ConfigDocument {
    fn from(cfg: &SimConfig) -> Self {
        let p = &cfg.panel;
        let ch = &p.chain;
        ConfigDocument {
            panel: PanelSection {
                rows: p.rows as i64,
                cols: p.cols as i64,
                frame_time: p.frame_time,
                adc_bits: p.adc_bits as i64,
                v_full_scale: p.v_full_scale,
                seed: p.seed as i64,
            },
            supply: SupplySection {
                vdd: ch.vdd,
                v_sense: ch.v_sense,
                r_trans: ch.r_trans,
            },
            nmos: DeviceSection::from(&ch.line_mirror.reference),
            pmos: DeviceSection::from(&ch.pixel_mirror.reference),
            mirror: MirrorSection {
                pixel_ratio: ch.pixel_mirror.ratio,
                bus_ratio: ch.line_mirror.ratio,
            },
            photodiode: PhotodiodeSection {
                responsivity: ch.photodiode.responsivity,
                dark_current: ch.photodiode.dark_current,
                c_node: ch.photodiode.c_node,
            },
            tft: TftSection {
                r_on: p.tft.r_on,
                i_leak: p.tft.i_leak,
            },
            bench: BenchSection {
                v_ref: cfg.v_ref,
                lux_max: cfg.lux_max,
            },
            solver: SolverSection {
                abs_tol: ch.solver.abs_tol,
                rel_tol: ch.solver.rel_tol,
                max_iter: ch.solver.max_iter as i64,
            },
        }
    }
}

macro_rules! section_default {
    ($section:ty, $field:ident) => {
        impl Default for $section {
            fn default() -> Self {
                ConfigDocument::from(&SimConfig::default()).$field
            }
        }
    };
}

section_default!(PanelSection, panel);
section_default!(SupplySection, supply);
section_default!(MirrorSection, mirror);
section_default!(PhotodiodeSection, photodiode);
section_default!(TftSection, tft);
section_default!(BenchSection, bench);
section_default!(SolverSection, solver);

impl Default for ConfigDocument {
    fn default() -> Self {
        ConfigDocument::from(&SimConfig::default())
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(FpdError::config(key, format!("must be > 0, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(FpdError::config(key, format!("must be >= 0, got {v}")))
    }
}

fn count(key: &str, v: i64, lo: i64, hi: i64) -> Result<i64> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(FpdError::config(key, format!("must be in [{lo}, {hi}], got {v}")))
    }
}

fn device(section: &str, d: &DeviceSection, polarity: Polarity) -> Result<MosfetParams> {
    let def = match polarity {
        Polarity::Nmos => MosfetParams::nmos_default(),
        Polarity::Pmos => MosfetParams::pmos_default(),
    };
    Ok(MosfetParams {
        polarity,
        vth: positive(&format!("{section}.vth"), d.vth.unwrap_or(def.vth))?,
        kp: positive(&format!("{section}.kp"), d.kp.unwrap_or(def.kp))?,
        lambda: non_negative(&format!("{section}.lambda"), d.lambda.unwrap_or(def.lambda))?,
        sigma_rel: non_negative(
            &format!("{section}.sigma_rel"),
            d.sigma_rel.unwrap_or(def.sigma_rel),
        )?,
    })
}

impl ConfigDocument {
    fn into_config(self) -> Result<SimConfig> {
        let p = &self.panel;
        let rows = count("panel.rows", p.rows, 1, 1 << 20)? as usize;
        let cols = count("panel.cols", p.cols, 1, 1 << 20)? as usize;
        let frame_time = positive("panel.frame_time", p.frame_time)?;
        let adc_bits = count("panel.adc_bits", p.adc_bits, 1, 24)? as u32;
        let v_full_scale = positive("panel.v_full_scale", p.v_full_scale)?;
        let seed = count("panel.seed", p.seed, 0, i64::MAX)? as u64;

        let vdd = positive("supply.vdd", self.supply.vdd)?;
        let v_sense = positive("supply.v_sense", self.supply.v_sense)?;
        if v_sense > vdd {
            return Err(FpdError::config("supply.v_sense", "must not exceed supply.vdd"));
        }
        let r_trans = positive("supply.r_trans", self.supply.r_trans)?;

        let nmos = device("nmos", &self.nmos, Polarity::Nmos)?;
        let pmos = device("pmos", &self.pmos, Polarity::Pmos)?;
        let pixel_ratio = positive("mirror.pixel_ratio", self.mirror.pixel_ratio)?;
        let bus_ratio = positive("mirror.bus_ratio", self.mirror.bus_ratio)?;

        let photodiode = PhotodiodeParams {
            responsivity: positive("photodiode.responsivity", self.photodiode.responsivity)?,
            dark_current: non_negative("photodiode.dark_current", self.photodiode.dark_current)?,
            c_node: positive("photodiode.c_node", self.photodiode.c_node)?,
        };
        let tft = TftSwitch {
            r_on: non_negative("tft.r_on", self.tft.r_on)?,
            i_leak: non_negative("tft.i_leak", self.tft.i_leak)?,
            gate_on: false,
        };
        let solver = NewtonOptions {
            abs_tol: non_negative("solver.abs_tol", self.solver.abs_tol)?,
            rel_tol: non_negative("solver.rel_tol", self.solver.rel_tol)?,
            max_iter: count("solver.max_iter", self.solver.max_iter, 1, 100_000)? as usize,
        };
        if !self.bench.v_ref.is_finite() {
            return Err(FpdError::config("bench.v_ref", "must be finite"));
        }
        let lux_max = positive("bench.lux_max", self.bench.lux_max)?;

        let mut chain = ReadoutChain::from_devices(pmos, nmos, pixel_ratio, bus_ratio);
        chain.vdd = vdd;
        chain.v_sense = v_sense;
        chain.r_trans = r_trans;
        chain.photodiode = photodiode;
        chain.solver = solver;

        let panel = PanelConfig {
            rows,
            cols,
            frame_time,
            chain,
            tft,
            seed,
            adc_bits,
            v_full_scale,
        };
        panel.validate()?;
        Ok(SimConfig {
            panel,
            v_ref: self.bench.v_ref,
            lux_max,
        })
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Name of the `[section]` enclosing byte `offset`.
fn section_at(text: &str, offset: usize) -> Option<String> {
    text[..offset.min(text.len())]
        .lines()
        .rev()
        .filter_map(|l| l.trim().strip_prefix('[')?.strip_suffix(']').map(|n| n.trim().to_string()))
        .next()
}

/// Line on which `section.key` is assigned, if present.
fn line_of_key(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.')?;
    let mut current = "";
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
        } else if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

/// Parse a configuration document; the empty document yields all defaults.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let doc: ConfigDocument = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let msg = e.message().to_string();
        let key = msg
            .split_once("unknown field `")
            .and_then(|(_, rest)| rest.split_once('`'))
            .map(|(k, _)| match e.span().and_then(|s| section_at(text, s.start)) {
                Some(sec) => format!("{sec}.{k}"),
                None => k.to_string(),
            })
            .or_else(|| e.span().map(|s| key_at(text, s.start)))
            .unwrap_or_else(|| "<document>".into());
        FpdError::Config { line, key, msg }
    })?;
    doc.into_config().map_err(|e| match e {
        FpdError::Config { key, msg, .. } => FpdError::Config {
            line: line_of_key(text, &key),
            key,
            msg,
        },
        other => other,
    })
}

/// Best-effort key name for the `key = value` line containing `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let start = text[..offset.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or("");
    line.split_once('=')
        .map(|(k, _)| k.trim().to_string())
        .unwrap_or_else(|| line.trim().to_string())
}

/// Canonical text of a configuration; `parse_config(&print_config(c)) == c`.
pub fn print_config(cfg: &SimConfig) -> String {
    toml::to_string(&ConfigDocument::from(cfg)).expect("config document serializes")
}
