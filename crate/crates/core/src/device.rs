//! First-order device models: square-law MOSFET, linear photodiode, TFT
//! switch, threshold comparator, and multiplicative mismatch sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FpdError, Result};
use crate::newton::{self, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Nmos,
    Pmos,
}

impl Polarity {
    /// +1 for NMOS, -1 for PMOS: maps terminal voltages into the NMOS frame.
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Nmos => 1.0,
            Polarity::Pmos => -1.0,
        }
    }
}

/// Level-1 MOSFET parameters.
///
/// `vth` is a positive magnitude for both polarities; `kp` already includes
/// the W/L ratio, so the saturation current is `kp * (vgs - vth)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosfetParams {
    pub polarity: Polarity,
    pub vth: f64,
    pub kp: f64,
    pub lambda: f64,
    pub sigma_rel: f64,
}

impl MosfetParams {
    pub fn nmos_default() -> Self {
        MosfetParams {
            polarity: Polarity::Nmos,
            vth: 0.8,
            kp: 5e-5,
            lambda: 0.02,
            sigma_rel: 0.0,
        }
    }

    pub fn pmos_default() -> Self {
        MosfetParams {
            polarity: Polarity::Pmos,
            vth: 0.9,
            kp: 1.7e-5,
            lambda: 0.02,
            sigma_rel: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.vth, self.kp, self.lambda, self.sigma_rel]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FpdError::domain("MOSFET parameters must be finite"));
        }
        if self.kp <= 0.0 {
            return Err(FpdError::domain(format!("kp must be > 0, got {}", self.kp)));
        }
        if self.vth <= 0.0 {
            return Err(FpdError::domain(format!("vth must be > 0, got {}", self.vth)));
        }
        if self.lambda < 0.0 {
            return Err(FpdError::domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.sigma_rel < 0.0 {
            return Err(FpdError::domain(format!(
                "sigma_rel must be >= 0, got {}",
                self.sigma_rel
            )));
        }
        Ok(())
    }

    /// Drain current in the NMOS frame as a function of overdrive
    /// `vov = vgs - vth` and `vds >= 0`.
    ///
    /// Working in overdrive keeps full relative precision at sub-nanoampere
    /// currents, where `vgs` and `vth` agree to many digits.
    pub fn current_at_overdrive(&self, vov: f64, vds: f64) -> f64 {
        self.eval(vov, vds).0
    }

    /// Current and its partial derivatives with respect to overdrive and vds.
    pub(crate) fn eval(&self, vov: f64, vds: f64) -> (f64, f64, f64) {
        if vov <= 0.0 || vds <= 0.0 {
            // cutoff; the vds = 0 edge of triode carries no current either
            let di_dvds = if vov > 0.0 { 2.0 * self.kp * vov } else { 0.0 };
            return (0.0, 0.0, di_dvds);
        }
        let clm = 1.0 + self.lambda * vds;
        if vds < vov {
            let core = 2.0 * vov * vds - vds * vds;
            let i = self.kp * core * clm;
            let di_dvov = 2.0 * self.kp * vds * clm;
            let di_dvds = self.kp * ((2.0 * vov - 2.0 * vds) * clm + core * self.lambda);
            (i, di_dvov, di_dvds)
        } else {
            let i = self.kp * vov * vov * clm;
            (i, 2.0 * self.kp * vov * clm, self.kp * vov * vov * self.lambda)
        }
    }

    /// Overdrive at which the diode-connected device (gate tied to drain)
    /// carries `i` amperes. `vds = vth + vov` in the NMOS frame.
    pub(crate) fn diode_overdrive(&self, i: f64, opts: &NewtonOptions) -> Result<f64> {
        if i == 0.0 {
            return Ok(0.0);
        }
        // (1 + lambda*vds) >= 1, so the lambda-free inverse brackets the root from above
        let hi = (i / self.kp).sqrt();
        let residual = |vov: f64| {
            let (id, d_ov, d_ds) = self.eval(vov, self.vth + vov);
            (id - i, d_ov + d_ds)
        };
        newton::solve(residual, hi, 0.0, hi, i, opts).map_err(|e| match e {
            newton::NewtonFailure::NoBracket { f_lo, .. } => FpdError::Solver {
                what: "diode-connected operating point".into(),
                iterations: 0,
                residual: f_lo,
                time: None,
            },
            newton::NewtonFailure::MaxIterations { residual, .. } => FpdError::Solver {
                what: "diode-connected operating point".into(),
                iterations: opts.max_iter,
                residual,
                time: None,
            },
        })
    }
}

fn check_finite(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(FpdError::domain(format!("{name} must be finite, got {v}")));
        }
    }
    Ok(())
}

/// Square-law drain current with channel-length modulation.
///
/// PMOS terminal voltages are negated into the NMOS frame, so for a PMOS
/// device pass `vgs`, `vds` as ordinary (negative) gate-source and
/// drain-source voltages. The returned current is a magnitude.
pub fn drain_current(m: &MosfetParams, vgs: f64, vds: f64) -> Result<f64> {
    check_finite(&[("vgs", vgs), ("vds", vds)])?;
    let s = m.polarity.sign();
    let (vgs, vds) = (s * vgs, s * vds);
    if vds < 0.0 {
        return Err(FpdError::domain(format!(
            "vds must be >= 0 in the device frame, got {vds}"
        )));
    }
    Ok(m.current_at_overdrive(vgs - m.vth, vds))
}

/// Gate-source voltage at which the diode-connected device carries
/// `i_target`. Signed like the device's terminal voltages.
pub fn diode_connected_vgs(m: &MosfetParams, i_target: f64) -> Result<f64> {
    check_finite(&[("i_target", i_target)])?;
    if i_target < 0.0 {
        return Err(FpdError::domain(format!(
            "diode current must be >= 0, got {i_target}"
        )));
    }
    let vov = m.diode_overdrive(i_target, &NewtonOptions::default())?;
    Ok(m.polarity.sign() * (m.vth + vov))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotodiodeParams {
    /// Amperes per lux.
    pub responsivity: f64,
    pub dark_current: f64,
    /// Capacitance of the pixel sense node, farads.
    pub c_node: f64,
}

impl Default for PhotodiodeParams {
    fn default() -> Self {
        PhotodiodeParams {
            responsivity: 1e-6,
            dark_current: 1e-12,
            c_node: 1e-12,
        }
    }
}

impl PhotodiodeParams {
    pub fn validate(&self) -> Result<()> {
        check_finite(&[
            ("responsivity", self.responsivity),
            ("dark_current", self.dark_current),
            ("c_node", self.c_node),
        ])?;
        if self.responsivity <= 0.0 {
            return Err(FpdError::domain("responsivity must be > 0"));
        }
        if self.dark_current < 0.0 {
            return Err(FpdError::domain("dark_current must be >= 0"));
        }
        if self.c_node <= 0.0 {
            return Err(FpdError::domain("c_node must be > 0"));
        }
        Ok(())
    }
}

/// Linear photoresponse plus dark current.
pub fn photocurrent(pd: &PhotodiodeParams, lux: f64) -> Result<f64> {
    check_finite(&[("illuminance", lux)])?;
    if lux < 0.0 {
        return Err(FpdError::domain(format!("illuminance must be >= 0, got {lux}")));
    }
    Ok(pd.responsivity * lux + pd.dark_current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TftSwitch {
    pub r_on: f64,
    pub i_leak: f64,
    pub gate_on: bool,
}

impl Default for TftSwitch {
    fn default() -> Self {
        TftSwitch {
            r_on: 0.0,
            i_leak: 0.0,
            gate_on: false,
        }
    }
}

impl TftSwitch {
    pub fn with_gate(self, gate_on: bool) -> Self {
        TftSwitch { gate_on, ..self }
    }

    /// Series drop across the closed switch. Bookkeeping only.
    pub fn voltage_drop(&self, i: f64) -> f64 {
        if self.gate_on {
            self.r_on * i
        } else {
            0.0
        }
    }
}

pub fn tft_pass(sw: &TftSwitch, i_in: f64) -> f64 {
    if sw.gate_on {
        i_in
    } else {
        sw.i_leak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSpec {
    pub v_ref: f64,
    pub v_high: f64,
    pub v_low: f64,
}

impl ComparatorSpec {
    pub const V_HIGH: f64 = 5.0;
    pub const V_LOW: f64 = 0.0;

    pub fn new(v_ref: f64) -> Self {
        ComparatorSpec {
            v_ref,
            v_high: Self::V_HIGH,
            v_low: Self::V_LOW,
        }
    }

    pub fn is_high(&self, v_out: f64) -> bool {
        v_out == self.v_high
    }
}

/// Strictly greater than `v_ref` drives high; ties resolve low.
pub fn comparator_out(c: &ComparatorSpec, v_in: f64) -> f64 {
    if v_in > c.v_ref {
        c.v_high
    } else {
        c.v_low
    }
}

const MISMATCH_TRUNCATION: f64 = 4.0;

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= MISMATCH_TRUNCATION {
            return z;
        }
    }
}

/// Scale `kp` and `vth` by independent factors drawn from N(1, sigma_rel)
/// truncated to ±4σ. Deterministic in `(m, seed)`.
pub fn apply_mismatch(m: &MosfetParams, seed: u64) -> MosfetParams {
    if m.sigma_rel == 0.0 {
        return *m;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kp_factor = 1.0 + m.sigma_rel * truncated_normal(&mut rng);
    let vth_factor = 1.0 + m.sigma_rel * truncated_normal(&mut rng);
    MosfetParams {
        kp: m.kp * kp_factor,
        vth: m.vth * vth_factor,
        ..*m
    }
}
