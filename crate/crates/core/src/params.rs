//! Physical and natural-unit parameters.
//!
//! All physics downstream of this module works in natural units with
//! `hbar = v = 1`: lengths are measured in the time light takes to cross them
//! in the waveguide, so the Robin length `gamma0` becomes a time and
//! `gamma0 * omega0` is dimensionless.
//!
//! Frequencies read from configuration files are ordinary frequencies in Hz
//! (`omega0_hz`); they are converted to angular frequency (rad/s) on load.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on `omega0 * tau` for monochromatic-limit operations.
pub const MONOCHROMATIC_THRESHOLD: f64 = 100.0;

/// Sign attached to the Robin length.
///
/// The circuit formula for the Robin parameter carries a minus sign while the
/// experimental value is usually quoted as a positive length. Every formula in
/// this crate consumes the magnitude; the sign is carried along for reporting
/// and is never applied implicitly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaSign {
    #[default]
    Positive,
    Negative,
}

impl GammaSign {
    pub fn factor(self) -> f64 {
        match self {
            GammaSign::Positive => 1.0,
            GammaSign::Negative => -1.0,
        }
    }
}

/// Parameters in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Robin length magnitude in meters.
    pub gamma0_len: f64,
    /// Drive angular frequency in rad/s.
    pub omega0: f64,
    /// Dimensionless drive amplitude, `0 < epsilon < 1`.
    pub epsilon: f64,
    /// Envelope decay time in seconds.
    pub tau: f64,
    /// Phase velocity in the waveguide, m/s.
    pub v: f64,
    /// Perturbative truncation order.
    pub order: usize,
    #[serde(default)]
    pub gamma0_sign: GammaSign,
}

impl PhysicalParams {
    /// Parameters of the flux-pumped SQUID experiment.
    ///
    /// The envelope time is not part of the published parameter set; 1 us
    /// puts `omega0 * tau` far into the monochromatic regime, where
    /// spectral densities divided by `tau` no longer depend on it.
    pub fn squid() -> Self {
        PhysicalParams {
            gamma0_len: 0.44e-3,
            omega0: 2.0 * PI * 10.30e9,
            epsilon: 0.25,
            tau: 1.0e-6,
            v: 1.2e8,
            order: 1,
            gamma0_sign: GammaSign::Positive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("gamma0_len", self.gamma0_len)?;
        positive("omega0", self.omega0)?;
        positive("tau", self.tau)?;
        positive("v", self.v)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::validation(
                "epsilon",
                format!("must lie in (0, 1), got {}", self.epsilon),
            ));
        }
        if self.order < 1 {
            return Err(Error::validation("order", "must be at least 1"));
        }
        Ok(())
    }

    pub fn omega0_hz(&self) -> f64 {
        self.omega0 / (2.0 * PI)
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be finite and positive, got {value}"),
        ))
    }
}

/// Parameters in natural units (`hbar = v = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    gamma0: f64,
    omega0: f64,
    epsilon: f64,
    tau: f64,
    order: usize,
    gamma0_omega0: f64,
    gamma0_sign: GammaSign,
}

impl NaturalParams {
    pub fn new(gamma0: f64, omega0: f64, epsilon: f64, tau: f64, order: usize) -> Result<Self> {
        positive("gamma0", gamma0)?;
        positive("omega0", omega0)?;
        positive("tau", tau)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::validation(
                "epsilon",
                format!("must lie in (0, 1), got {epsilon}"),
            ));
        }
        if order < 1 {
            return Err(Error::validation("order", "must be at least 1"));
        }
        let gamma0_omega0 = gamma0 * omega0;
        if !gamma0_omega0.is_finite() {
            return Err(Error::validation("gamma0", "gamma0 * omega0 is not finite"));
        }
        Ok(NaturalParams {
            gamma0,
            omega0,
            epsilon,
            tau,
            order,
            gamma0_omega0,
            gamma0_sign: GammaSign::Positive,
        })
    }

    pub fn with_sign(mut self, sign: GammaSign) -> Self {
        self.gamma0_sign = sign;
        self
    }

    pub fn with_order(&self, order: usize) -> Result<Self> {
        NaturalParams::new(self.gamma0, self.omega0, self.epsilon, self.tau, order)
            .map(|p| p.with_sign(self.gamma0_sign))
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        NaturalParams::new(self.gamma0, self.omega0, self.epsilon, tau, self.order)
            .map(|p| p.with_sign(self.gamma0_sign))
    }

    /// Robin length magnitude (a time in natural units).
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Robin length with its recorded sign.
    pub fn signed_gamma0(&self) -> f64 {
        self.gamma0_sign.factor() * self.gamma0
    }

    pub fn gamma0_sign(&self) -> GammaSign {
        self.gamma0_sign
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn gamma0_omega0(&self) -> f64 {
        self.gamma0_omega0
    }

    pub fn omega0_tau(&self) -> f64 {
        self.omega0 * self.tau
    }

    pub fn check_monochromatic(&self, threshold: f64) -> Result<()> {
        let value = self.omega0_tau();
        if value >= threshold {
            Ok(())
        } else {
            Err(Error::BelowMonochromaticThreshold { value, threshold })
        }
    }
}

/// Convert SI parameters to natural units.
pub fn to_natural(p: &PhysicalParams) -> Result<NaturalParams> {
    p.validate()?;
    let gamma0 = p.gamma0_len / p.v;
    NaturalParams::new(gamma0, p.omega0, p.epsilon, p.tau, p.order)
        .map(|n| n.with_sign(p.gamma0_sign))
}

/// Lumped-element description of the SQUID termination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquidCircuit {
    /// Reduced magnetic flux quantum.
    pub phi_bar0: f64,
    /// Josephson energy scale `E_J^0`.
    pub ej0: f64,
    /// Waveguide inductance per unit length.
    pub l0: f64,
}

/// Magnitude of the Robin length `phi_bar0^2 / ((2 pi)^2 E_J^0 L_0)`.
///
/// The circuit derivation attaches a minus sign to this quantity; see
/// [`GammaSign`].
pub fn squid_gamma0(c: &SquidCircuit) -> Result<f64> {
    if c.ej0 == 0.0 {
        return Err(Error::DivisionDomain { field: "ej0".into() });
    }
    if c.l0 == 0.0 {
        return Err(Error::DivisionDomain { field: "l0".into() });
    }
    positive("phi_bar0", c.phi_bar0)?;
    positive("ej0", c.ej0)?;
    positive("l0", c.l0)?;
    Ok(c.phi_bar0 * c.phi_bar0 / ((2.0 * PI).powi(2) * c.ej0 * c.l0))
}

/// Parameter fields that a configuration source may set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub gamma0_len: Option<f64>,
    pub omega0_hz: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau: Option<f64>,
    pub v: Option<f64>,
    pub order: Option<usize>,
    pub gamma0_sign: Option<GammaSign>,
}

impl ParamOverrides {
    pub const KEYS: [&'static str; 7] = [
        "gamma0_len",
        "omega0_hz",
        "epsilon",
        "tau",
        "v",
        "order",
        "gamma0_sign",
    ];

    /// Pick the parameter keys out of a flat key-value map.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let num = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::validation(key, format!("not a number: `{s}`")))
                })
                .transpose()
        };
        let order = map
            .get("order")
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::validation("order", format!("not a nonnegative integer: `{s}`")))
            })
            .transpose()?;
        let gamma0_sign = map
            .get("gamma0_sign")
            .map(|s| match s.as_str() {
                "+" | "positive" => Ok(GammaSign::Positive),
                "-" | "negative" => Ok(GammaSign::Negative),
                other => Err(Error::validation(
                    "gamma0_sign",
                    format!("expected `positive` or `negative`, got `{other}`"),
                )),
            })
            .transpose()?;
        Ok(ParamOverrides {
            gamma0_len: num("gamma0_len")?,
            omega0_hz: num("omega0_hz")?,
            epsilon: num("epsilon")?,
            tau: num("tau")?,
            v: num("v")?,
            order,
            gamma0_sign,
        })
    }

    /// Later sources win: fields set in `other` replace those in `self`.
    pub fn merge(&self, other: &ParamOverrides) -> ParamOverrides {
        ParamOverrides {
            gamma0_len: other.gamma0_len.or(self.gamma0_len),
            omega0_hz: other.omega0_hz.or(self.omega0_hz),
            epsilon: other.epsilon.or(self.epsilon),
            tau: other.tau.or(self.tau),
            v: other.v.or(self.v),
            order: other.order.or(self.order),
            gamma0_sign: other.gamma0_sign.or(self.gamma0_sign),
        }
    }

    /// Fill every field, failing on the first one that is missing.
    pub fn resolve(&self) -> Result<PhysicalParams> {
        let need = |field: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::validation(field, "missing"))
        };
        let p = PhysicalParams {
            gamma0_len: need("gamma0_len", self.gamma0_len)?,
            omega0: 2.0 * PI * need("omega0_hz", self.omega0_hz)?,
            epsilon: need("epsilon", self.epsilon)?,
            tau: need("tau", self.tau)?,
            v: need("v", self.v)?,
            order: self
                .order
                .ok_or_else(|| Error::validation("order", "missing"))?,
            gamma0_sign: self.gamma0_sign.unwrap_or_default(),
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<&PhysicalParams> for ParamOverrides {
    fn from(p: &PhysicalParams) -> Self {
        ParamOverrides {
            gamma0_len: Some(p.gamma0_len),
            omega0_hz: Some(p.omega0_hz()),
            epsilon: Some(p.epsilon),
            tau: Some(p.tau),
            v: Some(p.v),
            order: Some(p.order),
            gamma0_sign: Some(p.gamma0_sign),
        }
    }
}

/// Parse flat `key = value` text. `#` starts a comment; blank lines are
/// ignored; a repeated key is an error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: idx + 1,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config {
                line: idx + 1,
                reason: "empty key or value".into(),
            });
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config {
                line: idx + 1,
                reason: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}
