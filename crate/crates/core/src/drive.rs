//! Damped monochromatic drive `f(t) = cos(w0 t) exp(-|t|/tau)` and the
//! Fourier transforms of its powers `f_k = (-f)^k`.
//!
//! Convention: `F(w) = \int f(t) e^{i w t} dt`, inverse carries `1/(2 pi)`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lorentz::{Lorentzian, PeakedSum, PeakedTerm};

/// Largest power of the drive (and so largest perturbative order) supported.
pub const ORDER_BOUND: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    omega0: f64,
    tau: f64,
}

impl DriveProfile {
    pub fn new(omega0: f64, tau: f64) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::validation("omega0", "must be positive and finite"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::validation("tau", "must be positive and finite"));
        }
        Ok(DriveProfile { omega0, tau })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.omega0 * t).cos() * (-t.abs() / self.tau).exp()
    }
}

/// `f_k(t) = sum_m c_m cos(m w0 t) exp(-k|t|/tau)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrigExpansion {
    pub k: usize,
    /// `(m, c_m)` with `m` descending.
    pub harmonics: Vec<(u32, Ratio<i64>)>,
}

impl TrigExpansion {
    pub fn l1_norm(&self) -> Ratio<i64> {
        self.harmonics.iter().map(|(_, c)| if *c < Ratio::from_integer(0) { -c } else { *c }).sum()
    }

    pub fn eval(&self, profile: &DriveProfile, t: f64) -> f64 {
        let envelope = (-(self.k as f64) * t.abs() / profile.tau).exp();
        self.harmonics
            .iter()
            .map(|&(m, c)| ratio_f64(c) * (m as f64 * profile.omega0 * t).cos())
            .sum::<f64>()
            * envelope
    }

    /// Harmonics split over signed frequencies: `f_k` carries
    /// `sum_s b_s e^{-i s w0 t}` with `s` in `{-k, -k+2, .., k}` ascending.
    pub fn signed(&self) -> Vec<(i32, f64)> {
        let mut out = Vec::with_capacity(self.k + 1);
        for &(m, c) in &self.harmonics {
            let c = ratio_f64(c);
            if m == 0 {
                out.push((0, c));
            } else {
                out.push((m as i32, 0.5 * c));
                out.push((-(m as i32), 0.5 * c));
            }
        }
        out.sort_by_key(|&(s, _)| s);
        out
    }
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn binomial(n: i64, r: i64) -> i64 {
    (0..r).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn expand_power(k: usize) -> Result<TrigExpansion> {
    if k == 0 || k > ORDER_BOUND {
        return Err(Error::validation("k", format!("must lie in 1..={ORDER_BOUND}, got {k}")));
    }
    let k_i = k as i64;
    let sign = if k % 2 == 0 { 1 } else { -1 };
    let scale = Ratio::new(sign, 1i64 << (k - 1));
    let mut harmonics = Vec::new();
    for j in 0..=k_i / 2 {
        let m = k_i - 2 * j;
        let mut c = scale * binomial(k_i, j);
        // the middle term of an even power is not doubled by folding
        if m == 0 {
            c /= 2;
        }
        harmonics.push((m as u32, c));
    }
    Ok(TrigExpansion { k, harmonics })
}

pub fn fourier_fk(profile: &DriveProfile, k: usize) -> Result<PeakedSum> {
    let expansion = expand_power(k)?;
    let width = k as f64 / profile.tau;
    let mut sum = PeakedSum::default();
    for (s, b) in expansion.signed() {
        let peak = Lorentzian::new(s as f64 * profile.omega0, width)?;
        sum.push(PeakedTerm::new((2.0 * std::f64::consts::PI * b).into(), peak)?);
    }
    Ok(sum)
}

/// Which drive powers take part in the recursion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveSeries {
    /// Every `F_k`, as produced by the boundary expansion.
    #[default]
    Full,
    /// Only `F_1`: a boundary whose perturbation is linear in the drive.
    FirstOnly,
    /// No drive at all.
    Null,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub profile: DriveProfile,
    pub series: DriveSeries,
}

impl Drive {
    pub fn new(profile: DriveProfile) -> Self {
        Drive { profile, series: DriveSeries::Full }
    }

    pub fn with_series(self, series: DriveSeries) -> Self {
        Drive { series, ..self }
    }

    /// Signed harmonics `(s, b_s)` of `F_k`, empty when the power is switched off.
    pub fn harmonics(&self, k: usize) -> Result<Vec<(i32, f64)>> {
        let active = match self.series {
            DriveSeries::Full => true,
            DriveSeries::FirstOnly => k == 1,
            DriveSeries::Null => false,
        };
        let expansion = expand_power(k)?;
        Ok(if active { expansion.signed() } else { Vec::new() })
    }
}
