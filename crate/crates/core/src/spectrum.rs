//! Spectral density of created particles, its split by perturbative order,
//! rates and the moving-mirror-like toy model.
//!
//! With `h^(j)(w, xi) = xi sum_M A_{j,M}(w) L(w - xi; M w0, j/tau)` the order
//! `p = j + k` contribution is
//!
//! ```text
//! N_p(w) = 4w/(1 + w^2 g^2) int_{-inf}^0 dxi |xi|/(1 + xi^2 g^2) sum conj(h_j/xi) (h_k/xi)
//! ```
//!
//! and every `xi` integral is a product of two Lorentzians integrated exactly
//! with the smooth factor sampled at the peak centers `xi = w - M w0`.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::{Drive, DriveProfile, DriveSeries, ORDER_BOUND};
use crate::error::{Error, Result};
use crate::lorentz::{drop_below, Lorentzian, PeakedProduct, PeakedSum, PeakedTerm};
use crate::params::{NaturalParams, MONOCHROMATIC_THRESHOLD};
use crate::recurrence::{build_all, GOrder};

/// Identifier of the overall normalization: one Robin length per recursion
/// level and unit global constant, which reproduces the known first-order
/// moving-boundary spectrum.
pub const NORMALIZATION_TAG: &str = "gamma0-per-level/unit";

/// Separated-center pairs below this fraction of the leading coincident
/// pair are dropped; they are suppressed by `(omega0 tau)^-2`.
pub const DEFAULT_REL_CUT: f64 = 0.01;

/// Tolerated imaginary residue of a per-order spectrum, relative to the
/// largest value of any order.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Grid points per `omega0` in the default grid.
pub const DEFAULT_STEPS_PER_OMEGA0: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("grid", "no points"));
        }
        if !points.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::validation("grid", "points must be finite and positive"));
        }
        if !points.windows(2).all(|p| p[1] > p[0]) {
            return Err(Error::validation("grid", "points must be strictly increasing"));
        }
        Ok(FrequencyGrid { points })
    }

    /// `count` evenly spaced points from `min` to `max` inclusive.
    pub fn uniform(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::validation("grid count", "need at least two points"));
        }
        let last = (count - 1) as f64;
        FrequencyGrid::new((0..count).map(|i| (min * (last - i as f64) + max * i as f64) / last).collect())
    }

    /// `w0/400, 2 w0/400, .., 2.05 w0`: every multiple of `w0/2` is a grid point.
    pub fn default_for(omega0: f64) -> Self {
        let n = 41 * DEFAULT_STEPS_PER_OMEGA0 / 20;
        let points = (1..=n).map(|i| i as f64 * omega0 / DEFAULT_STEPS_PER_OMEGA0 as f64).collect();
        FrequencyGrid { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_range(&self, omega0: f64, n: usize) -> Result<()> {
        let limit = (n + 1) as f64 * omega0 * 1.2;
        let top = *self.points.last().expect("nonempty");
        if top > limit {
            return Err(Error::validation(
                "grid",
                format!("maximum {top} exceeds {limit} = 1.2 (N + 1) omega0"),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumModel {
    #[default]
    Full,
    MirrorToy,
}

/// Restricts the boundary modulation to exactly `gamma0 (1 + eps f_1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorToyConfig {
    pub active: bool,
}

impl MirrorToyConfig {
    pub fn series(&self) -> DriveSeries {
        if self.active {
            DriveSeries::FirstOnly
        } else {
            DriveSeries::Full
        }
    }
}

/// Spectrum contributions at one frequency, before discarding imaginary parts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSpectrum {
    pub per_order: BTreeMap<usize, Complex64>,
    pub per_pair: BTreeMap<(usize, usize), Complex64>,
}

/// Evaluates the localized spectrum at arbitrary frequencies.
#[derive(Clone, Debug)]
pub struct SpectrumEngine {
    params: NaturalParams,
    orders: Vec<GOrder>,
    n: usize,
    rel_cut: f64,
}

impl SpectrumEngine {
    pub fn new(params: &NaturalParams, drive: &Drive, n: usize) -> Result<Self> {
        params.check_monochromatic(MONOCHROMATIC_THRESHOLD)?;
        if n == 0 {
            return Err(Error::validation("order", "must be at least 1"));
        }
        if n > ORDER_BOUND {
            return Err(Error::OrderOverflow { order: n, bound: ORDER_BOUND });
        }
        Ok(SpectrumEngine {
            params: params.clone(),
            orders: build_all(params, drive, n)?,
            n,
            rel_cut: DEFAULT_REL_CUT,
        })
    }

    pub fn with_rel_cut(mut self, rel_cut: f64) -> Self {
        self.rel_cut = rel_cut;
        self
    }

    pub fn orders(&self) -> &[GOrder] {
        &self.orders
    }

    /// Pairs `(j, k)` with `j, k <= N` and `j + k <= N + 1`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (1..=n)
            .flat_map(|j| (1..=n).map(move |k| (j, k)))
            .filter(|&(j, k)| j + k <= n + 1)
            .collect()
    }

    /// Total orders `p` produced.
    pub fn total_orders(&self) -> Vec<usize> {
        (2..=self.n + 1).collect()
    }

    fn peaked(&self, omega: f64, amplitudes: &BTreeMap<i32, Complex64>, j: usize, conjugate: bool) -> Result<PeakedSum> {
        let width = j as f64 / self.params.tau();
        let mut sum = PeakedSum::default();
        for (&m, &a) in amplitudes {
            let coeff = if conjugate { a.conj() } else { a };
            let center = omega - m as f64 * self.params.omega0();
            let term = PeakedTerm::new(coeff, Lorentzian::new(center, width)?).map_err(|_| Error::SingularEvaluation {
                omega,
                detail: format!("amplitude of order {j}, harmonic {m} is not finite"),
            })?;
            sum.push(term);
        }
        Ok(sum)
    }

    pub fn point(&self, omega: f64) -> Result<PointSpectrum> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::validation("omega", format!("must be positive, got {omega}")));
        }
        let g = self.params.gamma0();
        let amplitudes: Vec<BTreeMap<i32, Complex64>> = self.orders.iter().map(|o| o.amplitudes(omega)).collect();
        let products: Vec<((usize, usize), PeakedProduct)> = self
            .pairs()
            .into_iter()
            .map(|(j, k)| {
                let a = self.peaked(omega, &amplitudes[j - 1], j, true)?;
                let b = self.peaked(omega, &amplitudes[k - 1], k, false)?;
                Ok(((j, k), PeakedProduct::of(&a, &b)))
            })
            .collect::<Result<_>>()?;
        let reference = products
            .iter()
            .map(|(_, p)| p.max_coincident_integral())
            .fold(0.0, f64::max);

        // only incoming modes with xi < 0 contribute
        let smooth = |xi: f64| {
            if xi < 0.0 {
                Complex64::new(-xi / (1.0 + xi * xi * g * g), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        };
        let outer = 4.0 * omega / (1.0 + omega * omega * g * g) / self.params.tau();
        let mut out = PointSpectrum::default();
        for ((j, k), product) in products {
            let kept = drop_below(&product, self.rel_cut, reference);
            let value = kept.localize(&smooth, kept.default_coincidence_tol())? * outer;
            if !(value.re.is_finite() && value.im.is_finite()) {
                return Err(Error::SingularEvaluation {
                    omega,
                    detail: format!("pair ({j}, {k}) is not finite"),
                });
            }
            *out.per_order.entry(j + k).or_default() += value;
            out.per_pair.insert((j, k), value);
        }
        Ok(out)
    }

    /// `sum_p eps^p N_p(w) / tau`.
    pub fn total_at(&self, omega: f64) -> Result<f64> {
        let eps = self.params.epsilon();
        Ok(self.point(omega)?.per_order.iter().map(|(&p, v)| eps.powi(p as i32) * v.re).sum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSeries {
    pub j: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub grid: Vec<f64>,
    /// `N_p(w) / tau` keyed by total order `p`, without the `eps^p` weight.
    pub per_order: BTreeMap<usize, Vec<f64>>,
    /// Real parts of individual `(j, k)` pairings, for diagnostics.
    pub per_pair: Vec<PairSeries>,
    pub params: NaturalParams,
    pub normalization_tag: String,
    pub model: SpectrumModel,
}

impl SpectralResult {
    /// `sum_p eps^p N_p / tau` on the grid.
    pub fn total(&self) -> Vec<f64> {
        let eps = self.params.epsilon();
        let mut total = vec![0.0; self.grid.len()];
        for (&p, values) in &self.per_order {
            let w = eps.powi(p as i32);
            for (t, v) in total.iter_mut().zip(values) {
                *t += w * v;
            }
        }
        total
    }

    pub fn order(&self, p: usize) -> Option<&[f64]> {
        self.per_order.get(&p).map(Vec::as_slice)
    }

    /// Columns `omega, omega_over_omega0, N2_over_tau .. , total_over_tau`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let top = self.per_order.keys().copied().max().unwrap_or(2).max(4);
        let orders: Vec<usize> = (2..=top).collect();
        let mut header = vec!["omega".to_string(), "omega_over_omega0".to_string()];
        header.extend(orders.iter().map(|p| format!("N{p}_over_tau")));
        header.push("total_over_tau".into());
        writeln!(out, "{}", header.join(","))?;
        let total = self.total();
        let omega0 = self.params.omega0();
        for (i, &w) in self.grid.iter().enumerate() {
            let mut row = vec![format_sig12(w), format_sig12(w / omega0)];
            for p in &orders {
                row.push(format_sig12(self.per_order.get(p).map_or(0.0, |v| v[i])));
            }
            row.push(format_sig12(total[i]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Rounds to 12 significant digits and prints the shortest string that
/// reads back as the rounded value.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded:e}")
}

fn evaluate(params: &NaturalParams, drive: &Drive, grid: &FrequencyGrid, n: usize, model: SpectrumModel) -> Result<SpectralResult> {
    let engine = SpectrumEngine::new(params, drive, n)?;
    grid.check_range(params.omega0(), n)?;
    let points: Vec<PointSpectrum> = grid.points().par_iter().map(|&w| engine.point(w)).collect::<Result<_>>()?;

    let mut scale: f64 = 0.0;
    for pt in &points {
        for v in pt.per_order.values() {
            scale = scale.max(v.re.abs());
        }
    }
    for (pt, &w) in points.iter().zip(grid.points()) {
        for (&p, v) in &pt.per_order {
            if v.im.abs() > HERMITICITY_TOL * scale {
                return Err(Error::SingularEvaluation {
                    omega: w,
                    detail: format!("order {p} has imaginary residue {:e} against scale {scale:e}", v.im),
                });
            }
        }
    }

    let per_order = engine
        .total_orders()
        .into_iter()
        .map(|p| (p, points.iter().map(|pt| pt.per_order.get(&p).map_or(0.0, |v| v.re)).collect()))
        .collect();
    let per_pair = engine
        .pairs()
        .into_iter()
        .map(|(j, k)| PairSeries {
            j,
            k,
            values: points.iter().map(|pt| pt.per_pair[&(j, k)].re).collect(),
        })
        .collect();
    Ok(SpectralResult {
        grid: grid.points().to_vec(),
        per_order,
        per_pair,
        params: params.clone(),
        normalization_tag: NORMALIZATION_TAG.into(),
        model,
    })
}

pub fn default_drive(params: &NaturalParams) -> Result<Drive> {
    Ok(Drive::new(DriveProfile::new(params.omega0(), params.tau())?))
}

/// Spectrum up to order `n` in the monochromatic limit.
pub fn spectral_density(params: &NaturalParams, grid: &FrequencyGrid, n: usize) -> Result<SpectralResult> {
    evaluate(params, &default_drive(params)?, grid, n, SpectrumModel::Full)
}

/// Spectrum of the boundary modulated exactly as `gamma0 (1 + eps f_1)`,
/// to the order stored in `params`.
pub fn dirichlet_toy(params: &NaturalParams, grid: &FrequencyGrid) -> Result<SpectralResult> {
    let toy = MirrorToyConfig { active: true };
    let drive = default_drive(params)?.with_series(toy.series());
    evaluate(params, &drive, grid, params.order(), SpectrumModel::MirrorToy)
}

/// Pointwise evaluator matching [`spectral_density`] or [`dirichlet_toy`].
pub fn engine_for(params: &NaturalParams, n: usize, toy: MirrorToyConfig) -> Result<SpectrumEngine> {
    let drive = default_drive(params)?.with_series(toy.series());
    SpectrumEngine::new(params, &drive, n)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub fn refine_peak<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b)?;
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How a spectral integral becomes a rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConvention {
    /// Factor multiplying `int N dw`; `1` counts per unit angular frequency,
    /// `1/(2 pi)` per unit ordinary frequency.
    pub angular_measure: f64,
    /// Effective emission time in units of `tau`.
    pub time_divisor_in_tau: f64,
}

impl Default for RateConvention {
    fn default() -> Self {
        RateConvention {
            angular_measure: 1.0,
            time_divisor_in_tau: 1.0,
        }
    }
}

/// Largest tolerated relative trapezoid error.
pub const RATE_RESOLUTION_LIMIT: f64 = 5e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRatios {
    /// All orders over the lowest order; `None` when the latter vanishes.
    pub enhancement: Option<f64>,
    /// Share of each band in the total; `None` for a vanishing total.
    pub band_fractions: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub total_rate: f64,
    /// Rate of the lowest order (`eps^2 N_2`) alone.
    pub leading_rate: f64,
    /// Rates over `[m w0, (m + 1) w0]` clipped to the grid.
    pub band_rates: Vec<f64>,
    pub convention: RateConvention,
    pub ratios: RateRatios,
    pub estimated_rel_error: f64,
}

/// Trapezoid integral of samples `(x, y)` over `[a, b]` with linear
/// interpolation at the ends.
fn trapezoid(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let interp = |t: f64| -> f64 {
        let i = x.partition_point(|&v| v < t);
        if i == 0 {
            y[0]
        } else if i == x.len() {
            y[x.len() - 1]
        } else if x[i] == t {
            y[i]
        } else {
            let s = (t - x[i - 1]) / (x[i] - x[i - 1]);
            y[i - 1] + s * (y[i] - y[i - 1])
        }
    };
    let mut xs = vec![a];
    let mut ys = vec![interp(a)];
    for (&xi, &yi) in x.iter().zip(y) {
        if xi > a && xi < b {
            xs.push(xi);
            ys.push(yi);
        }
    }
    xs.push(b);
    ys.push(interp(b));
    xs.windows(2).zip(ys.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

pub fn photon_rate(result: &SpectralResult, convention: &RateConvention) -> Result<RateReport> {
    if !(convention.angular_measure > 0.0 && convention.time_divisor_in_tau > 0.0) {
        return Err(Error::validation("convention", "factors must be positive"));
    }
    let omega0 = result.params.omega0();
    if result.per_order.keys().any(|&p| p >= 4) {
        let dense = result.grid.iter().filter(|&&w| w <= 2.0 * omega0).count();
        if dense < 400 {
            // Trapezoid error scales as the squared spacing; 400 points sit at the limit.
            return Err(Error::Resolution {
                estimated: RATE_RESOLUTION_LIMIT * (400.0 / dense.max(1) as f64).powi(2),
                limit: RATE_RESOLUTION_LIMIT,
            });
        }
    }
    // the spectrum vanishes at w -> 0
    let mut x = vec![0.0];
    x.extend_from_slice(&result.grid);
    let mut total = vec![0.0];
    total.extend(result.total());
    let eps2 = result.params.epsilon().powi(2);
    let mut leading = vec![0.0];
    leading.extend(result.order(2).map_or(vec![0.0; result.grid.len()], |v| v.iter().map(|n| eps2 * n).collect()));

    let top = *x.last().expect("nonempty");
    let factor = convention.angular_measure / convention.time_divisor_in_tau;
    let n_bands = (top / omega0).ceil().max(1.0) as usize;
    let band_rates: Vec<f64> = (0..n_bands)
        .map(|m| factor * trapezoid(&x, &total, m as f64 * omega0, ((m + 1) as f64 * omega0).min(top)))
        .collect();
    let total_rate: f64 = band_rates.iter().sum();
    let leading_rate = factor * trapezoid(&x, &leading, 0.0, top);

    // Richardson estimate from the every-other-point subgrid
    let xh: Vec<f64> = x.iter().step_by(2).copied().collect();
    let th: Vec<f64> = total.iter().step_by(2).copied().collect();
    let coarse: f64 = (0..n_bands)
        .map(|m| factor * trapezoid(&xh, &th, m as f64 * omega0, ((m + 1) as f64 * omega0).min(top)))
        .sum();
    let estimated_rel_error = if total_rate != 0.0 {
        ((total_rate - coarse) / 3.0 / total_rate).abs()
    } else {
        0.0
    };
    if estimated_rel_error > RATE_RESOLUTION_LIMIT {
        return Err(Error::Resolution {
            estimated: estimated_rel_error,
            limit: RATE_RESOLUTION_LIMIT,
        });
    }

    let ratios = RateRatios {
        enhancement: (leading_rate != 0.0).then(|| total_rate / leading_rate),
        band_fractions: band_rates.iter().map(|b| (total_rate != 0.0).then(|| b / total_rate)).collect(),
    };
    Ok(RateReport {
        total_rate,
        leading_rate,
        band_rates,
        convention: *convention,
        ratios,
        estimated_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(order: usize) -> NaturalParams {
        // SQUID-like in units of omega0
        NaturalParams::new(0.23729, 1.0, 0.25, 1e4, order).unwrap()
    }

    fn shape(w: f64, g: f64) -> f64 {
        w * (1.0 - w) / ((1.0 + g * g * w * w) * (1.0 + g * g * (1.0 - w) * (1.0 - w)))
    }

    #[test]
    fn default_grid_layout() {
        let g = FrequencyGrid::default_for(2.0);
        assert_eq!(g.len(), 820);
        assert_eq!(g.points()[199], 1.0);
        assert_eq!(g.points()[399], 2.0);
        assert_eq!(*g.points().last().unwrap(), 4.1);
        assert!(FrequencyGrid::new(vec![0.2, 0.1]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 0.1]).is_err());
    }

    #[test]
    fn first_order_shape() {
        let p = params(1);
        let r = spectral_density(&p, &FrequencyGrid::default_for(1.0), 1).unwrap();
        let n2 = r.order(2).unwrap();
        let g = p.gamma0();
        // N2/tau = 4 S(w) / (pi * 2) * (1/4)^2 ... compare shape only
        let k = n2[199] / shape(0.5, g);
        for (i, &w) in r.grid.iter().enumerate() {
            let expect = if w < 1.0 { k * shape(w, g) } else { 0.0 };
            assert!((n2[i] - expect).abs() <= 1e-12 * n2[199], "w={w}");
        }
        assert!((k - g * g / (2.0 * std::f64::consts::PI)).abs() < 1e-12 * k);
    }

    #[test]
    fn third_order_has_vanishing_odd_part_and_positive_total() {
        let p = params(3);
        let r = spectral_density(&p, &FrequencyGrid::default_for(1.0), 3).unwrap();
        assert_eq!(r.per_order.keys().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert!(r.order(3).unwrap().iter().all(|&v| v == 0.0));
        let n4 = r.order(4).unwrap();
        assert!(n4[599] > 0.0);
        for (w, v) in r.grid.iter().zip(n4) {
            if *w >= 2.0 {
                assert_eq!(*v, 0.0);
            }
        }
        let total = r.total();
        let peak = total.iter().cloned().fold(0.0, f64::max);
        assert!(total.iter().all(|&t| t >= -1e-12 * peak));
        assert!(total[399] > 0.0);
    }

    #[test]
    fn toy_first_order_matches_full() {
        let p = params(3);
        let grid = FrequencyGrid::default_for(1.0);
        let full = spectral_density(&p, &grid, 3).unwrap();
        let toy = dirichlet_toy(&p, &grid).unwrap();
        assert_eq!(full.order(2), toy.order(2));
        assert_eq!(toy.model, SpectrumModel::MirrorToy);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(1);
        let grid = FrequencyGrid::default_for(1.0);
        assert!(spectral_density(&p, &grid, 0).is_err());
        let slow = NaturalParams::new(0.2, 1.0, 0.25, 50.0, 1).unwrap();
        assert!(matches!(spectral_density(&slow, &grid, 1), Err(Error::BelowMonochromaticThreshold { .. })));
        let wide = FrequencyGrid::uniform(0.1, 3.0, 10).unwrap();
        assert!(spectral_density(&p, &wide, 1).is_err());
    }

    #[test]
    fn rates_and_conventions() {
        let p = params(3);
        let r = spectral_density(&p, &FrequencyGrid::default_for(1.0), 3).unwrap();
        let a = photon_rate(&r, &RateConvention::default()).unwrap();
        let b = photon_rate(&r, &RateConvention { angular_measure: 1.0 / (2.0 * std::f64::consts::PI), time_divisor_in_tau: 3.0 }).unwrap();
        assert!((a.band_rates.iter().sum::<f64>() - a.total_rate).abs() < 1e-14 * a.total_rate);
        let (ea, eb) = (a.ratios.enhancement.unwrap(), b.ratios.enhancement.unwrap());
        assert!((ea - eb).abs() < 1e-12);
        for (x, y) in a.ratios.band_fractions.iter().zip(&b.ratios.band_fractions) {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
        }
        assert_eq!(a.band_rates.len(), 3);
    }

    #[test]
    fn first_order_rate_matches_closed_integral() {
        // int_0^1 S(w) dw for g -> 0 is 1/6
        let p = NaturalParams::new(1e-6, 1.0, 0.25, 1e4, 1).unwrap();
        let r = spectral_density(&p, &FrequencyGrid::default_for(1.0), 1).unwrap();
        let rate = photon_rate(&r, &RateConvention::default()).unwrap();
        let expect = 0.0625 * 1e-12 / (2.0 * std::f64::consts::PI) / 6.0;
        assert!((rate.total_rate - expect).abs() < 1e-5 * expect);
    }

    #[test]
    fn zero_spectrum_gives_zero_rates() {
        let p = params(1);
        let mut r = spectral_density(&p, &FrequencyGrid::default_for(1.0), 1).unwrap();
        for v in r.per_order.values_mut() {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        let rate = photon_rate(&r, &RateConvention::default()).unwrap();
        assert_eq!(rate.total_rate, 0.0);
        assert!(rate.band_rates.iter().all(|&b| b == 0.0));
        assert_eq!(rate.ratios.enhancement, None);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = params(1);
        let grid = FrequencyGrid::uniform(0.05, 1.05, 6).unwrap();
        let r = spectral_density(&p, &grid, 1).unwrap();
        assert!(matches!(photon_rate(&r, &RateConvention::default()), Err(Error::Resolution { .. })));
    }

    #[test]
    fn golden_section_finds_peak() {
        let x = refine_peak(|w| Ok(-(w - 0.3).powi(2)), 0.0, 1.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0), "1e0");
        assert_eq!(format_sig12(0.1 + 0.2), "3e-1");
        assert_eq!(format_sig12(-1234.5678901234), "-1.23456789012e3");
        let x = 6.02214076e23;
        assert_eq!(format_sig12(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_layout() {
        let p = params(1);
        let grid = FrequencyGrid::uniform(0.1, 1.0, 4).unwrap();
        let r = spectral_density(&p, &grid, 1).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "omega,omega_over_omega0,N2_over_tau,N3_over_tau,N4_over_tau,total_over_tau");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("1e0,1e0,0,0,0,0"));
    }

    #[test]
    fn json_round_trip() {
        let p = params(2);
        let grid = FrequencyGrid::uniform(0.1, 1.9, 7).unwrap();
        let r = spectral_density(&p, &grid, 2).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: SpectralResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
