//! Globally adaptive Gauss-Kronrod (10/21) quadrature for integrands made of
//! narrow Lorentzian peaks on top of slowly varying factors.
//!
//! The integration range is cut into panels before any subdivision happens:
//! a core window of `core_halfwidths` widths on each side of every known peak
//! is integrated in the angle variable `x = c + w tan(theta)`, which turns a
//! Lorentzian into a constant; the remaining finite gaps are integrated in
//! `x`; semi-infinite tails go through the rational map `u = x / (1 + |x|)`
//! after scaling `x` by the typical size of the problem.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substitution used on semi-infinite tails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TailMap {
    /// `x = s u / (1 - |u|)`, `u` in `(-1, 1)`.
    Rational { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_floor: f64,
    /// `None` picks the scale from the peak list.
    pub tail_scale: Option<f64>,
    pub max_depth: u32,
    pub max_intervals: usize,
    pub core_halfwidths: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            rel_tol: 1e-8,
            abs_floor: 0.0,
            tail_scale: None,
            max_depth: 48,
            max_intervals: 4000,
            core_halfwidths: 50.0,
        }
    }
}

impl QuadSpec {
    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        QuadSpec { rel_tol, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return Err(Error::validation(
                "rel_tol",
                format!("must lie in (0, 1e-3], got {}", self.rel_tol),
            ));
        }
        if !(self.abs_floor >= 0.0) {
            return Err(Error::validation("abs_floor", "must be nonnegative"));
        }
        if self.max_depth == 0 || self.max_depth > 64 {
            return Err(Error::validation("max_depth", "must lie in 1..=64"));
        }
        if !(self.core_halfwidths > 0.0) {
            return Err(Error::validation("core_halfwidths", "must be positive"));
        }
        Ok(())
    }

    fn tail_map(&self, peaks: &[(f64, f64)]) -> TailMap {
        let scale = self.tail_scale.unwrap_or_else(|| {
            let s = peaks
                .iter()
                .map(|&(c, w)| c.abs().max(w))
                .fold(0.0, f64::max);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        });
        TailMap::Rational { scale }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
enum Map {
    Identity,
    Tangent { center: f64, width: f64 },
    Rational { scale: f64 },
}

impl Map {
    #[inline]
    fn apply(self, t: f64) -> (f64, f64) {
        match self {
            Map::Identity => (t, 1.0),
            Map::Tangent { center, width } => {
                let (s, c) = t.sin_cos();
                (center + width * s / c, width / (c * c))
            }
            Map::Rational { scale } => {
                let d = 1.0 - t.abs();
                (scale * t / d, scale / (d * d))
            }
        }
    }

    fn inverse(self, x: f64) -> f64 {
        match self {
            Map::Identity => x,
            Map::Tangent { center, width } => ((x - center) / width).atan(),
            Map::Rational { scale } => {
                if x == f64::INFINITY {
                    1.0
                } else if x == f64::NEG_INFINITY {
                    -1.0
                } else {
                    let y = x / scale;
                    y / (1.0 + y.abs())
                }
            }
        }
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

struct Panel {
    map: Map,
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: Fn(f64) -> Complex64>(f: &F, map: Map, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let g = |t: f64| {
        let (x, jac) = map.apply(t);
        let v = f(x) * jac;
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            Complex64::new(f64::NAN, f64::NAN)
        }
    };
    let fc = g(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = Complex64::new(0.0, 0.0);
    let mut res_abs = fc.norm() * WGK[10];
    let mut fv = [(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); 10];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = g(center - dx);
        let f2 = g(center + dx);
        *slot = (f1, f2);
        res_k += (f1 + f2) * WGK[j];
        res_abs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            res_g += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = (fc - mean).norm() * WGK[10];
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        res_asc += ((f1 - mean).norm() + (f2 - mean).norm()) * WGK[j];
    }
    let scale = half.abs();
    let value = res_k * half;
    let res_abs = res_abs * scale;
    let res_asc = res_asc * scale;
    let mut err = ((res_k - res_g) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    if !(value.re.is_finite() && value.im.is_finite()) {
        err = f64::INFINITY;
    }
    (value, err)
}

/// Split `[lo, hi]` into mapped panels around the given `(center, width)`
/// peaks.
fn panels(lo: f64, hi: f64, peaks: &[(f64, f64)], spec: &QuadSpec) -> Vec<(Map, f64, f64)> {
    let tail = match spec.tail_map(peaks) {
        TailMap::Rational { scale } => Map::Rational { scale },
    };
    let mut sorted: Vec<(f64, f64)> = peaks
        .iter()
        .copied()
        .filter(|&(c, w)| c.is_finite() && w > 0.0)
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sorted.dedup_by(|later, kept| later.0 == kept.0);

    // x-space intervals with the map used on each
    let mut pieces: Vec<(Map, f64, f64)> = Vec::new();
    let mut cursor = lo;
    for (i, &(c, w)) in sorted.iter().enumerate() {
        let left_mid = if i > 0 { 0.5 * (sorted[i - 1].0 + c) } else { f64::NEG_INFINITY };
        let right_mid = if i + 1 < sorted.len() { 0.5 * (c + sorted[i + 1].0) } else { f64::INFINITY };
        let l = (c - spec.core_halfwidths * w).max(left_mid).max(lo);
        let r = (c + spec.core_halfwidths * w).min(right_mid).min(hi);
        if r <= cursor || l >= hi {
            continue;
        }
        let l = l.max(cursor);
        if l > cursor {
            pieces.push((gap_map(cursor, l, tail), cursor, l));
        }
        let anchor = Map::Tangent { center: c, width: w };
        let mid = c.clamp(l, r);
        if mid > l {
            pieces.push((anchor, l, mid));
        }
        if r > mid {
            pieces.push((anchor, mid, r));
        }
        cursor = r;
    }
    if cursor < hi {
        pieces.push((gap_map(cursor, hi, tail), cursor, hi));
    }

    let mut out = Vec::new();
    for (map, a, b) in pieces {
        // keep the rational map away from its kink at the origin
        if let Map::Rational { .. } = map {
            if a < 0.0 && b > 0.0 {
                out.push((map, map.inverse(a), 0.0));
                out.push((map, 0.0, map.inverse(b)));
                continue;
            }
        }
        let (ta, tb) = (map.inverse(a), map.inverse(b));
        if tb > ta {
            out.push((map, ta, tb));
        }
    }
    out
}

fn gap_map(a: f64, b: f64, tail: Map) -> Map {
    if a.is_finite() && b.is_finite() {
        Map::Identity
    } else {
        tail
    }
}

/// Integrate `f` over `[lo, hi]` (either end may be infinite).
///
/// `peaks` lists `(center, width)` of the narrow structures of `f`; they only
/// steer the initial partition, correctness does not depend on them.
pub fn integrate<F>(f: F, lo: f64, hi: f64, peaks: &[(f64, f64)], spec: &QuadSpec) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    spec.validate()?;
    if !(lo < hi) {
        if lo == hi {
            return Ok(QuadResult {
                value: Complex64::new(0.0, 0.0),
                error: 0.0,
                evaluations: 0,
            });
        }
        return Err(Error::validation("interval", format!("lower bound {lo} above upper {hi}")));
    }
    let mut heap = BinaryHeap::new();
    let mut finished: Vec<Panel> = Vec::new();
    let mut evaluations = 0usize;
    for (map, a, b) in panels(lo, hi, peaks, spec) {
        let (value, error) = gk21(&f, map, a, b);
        evaluations += 21;
        heap.push(Panel { map, a, b, value, error, depth: 0 });
    }

    loop {
        let total: Complex64 = heap.iter().chain(finished.iter()).map(|p| p.value).sum();
        let err: f64 = heap.iter().chain(finished.iter()).map(|p| p.error).sum();
        let target = spec.abs_floor.max(spec.rel_tol * total.norm());
        if err <= target && err.is_finite() {
            return Ok(QuadResult { value: total, error: err, evaluations });
        }
        let n_panels = heap.len() + finished.len();
        let worst = match heap.pop() {
            Some(p) => p,
            None => return Err(Error::Quadrature { estimate: total.norm(), error: err }),
        };
        if worst.depth >= spec.max_depth || n_panels >= spec.max_intervals {
            if !worst.error.is_finite() || n_panels >= spec.max_intervals {
                return Err(Error::Quadrature { estimate: total.norm(), error: err });
            }
            finished.push(worst);
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk21(&f, worst.map, a, b);
            evaluations += 21;
            heap.push(Panel { map: worst.map, a, b, value, error, depth: worst.depth + 1 });
        }
    }
}

pub fn integrate_real_line<F>(f: F, peaks: &[(f64, f64)], spec: &QuadSpec) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    integrate(f, f64::NEG_INFINITY, f64::INFINITY, peaks, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(rel_tol: f64) -> QuadSpec {
        QuadSpec { rel_tol, ..QuadSpec::default() }
    }

    #[test]
    fn polynomial_on_finite_interval() {
        let r = integrate(|x| Complex64::new(x * x, 0.0), 0.0, 3.0, &[], &spec(1e-12)).unwrap();
        assert!((r.value.re - 9.0).abs() < 1e-12);
    }

    #[test]
    fn narrow_lorentzian_on_real_line() {
        let w = 1e-6;
        let f = |x: f64| Complex64::new(w / (PI * ((x - 3.0).powi(2) + w * w)), 0.0);
        // x - 3 carries ~eps*3/w relative noise, so 1e-9 is about the floor
        let r = integrate_real_line(f, &[(3.0, w)], &spec(1e-9)).unwrap();
        assert!((r.value.re - 1.0).abs() < 1e-9, "{}", r.value.re);
        let f0 = |x: f64| Complex64::new(w / (PI * (x * x + w * w)), 0.0);
        let r = integrate_real_line(f0, &[(0.0, w)], &spec(1e-12)).unwrap();
        assert!((r.value.re - 1.0).abs() < 1e-12, "{}", r.value.re);
    }

    #[test]
    fn narrow_lorentzian_without_hint_still_converges_on_wide_one() {
        let w = 0.3;
        let f = |x: f64| Complex64::new(w / (PI * (x * x + w * w)), 0.0);
        let r = integrate_real_line(f, &[], &spec(1e-10)).unwrap();
        assert!((r.value.re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn half_line_and_complex_values() {
        // int_0^inf e^{-x} (1 + i) dx
        let r = integrate(|x| Complex64::new(1.0, 1.0) * (-x).exp(), 0.0, f64::INFINITY, &[], &spec(1e-12)).unwrap();
        assert!((r.value - Complex64::new(1.0, 1.0)).norm() < 1e-11);
        let r = integrate(|x| Complex64::new(x.exp(), 0.0), f64::NEG_INFINITY, 0.0, &[], &spec(1e-12)).unwrap();
        assert!((r.value.re - 1.0).abs() < 1e-11);
    }

    #[test]
    fn overlapping_peaks() {
        let w = 1e-4;
        let l = |x: f64, c: f64| w / (PI * ((x - c).powi(2) + w * w));
        let f = |x: f64| Complex64::new(l(x, 0.0) * l(x, 3e-4), 0.0);
        let exact = 2.0 * w / (PI * (9e-8 + 4.0 * w * w));
        let r = integrate_real_line(f, &[(0.0, w), (3e-4, w)], &spec(1e-11)).unwrap();
        assert!((r.value.re - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn tolerance_halving_is_consistent() {
        let w = 1e-3;
        let f = |x: f64| Complex64::new((1.0 + x).cos() * w / (PI * ((x - 0.5).powi(2) + w * w)), 0.0);
        let coarse = integrate_real_line(f, &[(0.5, w)], &spec(1e-6)).unwrap();
        let fine = integrate_real_line(f, &[(0.5, w)], &spec(5e-7)).unwrap();
        assert!((coarse.value - fine.value).norm() <= coarse.error.max(1e-15));
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(integrate(|_| Complex64::new(1.0, 0.0), 0.0, 1.0, &[], &spec(0.1)).is_err());
        assert!(integrate(|_| Complex64::new(1.0, 0.0), 0.0, 1.0, &[], &spec(0.0)).is_err());
    }

    #[test]
    fn divergent_integral_reports_failure() {
        let s = QuadSpec { max_intervals: 200, ..spec(1e-10) };
        let r = integrate(|x| Complex64::new(1.0 / x, 0.0), 0.0, 1.0, &[], &s);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
