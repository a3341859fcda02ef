//! Order-by-order Bogoliubov kernels `G^(j)(w, xi)` in the monochromatic limit.
//!
//! Every term of `h^(j)(w, xi) = {O^(j) g}_{x=0}` has the shape
//!
//! ```text
//! coeff * xi * prod_i K(w - n_i w0) * L(w - xi; M w0, W / tau)
//! ```
//!
//! where the kernel arguments are shifted copies of the outer frequency left
//! behind when each internal `xi_1` integral is localized on the drive peak
//! `xi_1 = w - s w0`. A term remembers the recursion path `(k, s)` that made
//! it, outermost step first.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::{Drive, ORDER_BOUND};
use crate::error::{Error, Result};
use crate::lorentz::Lorentzian;
use crate::params::NaturalParams;

/// `K(xi) = i xi / (1 - i xi gamma0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalKernel {
    pub gamma0: f64,
}

impl RationalKernel {
    #[inline]
    pub fn eval(&self, xi: f64) -> Complex64 {
        Complex64::new(0.0, xi) / Complex64::new(1.0, -xi * self.gamma0)
    }

    #[inline]
    pub fn eval_inverse(&self, xi: f64) -> Complex64 {
        Complex64::new(1.0, -xi * self.gamma0) / Complex64::new(0.0, xi)
    }
}

/// Where a kernel factor is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArg {
    /// The outer mode frequency `xi`.
    Xi,
    /// `w - shift * w0`.
    Omega { shift: i32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelFactor {
    pub arg: KernelArg,
    pub power: i32,
}

/// Merge factors with the same argument and drop those whose powers cancel.
fn normalize_kernels(factors: Vec<KernelFactor>) -> Vec<KernelFactor> {
    let mut acc: BTreeMap<KernelArg, i32> = BTreeMap::new();
    for f in factors {
        *acc.entry(f.arg).or_insert(0) += f.power;
    }
    acc.into_iter()
        .filter(|&(_, p)| p != 0)
        .map(|(arg, power)| KernelFactor { arg, power })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathStep {
    /// Power of the drive used at this level.
    pub k: u32,
    /// Signed harmonic picked from `F_k`.
    pub s: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GTerm {
    pub path: Vec<PathStep>,
    pub coeff: f64,
    pub kernels: Vec<KernelFactor>,
    pub xi_power: u32,
    /// Peak center in units of `w0`.
    pub harmonic: i32,
    /// Peak width in units of `1/tau`.
    pub width_index: u32,
}

impl GTerm {
    pub fn peak(&self, omega0: f64, tau: f64) -> Lorentzian {
        Lorentzian::new(self.harmonic as f64 * omega0, self.width_index as f64 / tau)
            .expect("positive width by construction")
    }

    /// Smooth factor at outer frequency `omega` with the `xi` dependence removed.
    fn smooth_at(&self, omega: f64, omega0: f64, kernel: &RationalKernel) -> Complex64 {
        let mut v = Complex64::new(self.coeff, 0.0);
        for f in &self.kernels {
            match f.arg {
                KernelArg::Omega { shift } => v *= kernel.eval(omega - shift as f64 * omega0).powi(f.power),
                KernelArg::Xi => unreachable!("xi kernels cancel in the base case"),
            }
        }
        v
    }

    pub fn describe(&self) -> String {
        let mut s = format!("{:+.6e}", self.coeff);
        for f in &self.kernels {
            let arg = match f.arg {
                KernelArg::Xi => "xi".to_string(),
                KernelArg::Omega { shift: 0 } => "w".to_string(),
                KernelArg::Omega { shift } => format!("w{:+}w0", -shift),
            };
            s.push_str(&format!(" K({arg})"));
            if f.power != 1 {
                s.push_str(&format!("^{}", f.power));
            }
        }
        for _ in 0..self.xi_power {
            s.push_str(" xi");
        }
        s
    }

    fn signature(&self) -> (i32, u32, &[PathStep]) {
        (self.harmonic, self.width_index, &self.path)
    }
}

/// `dg/dx` at the boundary for the mode function `g(k, x) = sin(kx) + k gamma0 cos(kx)`.
pub fn mode_slope_at_boundary(k: f64, _gamma0: f64) -> f64 {
    // d/dx [sin(kx) + k gamma0 cos(kx)] = k cos(kx) - k^2 gamma0 sin(kx), at x = 0
    k
}

pub fn mode_function(k: f64, x: f64, gamma0: f64) -> f64 {
    (k * x).sin() + k * gamma0 * (k * x).cos()
}

/// `2 i sqrt(w / (1 + w^2 gamma0^2))`.
pub fn root_prefactor(omega: f64, gamma0: f64) -> Complex64 {
    Complex64::new(0.0, 2.0) * Complex64::new(omega / (1.0 + omega * omega * gamma0 * gamma0), 0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GOrder {
    pub j: usize,
    pub terms: Vec<GTerm>,
    #[serde(skip)]
    omega0: f64,
    #[serde(skip)]
    tau: f64,
    #[serde(skip)]
    gamma0: f64,
}

impl GOrder {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn harmonics(&self) -> Vec<i32> {
        let mut m: Vec<i32> = self.terms.iter().map(|t| t.harmonic).collect();
        m.dedup();
        m
    }

    /// `A_{j,M}(w)`: `h^(j)(w, xi) = xi * sum_M A_{j,M}(w) L(w - xi; M w0, j/tau)`.
    pub fn amplitudes(&self, omega: f64) -> BTreeMap<i32, Complex64> {
        let kernel = RationalKernel { gamma0: self.gamma0 };
        let mut out = BTreeMap::new();
        for t in &self.terms {
            *out.entry(t.harmonic).or_insert(Complex64::new(0.0, 0.0)) += t.smooth_at(omega, self.omega0, &kernel);
        }
        out
    }

    /// `{O^(j) g}_{x=0}` at `(w, xi)`.
    pub fn eval_h(&self, omega: f64, xi: f64) -> Complex64 {
        let kernel = RationalKernel { gamma0: self.gamma0 };
        self.terms
            .iter()
            .map(|t| {
                let peak = t.peak(self.omega0, self.tau).eval(omega - xi);
                t.smooth_at(omega, self.omega0, &kernel) * xi.powi(t.xi_power as i32) * peak
            })
            .sum()
    }

    pub fn eval(&self, omega: f64, xi: f64) -> Complex64 {
        root_prefactor(omega, self.gamma0) * self.eval_h(omega, xi)
    }
}

fn check_order(j: usize) -> Result<()> {
    if j == 0 {
        return Err(Error::validation("order", "must be at least 1"));
    }
    if j > ORDER_BOUND {
        return Err(Error::OrderOverflow { order: j, bound: ORDER_BOUND });
    }
    Ok(())
}

/// Terms produced directly from the base operator by one application of the
/// `k`-th drive power: the kernel `K(xi_1)` meets the inverse kernel carried by
/// `delta(xi_1 - xi)` and the two cancel.
fn direct_terms(k: usize, params: &NaturalParams, drive: &Drive) -> Result<Vec<GTerm>> {
    let g0 = params.signed_gamma0();
    let mut out = Vec::new();
    for (s, b) in drive.harmonics(k)? {
        // F_k = 2 pi sum b_s L, and the internal measure supplies 1/(2 pi)
        let coeff = g0 * (2.0 * PI * b) / (2.0 * PI);
        let kernels = normalize_kernels(vec![
            KernelFactor { arg: KernelArg::Xi, power: 1 },
            KernelFactor { arg: KernelArg::Xi, power: -1 },
        ]);
        debug_assert_eq!(mode_slope_at_boundary(1.0, g0), 1.0);
        out.push(GTerm {
            path: vec![PathStep { k: k as u32, s }],
            coeff,
            kernels,
            xi_power: 1,
            harmonic: s,
            width_index: k as u32,
        });
    }
    Ok(out)
}

fn sort_terms(terms: &mut [GTerm]) {
    terms.sort_by(|a, b| a.signature().cmp(&b.signature()));
}

pub fn base_g(params: &NaturalParams, drive: &Drive) -> Result<GOrder> {
    let mut terms = direct_terms(1, params, drive)?;
    sort_terms(&mut terms);
    Ok(GOrder {
        j: 1,
        terms,
        omega0: params.omega0(),
        tau: params.tau(),
        gamma0: params.signed_gamma0(),
    })
}

/// Build order `lower.len() + 1` from all lower orders.
///
/// Only the monochromatic reduction is available here; the unreduced
/// integrals are evaluated by [`crate::oracle`].
pub fn raise_order(lower: &[GOrder], params: &NaturalParams, drive: &Drive, mono: bool) -> Result<GOrder> {
    if !mono {
        return Err(Error::validation(
            "mono",
            "unreduced internal integrals are only available through the oracle",
        ));
    }
    let j = lower.len() + 1;
    check_order(j)?;
    for (i, g) in lower.iter().enumerate() {
        if g.j != i + 1 {
            return Err(Error::validation("lower", format!("expected order {} at position {i}", i + 1)));
        }
    }
    let g0 = params.signed_gamma0();
    let mut terms = direct_terms(j, params, drive)?;
    for k in 1..j {
        let inner = &lower[j - k - 1];
        for (s, b) in drive.harmonics(k)? {
            for t in &inner.terms {
                // K(xi_1) and the inner kernels are localized on xi_1 = w - s w0
                let mut kernels = vec![KernelFactor { arg: KernelArg::Omega { shift: s }, power: 1 }];
                for f in &t.kernels {
                    let arg = match f.arg {
                        KernelArg::Omega { shift } => KernelArg::Omega { shift: shift + s },
                        KernelArg::Xi => KernelArg::Xi,
                    };
                    kernels.push(KernelFactor { arg, power: f.power });
                }
                let mut path = Vec::with_capacity(t.path.len() + 1);
                path.push(PathStep { k: k as u32, s });
                path.extend_from_slice(&t.path);
                terms.push(GTerm {
                    path,
                    coeff: g0 * b * t.coeff,
                    kernels: normalize_kernels(kernels),
                    xi_power: t.xi_power,
                    harmonic: s + t.harmonic,
                    width_index: k as u32 + t.width_index,
                });
            }
        }
    }
    sort_terms(&mut terms);
    Ok(GOrder {
        j,
        terms,
        omega0: params.omega0(),
        tau: params.tau(),
        gamma0: g0,
    })
}

/// `G^(1) .. G^(n)`.
pub fn build_all(params: &NaturalParams, drive: &Drive, n: usize) -> Result<Vec<GOrder>> {
    check_order(n)?;
    let mut orders = vec![base_g(params, drive)?];
    while orders.len() < n {
        let next = raise_order(&orders, params, drive, true)?;
        orders.push(next);
    }
    Ok(orders)
}

#[derive(Serialize)]
struct TermRow<'a> {
    j: usize,
    path: &'a [PathStep],
    harmonic: i32,
    width_index: u32,
    prefactor: String,
}

/// Term tables of all orders as a JSON array.
pub fn dump_terms(orders: &[GOrder]) -> serde_json::Value {
    let rows: Vec<TermRow> = orders
        .iter()
        .flat_map(|g| {
            g.terms.iter().map(move |t| TermRow {
                j: g.j,
                path: &t.path,
                harmonic: t.harmonic,
                width_index: t.width_index,
                prefactor: t.describe(),
            })
        })
        .collect();
    serde_json::to_value(rows).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{DriveProfile, DriveSeries};

    fn setup(order: usize) -> (NaturalParams, Drive) {
        let p = NaturalParams::new(0.2373, 1.0, 0.25, 2000.0, order).unwrap();
        let d = Drive::new(DriveProfile::new(p.omega0(), p.tau()).unwrap());
        (p, d)
    }

    fn r(nu: f64, g: f64) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(1.0, -nu * g)
    }

    #[test]
    fn kernel_and_inverse() {
        let k = RationalKernel { gamma0: 0.3 };
        for &x in &[-2.0, -0.1, 0.4, 3.0] {
            assert!((k.eval(x) * k.eval_inverse(x) - 1.0).norm() < 1e-15);
        }
        assert_eq!(k.eval(0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn mode_slope_matches_finite_difference() {
        for &(k, g) in &[(0.5, 0.2), (2.0, 0.7), (1.3, 0.0)] {
            let h = 1e-6;
            let fd = (mode_function(k, h, g) - mode_function(k, -h, g)) / (2.0 * h);
            assert!((fd - mode_slope_at_boundary(k, g)).abs() < 1e-8);
        }
    }

    #[test]
    fn base_case_cancels_kernels() {
        let (p, d) = setup(1);
        let g1 = base_g(&p, &d).unwrap();
        assert_eq!(g1.len(), 2);
        assert!(g1.terms.iter().all(|t| t.kernels.is_empty() && t.xi_power == 1));
        // h1 = gamma0 / (2 pi) F1(w - xi) xi
        let profile = DriveProfile::new(1.0, 2000.0).unwrap();
        let f1 = crate::drive::fourier_fk(&profile, 1).unwrap();
        for &(w, xi) in &[(0.3, -0.7), (0.5, -0.5), (1.2, 0.2)] {
            let expect = p.gamma0() / (2.0 * PI) * f1.eval(w - xi) * xi;
            assert!((g1.eval_h(w, xi) - expect).norm() < 1e-12 * expect.norm());
        }
    }

    #[test]
    fn null_drive_gives_empty_orders() {
        let (p, d) = setup(3);
        let d = d.with_series(DriveSeries::Null);
        for g in build_all(&p, &d, 3).unwrap() {
            assert!(g.is_empty());
        }
    }

    #[test]
    fn second_order_census() {
        let (p, d) = setup(2);
        let all = build_all(&p, &d, 2).unwrap();
        let g2 = &all[1];
        assert_eq!(g2.len(), 7);
        assert_eq!(g2.harmonics(), vec![-2, 0, 2]);
        let chained: Vec<_> = g2.terms.iter().filter(|t| t.path.len() == 2).collect();
        assert_eq!(chained.len(), 4);
        assert!(g2.terms.iter().all(|t| t.width_index == 2));
    }

    #[test]
    fn census_grows_and_bookkeeping_holds() {
        let (p, d) = setup(6);
        let all = build_all(&p, &d, 6).unwrap();
        let counts: Vec<usize> = all.iter().map(GOrder::len).collect();
        assert_eq!(&counts[..4], &[2, 7, 24, 82]);
        assert!(counts.windows(2).all(|w| w[1] > w[0]));
        for g in &all {
            for t in &g.terms {
                assert!(t.harmonic.unsigned_abs() <= t.width_index);
                assert_eq!(t.width_index as usize, g.j);
                let ksum: u32 = t.path.iter().map(|s| s.k).sum();
                assert_eq!(ksum, t.width_index);
            }
        }
    }

    #[test]
    fn vanishes_at_zero_xi() {
        let (p, d) = setup(4);
        for g in build_all(&p, &d, 4).unwrap() {
            for &w in &[0.1, 0.5, 1.0, 1.7] {
                assert_eq!(g.eval(w, 0.0), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn deterministic() {
        let (p, d) = setup(5);
        assert_eq!(build_all(&p, &d, 5).unwrap(), build_all(&p, &d, 5).unwrap());
    }

    #[test]
    fn order_limits() {
        let (p, d) = setup(1);
        assert!(matches!(build_all(&p, &d, ORDER_BOUND + 1), Err(Error::OrderOverflow { .. })));
        assert!(build_all(&p, &d, 0).is_err());
        let g1 = base_g(&p, &d).unwrap();
        assert!(raise_order(&[g1], &p, &d, false).is_err());
    }

    #[test]
    fn prefactor_identity() {
        for &g in &[0.0, 0.1, 0.2373, 1.5] {
            for i in 1..50 {
                let w = 0.05 * i as f64;
                let lhs = root_prefactor(w, g).norm_sqr();
                assert!((lhs - 4.0 * w / (1.0 + w * w * g * g)).abs() < 1e-14 * lhs);
                let alt = 2.0 * w.sqrt() / Complex64::new(1.0, -w * g).norm();
                assert!((root_prefactor(w, g).norm() - alt).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn closed_form_amplitudes() {
        let (p, d) = setup(3);
        let g = p.gamma0();
        let all = build_all(&p, &d, 3).unwrap();
        for i in 1..40 {
            let w = 0.05 * i as f64;
            let a2 = all[1].amplitudes(w)[&2];
            let e2 = g / 4.0 * r(w - 1.0, g);
            assert!((a2 - e2).norm() < 1e-14);
            let a3 = all[2].amplitudes(w)[&1];
            let e3 = -g / 8.0 * (r(w - 1.0, g) * r(w - 2.0, g) + r(w - 1.0, g) * r(w, g) + r(w + 1.0, g) * r(w, g));
            assert!((a3 - e3).norm() < 1e-14, "w={w}: {a3} vs {e3}");
        }
    }

    #[test]
    fn first_only_drive_matches_toy_amplitude() {
        let (p, d) = setup(2);
        let toy = d.with_series(DriveSeries::FirstOnly);
        let g = p.gamma0();
        let all = build_all(&p, &toy, 2).unwrap();
        for &w in &[0.3, 0.9, 1.4] {
            let u = g * RationalKernel { gamma0: g }.eval(w - 1.0);
            assert!((all[1].amplitudes(w)[&2] - g / 4.0 * u).norm() < 1e-14);
        }
    }

    #[test]
    fn dump_is_json_array() {
        let (p, d) = setup(2);
        let v = dump_terms(&build_all(&p, &d, 2).unwrap());
        assert_eq!(v.as_array().unwrap().len(), 9);
        assert!(v[0]["prefactor"].is_string());
    }
}
