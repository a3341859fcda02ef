//! Finite-`tau` reference values obtained by integrating the recursion
//! literally, with exact Lorentzian drive transforms and no localization.
//!
//! The innermost kernel integral (the one inside `h^(2)`) is a rational
//! function of the integration variable and is done exactly by residues;
//! the next level and the outer spectral integral use adaptive quadrature.
//!
//! Everything is evaluated internally in units of `omega0`; `h^(j)` has
//! units of time and `N / tau` is dimensionless, which fixes the conversion.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveSeries;
use crate::error::{Error, Result};
use crate::params::NaturalParams;
use crate::quad::{integrate, integrate_real_line, QuadSpec};

/// Deepest order the oracle unrolls.
pub const ORACLE_MAX_ORDER: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue<T> {
    pub value: T,
    /// Estimated absolute error; inner integrations are charged at their
    /// converged tolerance.
    pub error: f64,
    pub evaluations: usize,
}

/// `F_k(x)` from `f_k(t) = (-1)^k 2^-k sum_j C(k, j) e^{-i (k - 2j) w0 t} e^{-k|t|/tau}`,
/// each exponential transforming to `2 (k/tau) / ((k/tau)^2 + (x - s)^2)`.
fn drive_transform(k: usize, tau: f64, x: f64) -> f64 {
    let w = k as f64 / tau;
    let mut binom = 1.0;
    let mut sum = 0.0;
    for j in 0..=k {
        let s = k as f64 - 2.0 * j as f64;
        sum += binom * 2.0 * w / (w * w + (x - s) * (x - s));
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * sum / (1u64 << k) as f64
}

fn kernel(xi: f64, g: f64) -> Complex64 {
    Complex64::new(0.0, xi) / Complex64::new(1.0, -xi * g)
}

fn kernel_c(z: Complex64, g: f64) -> Complex64 {
    Complex64::i() * z / (1.0 - Complex64::i() * z * g)
}

struct Ctx {
    /// `gamma0 omega0`, signed.
    g: f64,
    /// `omega0 tau`.
    tau: f64,
    series: DriveSeries,
    inner: QuadSpec,
    evaluations: RefCell<usize>,
    failure: RefCell<Option<Error>>,
}

impl Ctx {
    fn active(&self, k: usize) -> bool {
        match self.series {
            DriveSeries::Full => true,
            DriveSeries::FirstOnly => k == 1,
            DriveSeries::Null => false,
        }
    }

    fn fk(&self, k: usize, x: f64) -> f64 {
        if self.active(k) {
            drive_transform(k, self.tau, x)
        } else {
            0.0
        }
    }

    /// `int K(x) Lt(x; a, w) Lt(x; b, w) dx` with `Lt(x; c, w) = w / (w^2 + (x - c)^2)`,
    /// closed in the upper half plane.
    fn kernel_lorentz_pair(&self, a: f64, b: f64, w: f64) -> Complex64 {
        let g = self.g;
        let i = Complex64::i();
        let p = Complex64::new(a, w);
        let q = Complex64::new(b, w);
        let d = a - b;
        // (K(p) - K(q)) / (p - q) for the Mobius kernel, free of cancellation
        let slope = i / ((1.0 - i * p * g) * (1.0 - i * q * g));
        let sum = kernel_c(p, g) + kernel_c(q, g);
        let mut v = -PI * w * (2.0 * i * w * slope - sum) / (4.0 * w * w + d * d);
        if g < 0.0 {
            // the kernel pole -i/g sits in the upper half plane
            let x0 = Complex64::new(0.0, -1.0 / g);
            let lt = |c: f64| w / (w * w + (x0 - c) * (x0 - c));
            v -= 2.0 * PI / (g * g) * lt(a) * lt(b);
        }
        v
    }

    /// `h^(2)(w, xi)` with its single internal integral done by residues.
    fn h2_exact(&self, omega: f64, xi: f64) -> Complex64 {
        let g = self.g;
        let mut v = Complex64::new(self.fk(2, omega - xi), 0.0);
        if self.active(1) {
            let w = 1.0 / self.tau;
            let mut j = Complex64::new(0.0, 0.0);
            for s in [-1.0, 1.0] {
                for t in [-1.0, 1.0] {
                    j += self.kernel_lorentz_pair(omega - s, xi + t, w);
                }
            }
            v += j * (g / (2.0 * PI));
        }
        v * (g / (2.0 * PI) * xi)
    }

    /// `h^(j)(w, xi)`, the outermost internal integral by quadrature.
    fn h(&self, j: usize, omega: f64, xi: f64) -> Complex64 {
        let g = self.g;
        let direct = Complex64::new(g / (2.0 * PI) * self.fk(j, omega - xi) * xi, 0.0);
        if j == 1 {
            return direct;
        }
        let mut peaks = Vec::new();
        for k in 1..j {
            if !self.active(k) {
                continue;
            }
            let wk = k as f64 / self.tau;
            for s in (0..=k).map(|i| k as f64 - 2.0 * i as f64) {
                peaks.push((omega - s, wk));
            }
            let wi = (j - k) as f64 / self.tau;
            for m in 0..=(j - k) {
                peaks.push((xi + (j - k) as f64 - 2.0 * m as f64, wi));
            }
        }
        if peaks.is_empty() {
            return direct;
        }
        let lower = |k: usize, x1: f64| match k {
            1 => Complex64::new(g / (2.0 * PI) * self.fk(1, x1 - xi) * xi, 0.0),
            2 => self.h2_exact(x1, xi),
            _ => unreachable!("oracle depth is bounded"),
        };
        let integrand = |x1: f64| {
            let kx = kernel(x1, g);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 1..j {
                let f = self.fk(k, omega - x1);
                if f != 0.0 {
                    acc += kx * f * lower(j - k, x1);
                }
            }
            acc * (g / (2.0 * PI))
        };
        // the inner values only matter against the scale of h^(j) itself
        let scale = g.abs().powi(j as i32) * self.tau * (xi.abs() + 1.0);
        let spec = QuadSpec {
            abs_floor: self.inner.rel_tol * scale * 1e-2,
            ..self.inner
        };
        match integrate_real_line(integrand, &peaks, &spec) {
            Ok(r) => {
                *self.evaluations.borrow_mut() += r.evaluations;
                direct + r.value
            }
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                Complex64::new(f64::NAN, f64::NAN)
            }
        }
    }

    fn take_failure(&self) -> Result<()> {
        match self.failure.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn scaled_context(params: &NaturalParams, series: DriveSeries, quad: &QuadSpec) -> Result<Ctx> {
    quad.validate()?;
    let inner = QuadSpec {
        rel_tol: (quad.rel_tol * 1e-2).max(1e-13),
        tail_scale: None,
        ..*quad
    };
    Ok(Ctx {
        g: params.signed_gamma0() * params.omega0(),
        tau: params.omega0_tau(),
        series,
        inner,
        evaluations: RefCell::new(0),
        failure: RefCell::new(None),
    })
}

fn check_order(j: usize) -> Result<()> {
    if j == 0 || j > ORACLE_MAX_ORDER {
        return Err(Error::validation("order", format!("oracle supports 1..={ORACLE_MAX_ORDER}, got {j}")));
    }
    Ok(())
}

/// `G^(j)(w, xi)` at finite `tau`.
pub fn finite_tau_g(j: usize, omega: f64, xi: f64, params: &NaturalParams, quad: &QuadSpec) -> Result<OracleValue<Complex64>> {
    finite_tau_g_with(DriveSeries::Full, j, omega, xi, params, quad)
}

pub fn finite_tau_g_with(
    series: DriveSeries,
    j: usize,
    omega: f64,
    xi: f64,
    params: &NaturalParams,
    quad: &QuadSpec,
) -> Result<OracleValue<Complex64>> {
    check_order(j)?;
    let ctx = scaled_context(params, series, quad)?;
    let w0 = params.omega0();
    let (ws, xs) = (omega / w0, xi / w0);
    let h = ctx.h(j, ws, xs);
    ctx.take_failure()?;
    let root = Complex64::new(0.0, 2.0) * Complex64::new(ws / (1.0 + ws * ws * ctx.g * ctx.g), 0.0).sqrt();
    // h carries units of time, G of sqrt(time)
    let value = root * h / w0.sqrt();
    let error = ctx.inner.rel_tol * value.norm();
    let evaluations = *ctx.evaluations.borrow();
    Ok(OracleValue { value, error, evaluations })
}

/// Distance in peak widths below which a frequency counts as a band edge.
pub const BAND_EDGE_WIDTHS: f64 = 3.0;

/// `sum_{j + k <= N + 1} eps^{j+k} N_{jk}(w) / tau` at finite `tau`.
pub fn finite_tau_spectrum(omega: f64, params: &NaturalParams, n: usize, quad: &QuadSpec) -> Result<OracleValue<f64>> {
    finite_tau_spectrum_with(DriveSeries::Full, omega, params, n, quad)
}

pub fn finite_tau_spectrum_with(
    series: DriveSeries,
    omega: f64,
    params: &NaturalParams,
    n: usize,
    quad: &QuadSpec,
) -> Result<OracleValue<f64>> {
    check_order(n)?;
    let ctx = scaled_context(params, series, quad)?;
    let ws = omega / params.omega0();
    let edge = ws.round();
    if !(ws > 0.0) || (ws - edge).abs() < BAND_EDGE_WIDTHS * (n as f64) / ctx.tau {
        return Err(Error::validation(
            "omega",
            format!("{ws} omega0 is within {BAND_EDGE_WIDTHS} peak widths of a band edge"),
        ));
    }
    let g = ctx.g;
    let eps = params.epsilon();
    let outer = 4.0 * ws / (1.0 + ws * ws * g * g);
    let integrand = |xi: f64| {
        let hs: Vec<Complex64> = (1..=n).map(|j| ctx.h(j, ws, xi)).collect();
        let mut acc = 0.0;
        for j in 1..=n {
            for k in 1..=n {
                if j + k <= n + 1 {
                    acc += eps.powi((j + k) as i32) * (hs[j - 1].conj() * hs[k - 1]).re;
                }
            }
        }
        Complex64::new(outer * acc / (xi.abs() * (1.0 + xi * xi * g * g)), 0.0)
    };
    let mut peaks = Vec::new();
    for m in -(n as i32)..=(n as i32) {
        peaks.push((ws - m as f64, 1.0 / ctx.tau));
    }
    let spec = QuadSpec {
        tail_scale: None,
        ..*quad
    };
    let r = integrate(integrand, f64::NEG_INFINITY, 0.0, &peaks, &spec);
    ctx.take_failure()?;
    let r = r?;
    let value = r.value.re / ctx.tau;
    // inner integrals either meet their tolerance or fail; |h|^2 doubles it
    let error = r.error / ctx.tau + 2.0 * ctx.inner.rel_tol * value.abs();
    let evaluations = r.evaluations + *ctx.evaluations.borrow();
    Ok(OracleValue { value, error, evaluations })
}
