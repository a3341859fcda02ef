//! Normalized Lorentzian lineshapes and the exact identities between them.
//!
//! `L(x; c, w) = (1/pi) w / ((x - c)^2 + w^2)` integrates to one, so every
//! integral of a peaked object against a slowly varying function reduces, in
//! the narrow-width limit, to a sum of coefficients weighted by the function's
//! values at the peak centers.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorentzian {
    center: f64,
    width: f64,
}

impl Lorentzian {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::validation("center", format!("not finite: {center}")));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::validation(
                "width",
                format!("must be finite and positive, got {width}"),
            ));
        }
        Ok(Lorentzian { center, width })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        self.width / (PI * (d * d + self.width * self.width))
    }

    /// Mass of the lineshape on `[a, b]`; either end may be infinite.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let t = |x: f64| ((x - self.center) / self.width).atan();
        (t(b) - t(a)) / PI
    }

    /// `L(-x; c, w) = L(x; -c, w)`.
    pub fn reflected(&self) -> Self {
        Lorentzian {
            center: -self.center,
            width: self.width,
        }
    }

    /// Lineshape of `x - shift` seen as a function of `x`.
    pub fn shifted(&self, shift: f64) -> Self {
        Lorentzian {
            center: self.center + shift,
            width: self.width,
        }
    }
}

/// `int L_a(x) L_b(x) dx = L(c_a; c_b, w_a + w_b)`.
pub fn product_integral(a: &Lorentzian, b: &Lorentzian) -> f64 {
    let w = a.width + b.width;
    let d = a.center - b.center;
    w / (PI * (d * d + w * w))
}

/// `(L_a * L_b)(x) = L(x; c_a + c_b, w_a + w_b)`.
pub fn convolve(a: &Lorentzian, b: &Lorentzian) -> Lorentzian {
    Lorentzian {
        center: a.center + b.center,
        width: a.width + b.width,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakedTerm {
    pub coeff: Complex64,
    pub peak: Lorentzian,
}

impl PeakedTerm {
    pub fn new(coeff: Complex64, peak: Lorentzian) -> Result<Self> {
        if !(coeff.re.is_finite() && coeff.im.is_finite()) {
            return Err(Error::validation("coeff", "not finite"));
        }
        Ok(PeakedTerm { coeff, peak })
    }
}

/// Finite linear combination of Lorentzians.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakedSum {
    terms: Vec<PeakedTerm>,
}

impl PeakedSum {
    pub fn new(terms: Vec<PeakedTerm>) -> Self {
        PeakedSum { terms }
    }

    pub fn push(&mut self, term: PeakedTerm) {
        self.terms.push(term);
    }

    pub fn terms(&self) -> &[PeakedTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Exact integral over the real line: the sum of coefficients.
    pub fn total_weight(&self) -> Complex64 {
        self.terms.iter().map(|t| t.coeff).sum()
    }

    pub fn narrowest_width(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|t| t.peak.width)
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        eval(self, x)
    }
}

pub fn eval(s: &PeakedSum, x: f64) -> Complex64 {
    s.terms.iter().map(|t| t.coeff * t.peak.eval(x)).sum()
}

/// A function of one real variable that is analytic on the real axis.
pub trait SmoothFn {
    fn value(&self, x: f64) -> Complex64;
}

impl<F> SmoothFn for F
where
    F: Fn(f64) -> Complex64,
{
    fn value(&self, x: f64) -> Complex64 {
        self(x)
    }
}

/// One tenth of the narrowest width involved.
pub fn default_coincidence_tol(s: &PeakedSum) -> f64 {
    s.narrowest_width().map_or(0.0, |w| w / 10.0)
}

/// Narrow-peak limit of `int A(x) B(x) dx` with `A = smooth` and `B = peaked`.
///
/// Each distinct peak location contributes `A(center)` times the total mass
/// of the terms sitting there. Centers closer than `coincidence_tol` count as
/// one location.
pub fn localize<S: SmoothFn + ?Sized>(
    smooth: &S,
    peaked: &PeakedSum,
    coincidence_tol: f64,
) -> Result<Complex64> {
    if peaked.is_empty() {
        return Err(Error::validation("peaked", "empty peaked factor"));
    }
    if !(coincidence_tol >= 0.0) {
        return Err(Error::validation(
            "coincidence_tol",
            format!("must be nonnegative, got {coincidence_tol}"),
        ));
    }
    let mut terms: Vec<&PeakedTerm> = peaked.terms.iter().collect();
    terms.sort_by(|a, b| a.peak.center.total_cmp(&b.peak.center));

    let mut total = Complex64::new(0.0, 0.0);
    let mut i = 0;
    while i < terms.len() {
        let anchor = terms[i].peak.center;
        let mut weight = Complex64::new(0.0, 0.0);
        while i < terms.len() && terms[i].peak.center - anchor <= coincidence_tol {
            weight += terms[i].coeff;
            i += 1;
        }
        let a = smooth.value(anchor);
        if !(a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::SingularEvaluation {
                omega: anchor,
                detail: "smooth factor is not finite at a peak center".into(),
            });
        }
        total += a * weight;
    }
    Ok(total)
}

/// Product of two lineshapes with a coefficient, integrated later.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakPair {
    pub coeff: Complex64,
    pub left: Lorentzian,
    pub right: Lorentzian,
}

impl PeakPair {
    /// Exact `coeff * int L_left L_right`.
    pub fn integral(&self) -> Complex64 {
        self.coeff * product_integral(&self.left, &self.right)
    }

    pub fn is_coincident(&self, tol: f64) -> bool {
        (self.left.center - self.right.center).abs() <= tol
    }
}

/// Sum of pairwise products `sum_ij a_i b_j L_i L_j`, kept unexpanded so
/// that each pair can be integrated exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakedProduct {
    pairs: Vec<PeakPair>,
}

impl PeakedProduct {
    pub fn new(pairs: Vec<PeakPair>) -> Self {
        PeakedProduct { pairs }
    }

    /// All pairs `a_i * b_j`.
    pub fn of(a: &PeakedSum, b: &PeakedSum) -> Self {
        let mut pairs = Vec::with_capacity(a.len() * b.len());
        for ta in &a.terms {
            for tb in &b.terms {
                pairs.push(PeakPair {
                    coeff: ta.coeff * tb.coeff,
                    left: ta.peak,
                    right: tb.peak,
                });
            }
        }
        PeakedProduct { pairs }
    }

    pub fn pairs(&self) -> &[PeakPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn narrowest_width(&self) -> Option<f64> {
        self.pairs
            .iter()
            .flat_map(|p| [p.left.width, p.right.width])
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn default_coincidence_tol(&self) -> f64 {
        self.narrowest_width().map_or(0.0, |w| w / 10.0)
    }

    /// Largest `|integral|` among pairs with coincident centers.
    pub fn max_coincident_integral(&self) -> f64 {
        let tol = self.default_coincidence_tol();
        self.pairs
            .iter()
            .filter(|q| q.is_coincident(tol))
            .map(|q| q.integral().norm())
            .fold(0.0, f64::max)
    }

    /// Exact integral over the real line.
    pub fn integral(&self) -> Complex64 {
        self.pairs.iter().map(PeakPair::integral).sum()
    }

    /// Narrow-peak limit of `int A(x) sum_ij c_ij L_i(x) L_j(x) dx`.
    ///
    /// Coincident pairs sample `A` once at their common center. A pair with
    /// separated centers samples `A` at both centers, each weighted by the
    /// share of the overlap sitting there (the other peak's width).
    pub fn localize<S: SmoothFn + ?Sized>(&self, smooth: &S, coincidence_tol: f64) -> Result<Complex64> {
        let sample = |x: f64| -> Result<Complex64> {
            let a = smooth.value(x);
            if a.re.is_finite() && a.im.is_finite() {
                Ok(a)
            } else {
                Err(Error::SingularEvaluation {
                    omega: x,
                    detail: "smooth factor is not finite at a peak center".into(),
                })
            }
        };
        let mut total = Complex64::new(0.0, 0.0);
        for p in &self.pairs {
            let a = if p.is_coincident(coincidence_tol) {
                sample(p.left.center)?
            } else {
                let (wl, wr) = (p.left.width, p.right.width);
                (sample(p.left.center)? * wr + sample(p.right.center)? * wl) / (wl + wr)
            };
            total += a * p.integral();
        }
        Ok(total)
    }
}

/// Remove pairs whose centers are separated and whose exact integral is at
/// most `rel_cut` times the largest coincident-pair integral.
///
/// For widths of order `1/tau` and separations of order `omega0`, a
/// separated pair is suppressed relative to a coincident one by
/// `(w_a + w_b)^2 / d^2`, i.e. by `(omega0 tau)^-2`.
pub fn drop_subleading(p: &PeakedProduct, rel_cut: f64) -> PeakedProduct {
    if rel_cut <= 0.0 || p.len() <= 1 {
        return p.clone();
    }
    drop_below(p, rel_cut, p.max_coincident_integral())
}

/// Like [`drop_subleading`] but against an externally supplied reference
/// magnitude, for products that are parts of a larger sum.
pub fn drop_below(p: &PeakedProduct, rel_cut: f64, reference: f64) -> PeakedProduct {
    if rel_cut <= 0.0 {
        return p.clone();
    }
    let tol = p.default_coincidence_tol();
    let pairs = p
        .pairs
        .iter()
        .filter(|q| q.is_coincident(tol) || q.integral().norm() > rel_cut * reference)
        .copied()
        .collect();
    PeakedProduct { pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_real_line, QuadSpec};
    use proptest::prelude::*;

    fn lz(c: f64, w: f64) -> Lorentzian {
        Lorentzian::new(c, w).unwrap()
    }

    fn one(c: f64, w: f64, coeff: f64) -> PeakedSum {
        PeakedSum::new(vec![PeakedTerm::new(Complex64::new(coeff, 0.0), lz(c, w)).unwrap()])
    }

    fn tight() -> QuadSpec {
        QuadSpec {
            rel_tol: 1e-12,
            abs_floor: 1e-300,
            ..QuadSpec::default()
        }
    }

    #[test]
    fn rejects_bad_width() {
        assert!(Lorentzian::new(0.0, 0.0).is_err());
        assert!(Lorentzian::new(0.0, -1.0).is_err());
        assert!(Lorentzian::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn eval_cases() {
        let s = one(0.0, 1.0, 1.0);
        assert!((eval(&s, 0.0).re - 1.0 / PI).abs() < 1e-16);
        assert_eq!(eval(&PeakedSum::default(), 3.0), Complex64::new(0.0, 0.0));
        let mut two = s.clone();
        two.push(s.terms()[0]);
        assert!((eval(&two, 0.7) - 2.0 * eval(&s, 0.7)).norm() < 1e-16);
    }

    #[test]
    fn product_integral_cases() {
        assert!((product_integral(&lz(0.0, 1.0), &lz(0.0, 1.0)) - 1.0 / (2.0 * PI)).abs() < 1e-16);
        assert!((product_integral(&lz(0.0, 1.0), &lz(3.0, 1.0)) - 2.0 / (13.0 * PI)).abs() < 1e-16);
        assert!(product_integral(&lz(0.0, 1.0), &lz(1e8, 1.0)) < 1e-16);
        // quadrature oracle for the separated case
        let q = integrate_real_line(
            |x| Complex64::new(lz(0.0, 1.0).eval(x) * lz(3.0, 1.0).eval(x), 0.0),
            &[(0.0, 1.0), (3.0, 1.0)],
            &tight(),
        )
        .unwrap();
        assert!((q.value.re - 2.0 / (13.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn convolve_cases() {
        assert_eq!(convolve(&lz(0.0, 1.0), &lz(0.0, 1.0)), lz(0.0, 2.0));
        assert_eq!(convolve(&lz(1.5, 0.5), &lz(0.0, 0.25)), lz(1.5, 0.75));
        let (a, b) = (lz(0.3, 0.2), lz(-1.1, 0.5));
        let c = convolve(&a, &b);
        for x in [-2.0, -0.8, 0.0, 0.4, 3.0] {
            let q = integrate_real_line(
                |y| Complex64::new(a.eval(y) * b.eval(x - y), 0.0),
                &[(a.center(), a.width()), (x - b.center(), b.width())],
                &tight(),
            )
            .unwrap();
            assert!((q.value.re - c.eval(x)).abs() < 1e-8 * c.eval(x), "{x}");
        }
    }

    #[test]
    fn localize_cases() {
        let s = one(5.0, 0.3, 3.0);
        let unit = |_: f64| Complex64::new(1.0, 0.0);
        assert!((localize(&unit, &s, 0.0).unwrap().re - 3.0).abs() < 1e-15);
        let ident = |x: f64| Complex64::new(x, 0.0);
        assert!((localize(&ident, &one(2.0, 0.1, 1.0), 0.0).unwrap().re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn localize_matches_quadrature_at_small_width() {
        let w = 0.01;
        let mut s = one(1.0, w, 1.0);
        s.push(PeakedTerm::new(Complex64::new(1.0, 0.0), lz(-1.0, w)).unwrap());
        let sq = |x: f64| Complex64::new(x * x, 0.0);
        let local = localize(&sq, &s, default_coincidence_tol(&s)).unwrap();
        assert!((local.re - 2.0).abs() < 1e-15);
        // x^2 against a Lorentzian diverges, so the oracle uses a smooth
        // function with the same local behaviour: x^2 / (1 + x^2 / 100).
        let soft = |x: f64| x * x / (1.0 + x * x / 100.0);
        let q = integrate_real_line(
            |x| Complex64::new(soft(x) * eval(&s, x).re, 0.0),
            &[(1.0, w), (-1.0, w)],
            &tight(),
        )
        .unwrap();
        let local_soft = 2.0 * soft(1.0);
        // deviation is O(w) from the algebraic tails of the Lorentzian
        assert!((q.value.re - local_soft).abs() < 20.0 * w, "{}", q.value.re);
    }

    #[test]
    fn product_localize_splits_separated_pairs_by_width() {
        let (a, b) = (lz(0.0, 1e-3), lz(1.0, 3e-3));
        let p = PeakedProduct::new(vec![PeakPair { coeff: Complex64::new(1.0, 0.0), left: a, right: b }]);
        let smooth = |x: f64| Complex64::new(1.0 + 2.0 * x, 0.0);
        let local = p.localize(&smooth, p.default_coincidence_tol()).unwrap();
        let spec = QuadSpec { rel_tol: 1e-10, abs_floor: 1e-300, ..QuadSpec::default() };
        let num = integrate_real_line(|x| smooth(x) * a.eval(x) * b.eval(x), &[(0.0, 1e-3), (1.0, 3e-3)], &spec)
            .unwrap()
            .value;
        assert!((local - num).norm() < 1e-2 * num.norm(), "{local} vs {num}");
    }

    #[test]
    fn localize_rejects_singular_smooth() {
        let s = one(0.0, 1.0, 1.0);
        let bad = |x: f64| Complex64::new(1.0 / x, 0.0);
        assert!(matches!(
            localize(&bad, &s, 0.0),
            Err(Error::SingularEvaluation { .. })
        ));
    }

    #[test]
    fn localize_merges_coincident_centers() {
        let mut s = one(1.0, 0.1, 2.0);
        s.push(PeakedTerm::new(Complex64::new(3.0, 0.0), lz(1.0 + 1e-9, 0.1)).unwrap());
        let counter = std::cell::Cell::new(0);
        let f = |x: f64| {
            counter.set(counter.get() + 1);
            Complex64::new(x, 0.0)
        };
        let v = localize(&f, &s, default_coincidence_tol(&s)).unwrap();
        assert_eq!(counter.get(), 1);
        assert!((v.re - 5.0).abs() < 1e-12);
    }

    #[test]
    fn drop_subleading_cases() {
        let omega0 = 1.0;
        let tau = 1000.0;
        let w = 1.0 / tau;
        let mut s = one(omega0, w, 1.0);
        s.push(PeakedTerm::new(Complex64::new(1.0, 0.0), lz(0.0, w)).unwrap());
        let p = PeakedProduct::of(&s, &s);
        assert_eq!(p.len(), 4);

        let tol = p.default_coincidence_tol();
        let same: f64 = p.pairs().iter().filter(|q| q.is_coincident(tol)).map(|q| q.integral().re).sum::<f64>() / 2.0;
        let cross: f64 = p.pairs().iter().filter(|q| !q.is_coincident(tol)).map(|q| q.integral().re).sum();
        let expected = 2.0 * (2.0 / (omega0 * tau)).powi(2);
        assert!((cross / same - expected).abs() < 1e-5 * expected);

        let dropped = drop_subleading(&p, 1e-3);
        assert_eq!(dropped.len(), 2);
        assert!(dropped.pairs().iter().all(|q| q.is_coincident(tol)));
        assert_eq!(drop_subleading(&p, 0.0), p);
        assert_eq!(drop_subleading(&p, 1e-9), p);

        let single = PeakedProduct::of(&one(0.0, w, 1.0), &one(1.0, w, 1.0));
        assert_eq!(drop_subleading(&single, 0.5), single);
    }

    proptest! {
        #[test]
        fn product_integral_symmetric(ca in -5.0f64..5.0, cb in -5.0f64..5.0, wa in 1e-3f64..2.0, wb in 1e-3f64..2.0) {
            let (a, b) = (lz(ca, wa), lz(cb, wb));
            prop_assert_eq!(product_integral(&a, &b), product_integral(&b, &a));
            let self_overlap = 1.0 / (2.0 * PI * wa);
            prop_assert!((product_integral(&a, &a) - self_overlap).abs() <= 4.0 * f64::EPSILON * self_overlap);
        }

        #[test]
        fn convolve_commutative_associative(c in proptest::collection::vec(-4i32..4, 3), w in proptest::collection::vec(1u32..8, 3)) {
            // dyadic widths and integer centers keep the arithmetic exact
            let l: Vec<_> = (0..3).map(|i| lz(c[i] as f64, w[i] as f64 / 8.0)).collect();
            prop_assert_eq!(convolve(&l[0], &l[1]), convolve(&l[1], &l[0]));
            prop_assert_eq!(convolve(&convolve(&l[0], &l[1]), &l[2]), convolve(&l[0], &convolve(&l[1], &l[2])));
        }

        #[test]
        fn localize_unit_is_coefficient_sum(
            centers in proptest::collection::vec(-10.0f64..10.0, 1..6),
            widths in proptest::collection::vec(1e-4f64..1.0, 6),
            coeffs in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let s = PeakedSum::new(centers.iter().enumerate().map(|(i, &c)| {
                PeakedTerm::new(Complex64::new(coeffs[i], -coeffs[i] / 2.0), lz(c, widths[i])).unwrap()
            }).collect());
            let unit = |_: f64| Complex64::new(1.0, 0.0);
            let v = localize(&unit, &s, default_coincidence_tol(&s)).unwrap();
            prop_assert!((v - s.total_weight()).norm() <= 1e-12 * (1.0 + s.total_weight().norm()));
        }

        #[test]
        fn normalization_mass(c in -3.0f64..3.0, w in 1e-3f64..3.0) {
            let l = lz(c, w);
            let m = l.mass_between(c - 1e4 * w, c + 1e4 * w);
            prop_assert!(m >= 1.0 - 1e-3 && m <= 1.0);
        }
    }
}
