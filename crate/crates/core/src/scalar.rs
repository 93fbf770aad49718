//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All codec, bound and quadrature code is written against [`Real`], which is
//! implemented for `f32` and `f64`. The Gaussian special functions route
//! through `libm` so both precisions get a correctly rounded `erfc`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        // f32 and f64 both accept every finite f64 (f32 rounds)
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf<T: Real>(t: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::half();
    inv_sqrt_2pi * (-(t * t) * T::half()).exp()
}

/// Standard normal distribution function `Φ(t)`.
#[inline]
pub fn normal_cdf<T: Real>(t: T) -> T {
    T::half() * (-t * T::FRAC_1_SQRT_2()).erfc()
}

/// Standard normal upper tail `Q(t) = 1 − Φ(t)`, accurate deep into the tail.
#[inline]
pub fn normal_sf<T: Real>(t: T) -> T {
    T::half() * (t * T::FRAC_1_SQRT_2()).erfc()
}

/// `Φ(b) − Φ(a)` for `a ≤ b`, evaluated on the side of the origin that avoids
/// cancellation.
#[inline]
pub fn normal_mass<T: Real>(a: T, b: T) -> T {
    if a >= T::zero() {
        normal_sf(a) - normal_sf(b)
    } else if b <= T::zero() {
        normal_cdf(b) - normal_cdf(a)
    } else {
        T::one() - normal_sf(b) - normal_cdf(a)
    }
}

/// Gaussian density with mean zero and standard deviation `sigma`.
#[inline]
pub fn gaussian_pdf<T: Real>(x: T, sigma: T) -> T {
    normal_pdf(x / sigma) / sigma
}

/// Round half away from zero, returned as an integer index.
#[inline]
pub fn round_index<T: Real>(x: T) -> i64 {
    x.round().to_i64().unwrap_or(if x > T::zero() { i64::MAX } else { i64::MIN })
}

/// Normalized boundary `t` with its density and the tail on the near side of
/// zero, so that masses between boundaries never cancel catastrophically.
#[derive(Clone, Copy)]
pub(crate) struct Edge<T> {
    pub t: T,
    pub pdf: T,
    pub tail: T,
}

impl<T: Real> Edge<T> {
    pub fn new(t: T) -> Self {
        let tail = if t <= T::zero() { normal_cdf(t) } else { normal_sf(t) };
        Edge { t, pdf: normal_pdf(t), tail }
    }
}

pub(crate) fn edge_mass<T: Real>(lo: &Edge<T>, hi: &Edge<T>) -> T {
    if lo.t >= T::zero() {
        lo.tail - hi.tail
    } else if hi.t <= T::zero() {
        hi.tail - lo.tail
    } else {
        T::one() - lo.tail - hi.tail
    }
}

/// Mass, first and second moment of `u = y − centre` for `y ~ N(μ, s²)`
/// restricted to the cell between `lo` and `hi`, where `off = μ − centre`.
#[inline]
pub(crate) fn interval_moments<T: Real>(off: T, s: T, lo: &Edge<T>, hi: &Edge<T>) -> (T, T, T) {
    let p = edge_mass(lo, hi);
    let dphi = lo.pdf - hi.pdf;
    let m1 = off * p + s * dphi;
    let m2 = off * off * p + T::two() * off * s * dphi + s * s * (p + lo.t * lo.pdf - hi.t * hi.pdf);
    (p, m1, m2)
}

/// Neumaier-compensated running sum in `f64`.
///
/// Monte Carlo accumulators use this regardless of the scalar type so that
/// long runs at high SDR do not lose the small error terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_functions_match_known_values() {
        assert!((normal_cdf(0.0_f64) - 0.5).abs() < 1e-16);
        assert!((normal_sf(1.0_f64) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((normal_pdf(0.0_f64) - 0.398_942_280_401_432_7).abs() < 1e-16);
        // deep tail stays relative-accurate
        let q8 = normal_sf(8.0_f64);
        assert!((q8 / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_mass_is_consistent_on_every_side() {
        for &(a, b) in &[(-3.0_f64, -1.0), (-1.0, 2.0), (1.0, 4.0), (5.0, 9.0)] {
            let direct = normal_cdf(b) - normal_cdf(a);
            assert!((normal_mass(a, b) - direct).abs() < 1e-15);
        }
        assert!(normal_mass(9.0_f64, 10.0) > 0.0);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_index(0.5_f64), 1);
        assert_eq!(round_index(-0.5_f64), -1);
        assert_eq!(round_index(2.4_f32), 2);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn f32_special_functions() {
        assert!((normal_sf(1.0_f32) - 0.158_655_25).abs() < 1e-6);
    }
}
