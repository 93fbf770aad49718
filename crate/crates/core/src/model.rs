//! Source and channel primitives.
//!
//! The source is a bivariate Gaussian `x_m = v + w_m` with a common component
//! `v` and independent private components `w_1`, `w_2` of equal variance. The
//! channel adds the two encoder outputs and white Gaussian noise.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scalar::Real;

/// Bivariate Gaussian source with equal marginal variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel<T> {
    sigma_x: T,
    rho_x: T,
}

impl<T: Real> SourceModel<T> {
    /// `sigma_x > 0`, `rho_x ∈ [0, 1]`. Negative correlation is rejected.
    pub fn new(sigma_x: T, rho_x: T) -> Result<Self> {
        if !(sigma_x > T::zero()) || !sigma_x.is_finite() {
            return Err(Error::invalid("sigma_x", format!("must be positive, got {sigma_x}")));
        }
        if !(rho_x >= T::zero() && rho_x <= T::one()) {
            return Err(Error::invalid("rho_x", format!("must lie in [0, 1], got {rho_x}")));
        }
        Ok(SourceModel { sigma_x, rho_x })
    }

    /// Unit-variance source with correlation `rho_x`.
    pub fn unit(rho_x: T) -> Result<Self> {
        Self::new(T::one(), rho_x)
    }

    pub fn sigma_x(&self) -> T {
        self.sigma_x
    }

    pub fn rho_x(&self) -> T {
        self.rho_x
    }

    pub fn sigma_x2(&self) -> T {
        self.sigma_x * self.sigma_x
    }

    /// Variance of the common component.
    pub fn sigma_v2(&self) -> T {
        self.rho_x * self.sigma_x2()
    }

    /// Variance of each private component.
    pub fn sigma_w2(&self) -> T {
        (T::one() - self.rho_x) * self.sigma_x2()
    }

    pub fn lambda1(&self) -> T {
        self.sigma_x2() * (T::one() + self.rho_x)
    }

    pub fn lambda2(&self) -> T {
        self.sigma_x2() * (T::one() - self.rho_x)
    }

    pub fn covariance(&self) -> [[T; 2]; 2] {
        let s2 = self.sigma_x2();
        let c = s2 * self.rho_x;
        [[s2, c], [c, s2]]
    }

    /// Standard deviation of `x_2` given `x_1`: `σx·√(1 − ρx²)`.
    pub fn conditional_std(&self) -> T {
        self.sigma_x * (T::one() - self.rho_x * self.rho_x).max(T::zero()).sqrt()
    }
}

/// Additive white Gaussian noise MAC with a per-encoder average power budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel<T> {
    sigma_n: T,
    power: T,
}

impl<T: Real> ChannelModel<T> {
    pub fn new(sigma_n: T, power: T) -> Result<Self> {
        if !(sigma_n > T::zero()) || !sigma_n.is_finite() {
            return Err(Error::invalid("sigma_n", format!("must be positive, got {sigma_n}")));
        }
        if !(power > T::zero()) || !power.is_finite() {
            return Err(Error::invalid("power", format!("must be positive, got {power}")));
        }
        Ok(ChannelModel { sigma_n, power })
    }

    /// Channel whose SNR `P/σn²` equals `snr_db` decibels.
    pub fn from_snr_db(snr_db: T, power: T) -> Result<Self> {
        let snr = T::lit(10.0).powf(snr_db / T::lit(10.0));
        Self::new((power / snr).sqrt(), power)
    }

    pub fn sigma_n(&self) -> T {
        self.sigma_n
    }

    pub fn sigma_n2(&self) -> T {
        self.sigma_n * self.sigma_n
    }

    pub fn power(&self) -> T {
        self.power
    }

    pub fn snr(&self) -> T {
        self.power / self.sigma_n2()
    }

    pub fn snr_db(&self) -> T {
        T::lit(10.0) * self.snr().log10()
    }

    /// Same power budget, different noise level.
    pub fn with_snr_db(&self, snr_db: T) -> Result<Self> {
        Self::from_snr_db(snr_db, self.power)
    }
}

/// Per-source mean squared errors with an optional named breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport<T> {
    pub d1: T,
    pub d2: T,
    /// Named contributions, e.g. `("eps_q_1", …)`. Order is stable.
    pub terms: Vec<(&'static str, T)>,
}

impl<T: Real> DistortionReport<T> {
    pub fn new(d1: T, d2: T) -> Self {
        DistortionReport { d1, d2, terms: Vec::new() }
    }

    pub fn with_terms(d1: T, d2: T, terms: Vec<(&'static str, T)>) -> Self {
        DistortionReport { d1, d2, terms }
    }

    /// Average distortion `(D1 + D2)/2`.
    pub fn d(&self) -> T {
        (self.d1 + self.d2) * T::half()
    }

    pub fn term(&self, name: &str) -> Option<T> {
        self.terms.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }

    pub fn sdr_db(&self, sigma_x2: T) -> Result<T> {
        sdr_db(sigma_x2, self.d())
    }
}

/// Draws one source pair `x_m = v + w_m`.
pub fn sample_source_pair<T: Real>(model: &SourceModel<T>, stream: &mut RandomStream) -> (T, T) {
    let v = T::lit(stream.standard_normal()) * model.sigma_v2().sqrt();
    let sw = model.sigma_w2().sqrt();
    let w1 = T::lit(stream.standard_normal()) * sw;
    let w2 = T::lit(stream.standard_normal()) * sw;
    (v + w1, v + w2)
}

/// Joint density of `(x1, x2)`.
pub fn joint_density<T: Real>(x1: T, x2: T, model: &SourceModel<T>) -> Result<T> {
    let rho = model.rho_x();
    if rho >= T::one() {
        return Err(Error::DegenerateCorrelation);
    }
    let s2 = model.sigma_x2();
    let one_m = T::one() - rho * rho;
    let quad = (x1 * x1 - T::two() * rho * x1 * x2 + x2 * x2) / (s2 * one_m);
    let norm = T::two() * T::PI() * s2 * one_m.sqrt();
    Ok((-quad * T::half()).exp() / norm)
}

/// Channel output `z = y1 + y2 + n`.
pub fn gmac_transmit<T: Real>(y1: T, y2: T, channel: &ChannelModel<T>, stream: &mut RandomStream) -> T {
    y1 + y2 + T::lit(stream.standard_normal()) * channel.sigma_n()
}

/// Signal-to-distortion ratio in decibels.
pub fn sdr_db<T: Real>(sigma_x2: T, d: T) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::NonPositiveDistortion(d.as_f64()));
    }
    Ok(T::lit(10.0) * (sigma_x2 / d).log10())
}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}
