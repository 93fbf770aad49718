//! Parameter optimization under the average power constraint
//! `P1 + P2 ≤ 2P`, and the high-SNR closed forms for the SQLC.
//!
//! The objective is always the analytical distortion; Monte Carlo is only
//! used to validate the result.

mod nq;
pub mod simplex;
mod sqlc;

pub use self::nq::{optimize_nq, NqOptimizer, NqSearch};
pub use self::sqlc::{optimize_sqlc, optimize_sqlc_with, SqlcGrid};

use crate::error::{Error, Result};
use crate::model::DistortionReport;
use crate::sqlc::{theta_schedule, DEFAULT_WIDTH};

/// Outcome of one optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult<P> {
    pub params: P,
    pub report: DistortionReport<f64>,
    /// `(D1 + D2)/2` at `params`.
    pub achieved_d: f64,
    pub achieved_powers: (f64, f64),
    pub objective_evals: usize,
    pub converged: bool,
}

impl<P> OptimizationResult<P> {
    /// SDR in dB for a unit-variance source scaled by `sigma_x2`.
    pub fn sdr_db(&self, sigma_x2: f64) -> f64 {
        10.0 * (sigma_x2 / self.achieved_d).log10()
    }
}

fn reject_full_correlation(rho_x: f64) -> Result<()> {
    if rho_x >= 1.0 {
        Err(Error::invalid("rho_x", "high-SNR forms need rho_x < 1"))
    } else {
        Ok(())
    }
}

/// High-SNR optimum of `α²` for a unit-variance source, leading terms only:
/// `α² ≈ P·√(6ϑ·SNR(1 − ρx)) / (b·ϑ·SNR(1 − ρx))`.
pub fn high_snr_alpha_sq(snr: f64, rho_x: f64, p: f64) -> Result<f64> {
    reject_full_correlation(rho_x)?;
    let b = DEFAULT_WIDTH;
    let t = theta_schedule(rho_x);
    let g = t * snr * (1.0 - rho_x);
    Ok(p * (6.0 * g).sqrt() / (b * g))
}

/// Stationary point of `b²ϑα²(1 − ρx)/(3(2P − α²)) + σn²/α²` before the
/// constant terms are dropped.
pub fn high_snr_alpha_sq_exact(snr: f64, rho_x: f64, p: f64) -> Result<f64> {
    reject_full_correlation(rho_x)?;
    let b = DEFAULT_WIDTH;
    let g = theta_schedule(rho_x) * snr * (1.0 - rho_x);
    Ok(2.0 * p * (b * (6.0 * g).sqrt() - 3.0) / (2.0 * b * b * g - 3.0))
}

pub fn high_snr_alpha(snr: f64, rho_x: f64, p: f64) -> Result<f64> {
    high_snr_alpha_sq(snr, rho_x, p).map(f64::sqrt)
}

/// Asymptotic SQLC loss to the bound in dB, `10·log10(b√ϑ/√3)`.
///
/// The loss is a ratio of SDRs (power quantities), hence the factor 10.
pub fn high_snr_gap_db(rho_x: f64) -> Result<f64> {
    reject_full_correlation(rho_x)?;
    let ratio = DEFAULT_WIDTH * theta_schedule(rho_x).sqrt() / 3f64.sqrt();
    Ok(10.0 * ratio.log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_forms_agree_at_high_snr() {
        let a = high_snr_alpha_sq(1e6, 0.0, 1.0).unwrap();
        let b = high_snr_alpha_sq_exact(1e6, 0.0, 1.0).unwrap();
        assert!((a / b - 1.0).abs() < 0.02, "{a} {b}");
        assert!(high_snr_alpha_sq(1e12, 0.0, 1.0).unwrap() < 1e-5);
        assert!(high_snr_alpha_sq(1e3, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_alpha_is_stationary() {
        let (snr, rho, p) = (1e4, 0.3, 1.0);
        let g = theta_schedule(rho) * (1.0 - rho);
        let b = DEFAULT_WIDTH;
        let d = |a2: f64| b * b * g * a2 / (3.0 * (2.0 * p - a2)) + 1.0 / (snr * a2);
        let a2 = high_snr_alpha_sq_exact(snr, rho, p).unwrap();
        let h = a2 * 1e-4;
        assert!(((d(a2 + h) - d(a2 - h)) / (2.0 * h)).abs() < 1e-6 * d(a2) / a2);
    }

    #[test]
    fn gap_estimates() {
        let g0 = high_snr_gap_db(0.0).unwrap();
        let g95 = high_snr_gap_db(0.95).unwrap();
        assert!((g0 - 3.5).abs() < 0.25, "{g0}");
        assert!((g95 - 5.0).abs() < 0.25, "{g95}");
        assert!(high_snr_gap_db(1.0).is_err());
    }
}
