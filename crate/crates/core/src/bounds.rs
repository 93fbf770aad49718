//! Performance upper bound for the symmetric case and reference curves.
//!
//! All SDR values here are linear ratios `σx²/D`. Callers with asymmetric
//! encoder powers pass the average `P = (P1 + P2)/2`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which branch of the two-piece bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundBranch {
    /// `P/σn² ≤ ρx/(1 − ρx²)`: uncoded transmission is optimal.
    LowSnr,
    HighSnr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint<T> {
    pub snr: T,
    pub rho_x: T,
    pub sdr_linear: T,
    pub branch: BoundBranch,
}

impl<T: Real> BoundPoint<T> {
    pub fn sdr_db(&self) -> T {
        T::lit(10.0) * self.sdr_linear.log10()
    }
}

/// SNR at which the bound switches branch, `ρx/(1 − ρx²)`.
pub fn crossover_snr<T: Real>(rho_x: T) -> Result<T> {
    if rho_x >= T::one() {
        return Err(Error::InfiniteCrossover);
    }
    Ok(rho_x / (T::one() - rho_x * rho_x))
}

/// Low-SNR branch; also the exact SDR of uncoded transmission.
fn low_branch<T: Real>(p: T, sigma_n2: T, rho: T) -> T {
    (T::two() * p * (T::one() + rho) + sigma_n2) / (p * (T::one() - rho * rho) + sigma_n2)
}

fn high_branch<T: Real>(p: T, sigma_n2: T, rho: T) -> T {
    ((T::two() * p * (T::one() + rho) + sigma_n2) / (sigma_n2 * (T::one() - rho * rho))).sqrt()
}

/// Upper bound on the achievable SDR with average power `p` per encoder.
pub fn opta_sdr<T: Real>(p: T, sigma_n2: T, rho_x: T) -> BoundPoint<T> {
    let snr = p / sigma_n2;
    let branch = match crossover_snr(rho_x) {
        Ok(cross) if snr > cross => BoundBranch::HighSnr,
        _ => BoundBranch::LowSnr,
    };
    let sdr_linear = match branch {
        BoundBranch::LowSnr => low_branch(p, sigma_n2, rho_x),
        BoundBranch::HighSnr => high_branch(p, sigma_n2, rho_x),
    };
    BoundPoint { snr, rho_x, sdr_linear, branch }
}

/// Bound evaluated at `snr_db` with unit power.
pub fn opta_sdr_db<T: Real>(snr_db: T, rho_x: T) -> T {
    let snr = T::lit(10.0).powf(snr_db / T::lit(10.0));
    opta_sdr(T::one(), T::one() / snr, rho_x).sdr_db()
}

/// High-SNR approximation `√(2·SNR/(1 − ρx))` of the bound.
pub fn high_snr_bound_sdr<T: Real>(snr: T, rho_x: T) -> Result<T> {
    if rho_x >= T::one() {
        return Err(Error::invalid("rho_x", "high-SNR approximation needs rho_x < 1"));
    }
    Ok((T::two() * snr / (T::one() - rho_x)).sqrt())
}

/// SDR of uncoded transmission: both encoders send `(√P/σx)·x_m`, each source
/// is estimated by the scalar MMSE estimator `E{x_m | z}`.
///
/// With gain `g = √P/σx`, `Cov(x_m, z) = g·σx²(1 + ρx)` and
/// `Var(z) = 2g²σx²(1 + ρx) + σn²`, so
/// `D/σx² = (P(1 − ρx²) + σn²)/(2P(1 + ρx) + σn²)`.
pub fn uncoded_sdr<T: Real>(p: T, sigma_n2: T, rho_x: T) -> T {
    low_branch(p, sigma_n2, rho_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn closed_form_substitutions() {
        for k in 0..100 {
            let snr = 10f64.powf(-2.0 + 0.07 * k as f64);
            let s0 = opta_sdr(1.0, 1.0 / snr, 0.0).sdr_linear;
            assert!(rel(s0, (1.0 + 2.0 * snr).sqrt()) < 1e-12);
            let s1 = opta_sdr(1.0, 1.0 / snr, 1.0).sdr_linear;
            assert!(rel(s1, 1.0 + 4.0 * snr) < 1e-12);
        }
    }

    #[test]
    fn branches_meet_at_crossover() {
        for &rho in &[0.3, 0.5, 0.8, 0.95] {
            let cross = crossover_snr(rho).unwrap();
            let sn2 = 1.0 / cross;
            assert!(rel(low_branch(1.0, sn2, rho), high_branch(1.0, sn2, rho)) < 1e-12);
            assert_eq!(opta_sdr(1.0, sn2, rho).branch, BoundBranch::LowSnr);
            assert_eq!(opta_sdr(1.0, sn2 * 0.999, rho).branch, BoundBranch::HighSnr);
        }
    }

    #[test]
    fn crossover_values() {
        assert_eq!(crossover_snr(0.0_f64).unwrap(), 0.0);
        assert!((crossover_snr(0.5_f64).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((crossover_snr(0.95_f64).unwrap() - 0.95 / 0.0975).abs() < 1e-12);
        assert_eq!(crossover_snr(1.0_f64), Err(Error::InfiniteCrossover));
    }

    #[test]
    fn high_snr_approximation() {
        let approx = high_snr_bound_sdr(1e4_f64, 0.0).unwrap();
        assert!(rel(approx, opta_sdr(1.0, 1e-4, 0.0).sdr_linear) < 0.01);
        assert!((high_snr_bound_sdr(2.0_f64, 0.0).unwrap() - 2.0).abs() < 1e-15);
        let a = high_snr_bound_sdr(50.0_f64, 0.0).unwrap();
        let b = high_snr_bound_sdr(50.0_f64, 0.75).unwrap();
        assert!(rel(b / a, 2.0) < 1e-14);
        assert!(high_snr_bound_sdr(1.0_f64, 1.0).is_err());
        for &rho in &[0.0, 0.5, 0.9] {
            let r = high_snr_bound_sdr(1e9_f64, rho).unwrap() / opta_sdr(1.0, 1e-9, rho).sdr_linear;
            assert!((r - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn uncoded_matches_low_branch_and_stays_below() {
        let cross = crossover_snr(0.5_f64).unwrap();
        assert!(rel(uncoded_sdr(1.0, 1.0 / cross, 0.5), opta_sdr(1.0, 1.0 / cross, 0.5).sdr_linear) < 1e-9);
        for k in 0..50 {
            let snr = 0.5 * k as f64 + 0.1;
            assert!(rel(uncoded_sdr(1.0, 1.0 / snr, 1.0), 1.0 + 4.0 * snr) < 1e-12);
        }
        for k in 1..200 {
            let snr = 0.05 * k as f64;
            let (u, b) = (uncoded_sdr(1.0, 1.0 / snr, 0.5), opta_sdr(1.0, 1.0 / snr, 0.5).sdr_linear);
            if snr <= cross {
                assert!(rel(u, b) < 1e-12);
            } else {
                assert!(u < b);
            }
        }
    }

    #[test]
    fn bound_monotonicity() {
        for &rho in &[0.0, 0.3, 0.7, 0.95, 1.0] {
            let mut prev = 0.0;
            for k in 0..200 {
                let snr = 10f64.powf(-3.0 + 0.04 * k as f64);
                let s = opta_sdr(1.0, 1.0 / snr, rho).sdr_linear;
                assert!(s > prev);
                prev = s;
            }
        }
        for k in 0..40 {
            let snr = 10f64.powf(-2.0 + 0.15 * k as f64);
            let mut prev = 0.0;
            for j in 0..=20 {
                let s = opta_sdr(1.0, 1.0 / snr, j as f64 / 20.0).sdr_linear;
                assert!(s >= prev * (1.0 - 1e-14));
                prev = s;
            }
        }
    }

    #[test]
    fn f32_evaluation() {
        let s = opta_sdr(1.0_f32, 0.01, 0.0).sdr_linear;
        assert!((s - 201f32.sqrt()).abs() < 1e-4);
    }
}
