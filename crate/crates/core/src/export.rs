//! CSV output for simulation sweeps and optimal-parameter tables, and the
//! exponential fit of parameter curves.

use std::io::Write;

use crate::error::{Error, Result};
use crate::montecarlo::{Scheme, SweepRecord};
use crate::nq::NqParams;
use crate::optimize::OptimizationResult;
use crate::sqlc::SqlcParams;

pub const SWEEP_HEADER: [&str; 11] =
    ["snr_db", "rho_x", "scheme", "sdr_db", "sdr_se_db", "d1", "d2", "p1", "p2", "n_samples", "seed"];

pub const PARAM_HEADER: [&str; 15] = [
    "rho_x",
    "snr_db",
    "scheme",
    "delta",
    "c",
    "a",
    "alpha",
    "beta",
    "kappa",
    "xi",
    "d",
    "sdr_db",
    "p1",
    "p2",
    "converged",
];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn output_error(e: impl std::fmt::Display) -> Error {
    Error::Output(e.to_string())
}

/// Writes sweep records with the header [`SWEEP_HEADER`]. Floats use the
/// shortest representation that round-trips, so equal inputs give
/// byte-identical files.
pub fn write_sweep_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SWEEP_HEADER).map_err(output_error)?;
    for r in records {
        w.write_record([
            r.snr_db.to_string(),
            r.rho_x.to_string(),
            r.scheme.to_string(),
            r.sdr_db.to_string(),
            r.sdr_se_db.to_string(),
            r.d1.to_string(),
            r.d2.to_string(),
            r.measured_p1.to_string(),
            r.measured_p2.to_string(),
            r.n_samples.to_string(),
            r.seed.to_string(),
        ])
        .map_err(output_error)?;
    }
    w.flush().map_err(output_error)
}

/// One row of an optimal-parameter table. Fields that do not apply to the
/// scheme are `None` and written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRow {
    pub rho_x: f64,
    pub snr_db: f64,
    pub scheme: Scheme,
    pub delta: f64,
    pub c: Option<u32>,
    pub a: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub xi: Option<f64>,
    pub d: f64,
    pub sdr_db: f64,
    pub p1: f64,
    pub p2: f64,
    pub converged: bool,
}

impl ParamRow {
    pub fn nq(rho_x: f64, snr_db: f64, sigma_x2: f64, r: &OptimizationResult<NqParams<f64>>) -> Self {
        ParamRow {
            rho_x,
            snr_db,
            scheme: Scheme::Nq,
            delta: r.params.delta(),
            c: Some(r.params.c()),
            a: Some(r.params.a()),
            alpha: None,
            beta: None,
            kappa: None,
            xi: None,
            d: r.achieved_d,
            sdr_db: r.sdr_db(sigma_x2),
            p1: r.achieved_powers.0,
            p2: r.achieved_powers.1,
            converged: r.converged,
        }
    }

    pub fn sqlc(rho_x: f64, snr_db: f64, sigma_x2: f64, r: &OptimizationResult<SqlcParams<f64>>) -> Self {
        let p = &r.params;
        ParamRow {
            rho_x,
            snr_db,
            scheme: Scheme::Sqlc,
            delta: p.delta(),
            c: None,
            a: None,
            alpha: Some(p.alpha()),
            beta: Some(p.beta()),
            kappa: Some(p.kappa()),
            xi: Some(p.xi()),
            d: r.achieved_d,
            sdr_db: r.sdr_db(sigma_x2),
            p1: r.achieved_powers.0,
            p2: r.achieved_powers.1,
            converged: r.converged,
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes a parameter table keyed by `(rho_x, snr_db)`, header [`PARAM_HEADER`].
pub fn write_param_csv<W: Write>(out: W, rows: &[ParamRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(PARAM_HEADER).map_err(output_error)?;
    for r in rows {
        w.write_record([
            r.rho_x.to_string(),
            r.snr_db.to_string(),
            r.scheme.to_string(),
            r.delta.to_string(),
            opt(r.c),
            opt(r.a),
            opt(r.alpha),
            opt(r.beta),
            opt(r.kappa),
            opt(r.xi),
            r.d.to_string(),
            r.sdr_db.to_string(),
            r.p1.to_string(),
            r.p2.to_string(),
            r.converged.to_string(),
        ])
        .map_err(output_error)?;
    }
    w.flush().map_err(output_error)
}

/// `v(snr_db) ≈ A·exp(k·snr_db)`, fitted by least squares on `ln v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub ln_a: f64,
    pub k: f64,
    /// Root-mean-square residual of `ln v`.
    pub rms: f64,
}

impl ExponentialFit {
    pub fn fit(snr_db: &[f64], values: &[f64]) -> Result<Self> {
        if snr_db.len() != values.len() || snr_db.len() < 2 {
            return Err(Error::invalid("values", "need at least two (snr, value) pairs of equal length"));
        }
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("values", "exponential fit needs positive values"));
        }
        let n = snr_db.len() as f64;
        let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let mx = snr_db.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = snr_db.iter().map(|x| (x - mx) * (x - mx)).sum();
        if sxx == 0.0 {
            return Err(Error::invalid("snr_db", "fit needs at least two distinct SNR values"));
        }
        let sxy: f64 = snr_db.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let k = sxy / sxx;
        let ln_a = my - k * mx;
        let rms = (snr_db.iter().zip(&ys).map(|(x, y)| (y - ln_a - k * x).powi(2)).sum::<f64>() / n).sqrt();
        Ok(ExponentialFit { ln_a, k, rms })
    }

    pub fn eval(&self, snr_db: f64) -> f64 {
        (self.ln_a + self.k * snr_db).exp()
    }
}
