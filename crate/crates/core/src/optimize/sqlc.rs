use rayon::prelude::*;

use super::simplex::{nelder_mead, SimplexOptions};
use super::OptimizationResult;
use crate::error::{Error, Result};
use crate::model::{ChannelModel, DistortionReport, SourceModel};
use crate::sqlc::{
    check_separability, clipped_power, distortion_with_moments, midrise_moments, optimal_beta, sqlc_distortion,
    sqlc_power, Geometry, SqlcParams,
};

/// Coarse search grid. `α` bounds are in units of `√P/σx`, `u = Δ/(ξσx)` is
/// the step relative to the scaled source and `κ` bounds are in units of `σx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlcGrid {
    pub alpha: (f64, f64, usize),
    pub u: (f64, f64, usize),
    pub kappa: (f64, f64, usize),
    pub restarts: usize,
    pub simplex: SimplexOptions,
}

impl Default for SqlcGrid {
    fn default() -> Self {
        SqlcGrid {
            alpha: (1e-3, 1.0, 64),
            u: (0.01, 2.0, 64),
            kappa: (1.0, 6.0, 32),
            restarts: 3,
            simplex: SimplexOptions::default(),
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

struct Objective<'a> {
    model: &'a SourceModel<f64>,
    channel: &'a ChannelModel<f64>,
}

impl Objective<'_> {
    /// Distortion at `(α, u, κ)` with `β` at its closed-form optimum, or
    /// `None` when the point is infeasible or the segments overlap.
    fn eval(&self, alpha: f64, u: f64, kappa: f64, moments: (f64, f64)) -> Option<(f64, SqlcParams<f64>)> {
        let sigma = self.model.sigma_x();
        let budget = 2.0 * self.channel.power() - clipped_power(alpha, kappa, sigma);
        if !(budget > 0.0) || !(alpha > 0.0) || !(kappa > 0.0) || !(u > 0.0) {
            return None;
        }
        let beta = optimal_beta(alpha, self.model.sigma_x2(), self.channel.sigma_n2());
        let params = SqlcParams::scaled(alpha, beta, u, kappa, self.model, budget, moments.0).ok()?;
        let geometry = Geometry::new(self.model, kappa);
        let report = distortion_with_moments(&params, self.model, self.channel, &geometry, moments.1);
        let d = report.d();
        d.is_finite().then_some((d, params))
    }
}

/// Minimizes the analytical SQLC distortion over `(α, β, Δ, κ)`.
pub fn optimize_sqlc(
    model: &SourceModel<f64>,
    channel: &ChannelModel<f64>,
) -> Result<OptimizationResult<SqlcParams<f64>>> {
    optimize_sqlc_with(model, channel, &SqlcGrid::default())
}

/// Grid search over `(α, u, κ)`, then simplex descent on `(ln α, ln u, κ/σx)`
/// from the best grid points.
pub fn optimize_sqlc_with(
    model: &SourceModel<f64>,
    channel: &ChannelModel<f64>,
    grid: &SqlcGrid,
) -> Result<OptimizationResult<SqlcParams<f64>>> {
    let sigma = model.sigma_x();
    let alpha_unit = channel.power().sqrt() / sigma;
    let alphas: Vec<f64> =
        log_grid(grid.alpha.0, grid.alpha.1, grid.alpha.2).into_iter().map(|a| a * alpha_unit).collect();
    let us = log_grid(grid.u.0, grid.u.1, grid.u.2);
    let kappas: Vec<f64> = lin_grid(grid.kappa.0, grid.kappa.1, grid.kappa.2).into_iter().map(|k| k * sigma).collect();
    let moments: Vec<(f64, f64)> = us.par_iter().map(|&u| midrise_moments(u)).collect();
    let objective = Objective { model, channel };

    let mut scored: Vec<(f64, usize, usize, usize)> = alphas
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ia, &alpha)| {
            let objective = &objective;
            let kappas = &kappas;
            let us = &us;
            let moments = &moments;
            kappas.iter().enumerate().flat_map(move |(ik, &kappa)| {
                us.iter().enumerate().filter_map(move |(iu, &u)| {
                    objective.eval(alpha, u, kappa, moments[iu]).map(|(d, _)| (d, ia, iu, ik))
                })
            })
        })
        .collect();
    let mut evals = alphas.len() * us.len() * kappas.len();
    if scored.is_empty() {
        return Err(Error::NonConvergence("no feasible SQLC grid point".into()));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));

    let starts: Vec<[f64; 3]> = scored
        .iter()
        .take(grid.restarts.max(1))
        .map(|&(_, ia, iu, ik)| [alphas[ia].ln(), us[iu].ln(), kappas[ik] / sigma])
        .collect();
    let runs: Vec<_> = starts
        .par_iter()
        .map(|x0| {
            let f = |x: &[f64]| {
                let (alpha, u, kappa) = (x[0].exp(), x[1].exp(), x[2] * sigma);
                if alpha > 10.0 || u > 100.0 {
                    return f64::INFINITY;
                }
                objective.eval(alpha, u, kappa, midrise_moments(u)).map_or(f64::INFINITY, |(d, _)| d)
            };
            nelder_mead(f, x0, &[0.1, 0.1, 0.1], grid.simplex)
        })
        .collect();
    evals += runs.iter().map(|r| r.evals).sum::<usize>();
    let best = runs
        .iter()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or_else(|| Error::NonConvergence("simplex produced no result".into()))?;
    let (alpha, u, kappa) = (best.x[0].exp(), best.x[1].exp(), best.x[2] * sigma);
    let (_, params) = objective
        .eval(alpha, u, kappa, midrise_moments(u))
        .ok_or_else(|| Error::NonConvergence("simplex ended on an infeasible point".into()))?;
    check_separability(params.alpha(), params.delta(), params.kappa(), params.xi(), model)?;
    let report: DistortionReport<f64> = sqlc_distortion(&params, model, channel, &Geometry::new(model, kappa))?;
    Ok(OptimizationResult {
        achieved_d: report.d(),
        achieved_powers: sqlc_power(&params, model),
        report,
        params,
        objective_evals: evals,
        converged: best.converged,
    })
}
