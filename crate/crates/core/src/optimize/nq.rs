use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::OptimizationResult;
use crate::error::{Error, Result};
use crate::model::{ChannelModel, SourceModel};
use crate::nq::{nq_analyze, nq_power, Estimator, NqParams, NqTables};

/// Search space for the nested quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct NqSearch {
    /// Largest odd modulus tried; all odd `c` from 1 up are searched.
    pub c_max: u32,
    /// Step grid in units of `σx`, log-spaced.
    pub delta: (f64, f64, usize),
    /// Moduli whose best grid distortion is within this factor of the overall
    /// best get a one-dimensional refinement in `Δ`.
    pub refine_ratio: f64,
    pub max_refined: usize,
    pub refine_iters: usize,
    pub estimator: Estimator,
}

impl Default for NqSearch {
    fn default() -> Self {
        NqSearch {
            c_max: 31,
            delta: (0.01, 4.0, 48),
            refine_ratio: 1.5,
            max_refined: 4,
            refine_iters: 24,
            estimator: Estimator::Mmse,
        }
    }
}

/// NQ optimizer for one source model.
///
/// Cell tables depend only on `Δ` and the source, so the tables of the
/// `Δ` grid are cached and reused across channels.
#[derive(Debug)]
pub struct NqOptimizer {
    model: SourceModel<f64>,
    search: NqSearch,
    tables: Mutex<HashMap<u64, Arc<NqTables<f64>>>>,
}

struct Candidate {
    d: f64,
    params: NqParams<f64>,
}

impl NqOptimizer {
    pub fn new(model: &SourceModel<f64>) -> Self {
        Self::with_search(model, NqSearch::default())
    }

    pub fn with_search(model: &SourceModel<f64>, search: NqSearch) -> Self {
        NqOptimizer { model: *model, search, tables: Mutex::new(HashMap::new()) }
    }

    pub fn model(&self) -> &SourceModel<f64> {
        &self.model
    }

    fn deltas(&self) -> Vec<f64> {
        let (lo, hi, n) = self.search.delta;
        let s = self.model.sigma_x();
        let n = n.max(2);
        (0..n).map(|k| s * (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
    }

    fn moduli(&self) -> Vec<u32> {
        (1..=self.search.c_max).step_by(2).collect()
    }

    /// Tables for the grid steps, built on first use.
    fn grid_tables(&self, deltas: &[f64]) -> Result<Vec<Arc<NqTables<f64>>>> {
        let missing: Vec<f64> = {
            let cache = self.tables.lock().expect("table cache poisoned");
            deltas.iter().copied().filter(|d| !cache.contains_key(&d.to_bits())).collect()
        };
        let built: Vec<(u64, Arc<NqTables<f64>>)> = missing
            .par_iter()
            .map(|&d| NqTables::build(d, &self.model).map(|t| (d.to_bits(), Arc::new(t))))
            .collect::<Result<_>>()?;
        let mut cache = self.tables.lock().expect("table cache poisoned");
        cache.extend(built);
        Ok(deltas.iter().map(|d| Arc::clone(&cache[&d.to_bits()])).collect())
    }

    fn evaluate(&self, tables: &NqTables<f64>, c: u32, channel: &ChannelModel<f64>) -> Option<Candidate> {
        let params = NqParams::with_power(tables.delta(), c, &self.model, channel.power()).ok()?;
        let a = nq_analyze(&params, channel, tables, self.search.estimator).ok()?;
        let d = a.report.d();
        d.is_finite().then_some(Candidate { d, params })
    }

    /// Minimizes the analytical distortion over `(Δ, c)` with `a` set by the
    /// power constraint.
    pub fn optimize(&self, channel: &ChannelModel<f64>) -> Result<OptimizationResult<NqParams<f64>>> {
        let deltas = self.deltas();
        let moduli = self.moduli();
        let tables = self.grid_tables(&deltas)?;

        // grid[c][k] = D at (moduli[c], deltas[k])
        let grid: Vec<Vec<f64>> = moduli
            .par_iter()
            .map(|&c| tables.iter().map(|t| self.evaluate(t, c, channel).map_or(f64::INFINITY, |x| x.d)).collect())
            .collect();
        let mut evals = moduli.len() * deltas.len();

        let best_per_c: Vec<(usize, usize, f64)> = grid
            .iter()
            .enumerate()
            .map(|(ci, row)| {
                let (k, d) = row
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, &d)| (k, d))
                    .unwrap_or((0, f64::INFINITY));
                (ci, k, d)
            })
            .collect();
        let global = best_per_c.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
        if !global.is_finite() {
            return Err(Error::NonConvergence("no finite NQ grid point".into()));
        }
        let mut chosen: Vec<(usize, usize, f64)> =
            best_per_c.iter().copied().filter(|x| x.2 <= self.search.refine_ratio * global).collect();
        chosen.sort_by(|a, b| a.2.total_cmp(&b.2));
        chosen.truncate(self.search.max_refined.max(1));

        let refined: Vec<(Candidate, usize, bool)> =
            chosen.par_iter().map(|&(ci, k, _)| self.refine(moduli[ci], &deltas, k, channel)).collect::<Result<_>>()?;
        evals += refined.iter().map(|r| r.1).sum::<usize>();
        let (best, _, converged) = refined
            .into_iter()
            .min_by(|a, b| a.0.d.total_cmp(&b.0.d))
            .ok_or_else(|| Error::NonConvergence("no NQ refinement result".into()))?;

        let tables = NqTables::build(best.params.delta(), &self.model)?;
        let report = nq_analyze(&best.params, channel, &tables, self.search.estimator)?.report;
        Ok(OptimizationResult {
            achieved_d: report.d(),
            achieved_powers: nq_power(&best.params, &self.model),
            report,
            params: best.params,
            objective_evals: evals,
            converged,
        })
    }

    /// Golden-section search in `ln Δ` between the grid neighbours of the
    /// best grid step for modulus `c`.
    fn refine(
        &self,
        c: u32,
        deltas: &[f64],
        k: usize,
        channel: &ChannelModel<f64>,
    ) -> Result<(Candidate, usize, bool)> {
        let lo = deltas[k.saturating_sub(1)].ln();
        let hi = deltas[(k + 1).min(deltas.len() - 1)].ln();
        let eval = |ld: f64| -> Result<Option<Candidate>> {
            let t = NqTables::build(ld.exp(), &self.model)?;
            Ok(self.evaluate(&t, c, channel))
        };
        let score = |x: &Option<Candidate>| x.as_ref().map_or(f64::INFINITY, |c| c.d);
        let grid_best = {
            let t = self.grid_tables(&[deltas[k]])?;
            self.evaluate(&t[0], c, channel)
        };
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        let mut evals = 3;
        let mut converged = false;
        for _ in 0..self.search.refine_iters {
            if (b - a) < 1e-4 {
                converged = true;
                break;
            }
            if score(&f1) <= score(&f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = eval(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = eval(x2)?;
            }
            evals += 1;
        }
        converged |= (b - a) < 1e-4;
        let best = [grid_best, f1, f2]
            .into_iter()
            .flatten()
            .min_by(|p, q| p.d.total_cmp(&q.d))
            .ok_or_else(|| Error::NonConvergence(format!("no finite NQ distortion for c = {c}")))?;
        Ok((best, evals, converged))
    }
}

/// One-shot NQ optimization.
pub fn optimize_nq(model: &SourceModel<f64>, channel: &ChannelModel<f64>) -> Result<OptimizationResult<NqParams<f64>>> {
    NqOptimizer::new(model).optimize(channel)
}
