//! Nelder–Mead downhill simplex.

/// Stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop when `f_worst − f_best ≤ rel_tol·|f_best|`.
    pub rel_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_iter: 400, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0`, with an initial simplex spanned by
/// `x0 + steps[k]·e_k`. Infeasible points should return `f64::INFINITY`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: SimplexOptions,
) -> SimplexResult {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for k in 0..n {
        let mut p = x0.to_vec();
        p[k] += steps[k];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut iterations = 0;
    let mut converged = false;

    let mut order: Vec<usize> = (0..=n).collect();
    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        let (fb, fw) = (vals[best], vals[worst]);
        if fb.is_finite() && fw - fb <= opts.rel_tol * fb.abs() {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[worst]).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(REFLECT);
        let fr = f(&xr);
        evals += 1;
        if fr < fb {
            let xe = along(EXPAND);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < fw {
            let xc = along(REFLECT * CONTRACT);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < fw.min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for &i in &order[1..] {
            for (p, a) in pts[i].iter_mut().zip(&anchor) {
                *p = a + SHRINK * (*p - a);
            }
            vals[i] = f(&pts[i]);
            evals += 1;
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult { x: pts[best].clone(), f: vals[best], evals, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2) + 1.0,
            &[-1.2, 1.0],
            &[0.1, 0.1],
            SimplexOptions { max_iter: 2000, rel_tol: 1e-12 },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 2e-3, "{:?}", r.x);
    }

    #[test]
    fn respects_infeasible_region() {
        // minimum of the unconstrained quadratic lies in the forbidden half-plane
        let r = nelder_mead(
            |x| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.2).powi(2) + (x[1] + 1.0).powi(2) + 1.0 },
            &[2.0, 2.0],
            &[0.3, 0.3],
            SimplexOptions { max_iter: 1000, rel_tol: 1e-12 },
        );
        assert!(r.x[0] >= 0.5);
        assert!((r.x[0] - 0.5).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-2, "{:?}", r.x);
    }

    #[test]
    fn iteration_cap() {
        let r = nelder_mead(
            |x| x.iter().map(|v| v * v).sum::<f64>() + 1.0,
            &[3.0; 4],
            &[1.0; 4],
            SimplexOptions { max_iter: 5, rel_tol: 0.0 },
        );
        assert_eq!(r.iterations, 5);
        assert!(!r.converged);
    }
}
