//! Nested scalar quantization.
//!
//! Encoder 1 sends `a·c·i1` with `i1 = ⌊x1/Δ⌉`. Encoder 2 folds its index
//! `i2 = ⌊x2/Δ⌉` into `ĩ2 ∈ {−(c−1)/2, …, (c−1)/2}` and sends `a·ĩ2`. With `c`
//! odd the channel points `a·(c·i1 + ĩ2)` form the integer lattice scaled by
//! `a`, so the sequential decoder is a nearest-lattice-point search followed
//! by the correlation-aided choice of the folding interval.

use crate::conv::{convolve_same, DIRECT_MAX};
use crate::error::{Error, Result};
use crate::model::{ChannelModel, DistortionReport, SourceModel};
use crate::quad::gauss_legendre_nodes;
use crate::scalar::{gaussian_pdf, interval_moments, normal_cdf, normal_mass, normal_sf, round_index, Edge, Real};

/// Design triple `(Δ, c, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NqParams<T> {
    delta: T,
    c: u32,
    a: T,
}

impl<T: Real> NqParams<T> {
    pub fn new(delta: T, c: u32, a: T) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
        }
        if c == 0 || c.is_multiple_of(2) {
            return Err(Error::invalid("c", format!("must be a positive odd integer, got {c}")));
        }
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::invalid("a", format!("must be positive, got {a}")));
        }
        Ok(NqParams { delta, c, a })
    }

    /// Chooses `a` so that `P1 + P2 = 2·power`.
    pub fn with_power(delta: T, c: u32, model: &SourceModel<T>, power: T) -> Result<Self> {
        let probe = Self::new(delta, c, T::one())?;
        let (p1, p2) = nq_power(&probe, model);
        Self::new(delta, c, (T::two() * power / (p1 + p2)).sqrt())
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn c(&self) -> u32 {
        self.c
    }

    pub fn a(&self) -> T {
        self.a
    }

    fn half_width(&self) -> i64 {
        (self.c as i64 - 1) / 2
    }
}

/// Midthread quantizer index `⌊x/Δ⌉`, ties away from zero.
pub fn quantize_index<T: Real>(x: T, delta: T) -> i64 {
    round_index(x / delta)
}

/// Folds `i2` into `{−(c−1)/2, …, (c−1)/2}`: `i2 − c·⌊i2/c⌉`.
pub fn nest_index(i2: i64, c: u32) -> i64 {
    let c = c as i64;
    let h = (c - 1) / 2;
    (i2 + h).rem_euclid(c) - h
}

pub fn nq_encode<T: Real>(x1: T, x2: T, params: &NqParams<T>) -> (T, T) {
    let i1 = quantize_index(x1, params.delta);
    let i2 = nest_index(quantize_index(x2, params.delta), params.c);
    let a = params.a;
    (a * T::lit((params.c as i64 * i1) as f64), a * T::lit(i2 as f64))
}

/// Average transmit powers `(P1, P2)`.
///
/// Sums run over `|i| ≤ ⌈10σx/Δ⌉`, beyond which the index mass is below
/// double precision.
pub fn nq_power<T: Real>(params: &NqParams<T>, model: &SourceModel<T>) -> (T, T) {
    let sigma = model.sigma_x();
    let delta = params.delta;
    let n = (T::lit(10.0) * sigma / delta).ceil().to_i64().unwrap_or(i64::MAX / 4).max(1);
    let c = params.c;
    let mut folded = vec![T::zero(); c as usize];
    let mut e1 = T::zero();
    let h = params.half_width();
    for i in -n..=n {
        let x = T::lit(i as f64) * delta;
        let p = normal_mass((x - delta * T::half()) / sigma, (x + delta * T::half()) / sigma);
        e1 += p * T::lit((i * i) as f64);
        folded[(nest_index(i, c) + h) as usize] += p;
    }
    let e2 = folded.iter().enumerate().fold(T::zero(), |acc, (k, &p)| {
        let j = (k as i64 - h) as f64;
        acc + p * T::lit(j * j)
    });
    let a2 = params.a * params.a;
    let cc = T::lit(c as f64);
    (a2 * cc * cc * e1, a2 * e2)
}

/// Probability mass and cell-conditional mean of one quantization cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<T> {
    pub prob: T,
    pub mean: [T; 2],
}

#[derive(Debug, Clone)]
struct CellRow<T> {
    lo: i64,
    cells: Vec<Cell<T>>,
}

/// Per-cell probabilities `Pr(i1, i2)` and conditional means `E{x_m | i1, i2}`.
///
/// The table depends on `Δ` and the source only, not on `c`, `a` or the
/// channel, so one table serves every nesting modulus at a given step.
/// Indices are truncated to `|i1| ≤ ⌈6σx/Δ⌉`; for each `i1` the `i2` range is
/// the band where `x2 | x1` carries mass (±8 conditional standard deviations),
/// intersected with the same truncation.
#[derive(Debug, Clone)]
pub struct NqTables<T> {
    delta: T,
    model: SourceModel<T>,
    n: i64,
    rows: Vec<CellRow<T>>,
    eps_q: [T; 2],
    mass: T,
}

#[derive(Clone, Copy, Default)]
struct Accum<T> {
    p: T,
    s1: T,
    s11: T,
    s2: T,
    s22: T,
}

/// One-dimensional cell statistics `(p, mean, p·variance)` for `N(0, σ²)`.
fn marginal_cells<T: Real>(delta: T, sigma: T, n: i64) -> Vec<(T, T, T)> {
    let edge = |j: i64| Edge::new((T::lit(j as f64) - T::half()) * delta / sigma);
    let mut lo = edge(-n);
    (-n..=n)
        .map(|i| {
            let hi = edge(i + 1);
            let centre = T::lit(i as f64) * delta;
            let (p, m1, m2) = interval_moments(-centre, sigma, &lo, &hi);
            lo = hi;
            if p > T::zero() {
                (p, centre + m1 / p, (m2 - m1 * m1 / p).max(T::zero()))
            } else {
                (T::zero(), centre, T::zero())
            }
        })
        .collect()
}

impl<T: Real> NqTables<T> {
    pub fn build(delta: T, model: &SourceModel<T>) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
        }
        let sigma = model.sigma_x();
        let n = (T::lit(6.0) * sigma / delta).ceil().to_i64().unwrap_or(0).max(1);
        if n > 1_000_000 {
            return Err(Error::invalid("delta", format!("step {delta} is too small for the table")));
        }
        let rho = model.rho_x();
        let (rows, eps_q) = if rho >= T::one() {
            Self::diagonal(delta, sigma, n)
        } else if rho == T::zero() {
            Self::product(delta, sigma, n)
        } else {
            Self::general(delta, model, n)
        };
        let mass = rows.iter().flat_map(|r| r.cells.iter()).fold(T::zero(), |acc, c| acc + c.prob);
        Ok(NqTables { delta, model: *model, n, rows, eps_q, mass })
    }

    fn diagonal(delta: T, sigma: T, n: i64) -> (Vec<CellRow<T>>, [T; 2]) {
        let mut eq = T::zero();
        let rows = marginal_cells(delta, sigma, n)
            .into_iter()
            .zip(-n..=n)
            .map(|((p, m, v), i)| {
                eq += v;
                CellRow { lo: i, cells: vec![Cell { prob: p, mean: [m, m] }] }
            })
            .collect();
        (rows, [eq, eq])
    }

    fn product(delta: T, sigma: T, n: i64) -> (Vec<CellRow<T>>, [T; 2]) {
        let marg = marginal_cells(delta, sigma, n);
        let total: T = marg.iter().fold(T::zero(), |acc, m| acc + m.0);
        let var: T = marg.iter().fold(T::zero(), |acc, m| acc + m.2);
        let rows = marg
            .iter()
            .map(|&(p1, m1, _)| CellRow {
                lo: -n,
                cells: marg.iter().map(|&(p2, m2, _)| Cell { prob: p1 * p2, mean: [m1, m2] }).collect(),
            })
            .collect();
        (rows, [var * total, var * total])
    }

    fn general(delta: T, model: &SourceModel<T>, n: i64) -> (Vec<CellRow<T>>, [T; 2]) {
        let sigma = model.sigma_x();
        let rho = model.rho_x();
        let s = model.conditional_std();
        let band = (T::lit(8.0) * s / delta).ceil().to_i64().unwrap_or(0) + 1;
        // the inner mass switches over a width s/ρ in x1; keep panels narrower
        let panels = (T::two() * rho * delta / s).ceil().to_usize().unwrap_or(64).clamp(1, 64);
        let mut eps_q = [T::zero(); 2];
        let mut rows = Vec::with_capacity((2 * n + 1) as usize);
        let mut edges: Vec<Edge<T>> = Vec::new();
        for i1 in -n..=n {
            let centre1 = T::lit(i1 as f64) * delta;
            let mid = round_index(rho * T::lit(i1 as f64));
            let lo = (mid - band).max(-n);
            let hi = (mid + band).min(n);
            if lo > hi {
                rows.push(CellRow { lo: mid, cells: Vec::new() });
                continue;
            }
            let width = (hi - lo + 1) as usize;
            let mut acc = vec![Accum::<T>::default(); width];
            let x_lo = centre1 - delta * T::half();
            let step = delta / T::lit(panels as f64);
            for k in 0..panels {
                let a = x_lo + step * T::lit(k as f64);
                for (x1, w) in gauss_legendre_nodes(a, a + step) {
                    let wf = w * gaussian_pdf(x1, sigma);
                    let u1 = x1 - centre1;
                    let mu = rho * x1;
                    edges.clear();
                    edges.extend((lo..=hi + 1).map(|j| Edge::new(((T::lit(j as f64) - T::half()) * delta - mu) / s)));
                    for (idx, cell) in acc.iter_mut().enumerate() {
                        let centre2 = T::lit((lo + idx as i64) as f64) * delta;
                        let (p, m1, m2) = interval_moments(mu - centre2, s, &edges[idx], &edges[idx + 1]);
                        let wp = wf * p;
                        cell.p += wp;
                        cell.s1 += wp * u1;
                        cell.s11 += wp * u1 * u1;
                        cell.s2 += wf * m1;
                        cell.s22 += wf * m2;
                    }
                }
            }
            let cells = acc
                .iter()
                .enumerate()
                .map(|(idx, c)| {
                    let centre2 = T::lit((lo + idx as i64) as f64) * delta;
                    if c.p > T::zero() {
                        eps_q[0] += (c.s11 - c.s1 * c.s1 / c.p).max(T::zero());
                        eps_q[1] += (c.s22 - c.s2 * c.s2 / c.p).max(T::zero());
                        Cell { prob: c.p, mean: [centre1 + c.s1 / c.p, centre2 + c.s2 / c.p] }
                    } else {
                        Cell { prob: T::zero(), mean: [centre1, centre2] }
                    }
                })
                .collect();
            rows.push(CellRow { lo, cells });
        }
        (rows, eps_q)
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn model(&self) -> &SourceModel<T> {
        &self.model
    }

    /// `i1` (and `i2`) are truncated to `[−n, n]`.
    pub fn index_bound(&self) -> i64 {
        self.n
    }

    /// Total tabulated probability; short of 1 by the truncated tail mass.
    pub fn total_mass(&self) -> T {
        self.mass
    }

    /// Granular distortion `Σ E{(x_m − x̄_m)² ; cell}` per source.
    pub fn granular_distortion(&self) -> [T; 2] {
        self.eps_q
    }

    pub fn cell(&self, i1: i64, i2: i64) -> Option<&Cell<T>> {
        if i1 < -self.n || i1 > self.n {
            return None;
        }
        let row = &self.rows[(i1 + self.n) as usize];
        let k = i2 - row.lo;
        if k < 0 {
            return None;
        }
        row.cells.get(k as usize)
    }

    /// `E{x_m | i1, i2}`, falling back to the cell centre for cells that
    /// carry no mass or lie outside the table.
    pub fn cell_mean(&self, i1: i64, i2: i64) -> [T; 2] {
        match self.cell(i1, i2) {
            Some(c) if c.prob > T::lit(1e-280) => c.mean,
            _ => [T::lit(i1 as f64) * self.delta, T::lit(i2 as f64) * self.delta],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (i64, i64, &Cell<T>)> + '_ {
        self.rows
            .iter()
            .zip(-self.n..)
            .flat_map(|(row, i1)| row.cells.iter().zip(row.lo..).map(move |(c, i2)| (i1, i2, c)))
    }
}

/// How the decoder picks the folding interval `k` in `j2 = ĵ2 + k·c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalRule {
    /// `k = ⌊(ρx·j1 − ĵ2)/c⌉`: the interval closest to the correlation-based
    /// guess `ρx·j1`.
    #[default]
    Nearest,
    /// `k = max{⌊(ρx·j1 − ĵ2)/c⌉, 0}`, which never selects an interval below
    /// the central one.
    ClampedAtZero,
}

/// Interval index `k` for decoded `j1`, folded `ĵ2` and source correlation.
pub fn interval_shift<T: Real>(rho_x: T, j1: i64, j2_folded: i64, c: u32, rule: IntervalRule) -> i64 {
    let k = round_index((rho_x * T::lit(j1 as f64) - T::lit(j2_folded as f64)) / T::lit(c as f64));
    match rule {
        IntervalRule::Nearest => k,
        IntervalRule::ClampedAtZero => k.max(0),
    }
}

/// Indices recovered from one channel output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedIndices {
    pub j1: i64,
    pub j2_folded: i64,
    pub j2: i64,
}

/// Sequential decoder bound to a cell table.
#[derive(Debug, Clone, Copy)]
pub struct NqDecoder<'a, T> {
    params: NqParams<T>,
    tables: &'a NqTables<T>,
    rule: IntervalRule,
}

impl<'a, T: Real> NqDecoder<'a, T> {
    pub fn new(params: &NqParams<T>, tables: &'a NqTables<T>) -> Result<Self> {
        if tables.delta != params.delta {
            return Err(Error::invalid("tables", "built for a different quantizer step"));
        }
        Ok(NqDecoder { params: *params, tables, rule: IntervalRule::default() })
    }

    pub fn with_rule(mut self, rule: IntervalRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn indices(&self, z: T) -> DecodedIndices {
        let c = self.params.c;
        let a = self.params.a;
        let n = self.tables.n;
        let h = self.params.half_width();
        let cf = T::lit(c as f64);
        let j1 = round_index(z / (a * cf)).clamp(-n, n);
        let j2_folded = round_index(z / a - cf * T::lit(j1 as f64)).clamp(-h, h);
        let k = interval_shift(self.tables.model.rho_x(), j1, j2_folded, c, self.rule);
        DecodedIndices { j1, j2_folded, j2: j2_folded + k * c as i64 }
    }

    pub fn decode(&self, z: T) -> (T, T) {
        let d = self.indices(z);
        let m = self.tables.cell_mean(d.j1, d.j2);
        (m[0], m[1])
    }
}

/// Decodes one channel output with the default interval rule.
pub fn nq_decode<T: Real>(z: T, params: &NqParams<T>, model: &SourceModel<T>, tables: &NqTables<T>) -> Result<(T, T)> {
    if tables.model != *model {
        return Err(Error::invalid("tables", "built for a different source model"));
    }
    Ok(NqDecoder::new(params, tables)?.decode(z))
}

/// How a detected channel point is mapped to source estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// `x̂_m = E{x_m | j1(z), j2(z)}`, which accounts for the channel
    /// transition probabilities. The pair `(j1, j2)` is a one-to-one function
    /// of the detected lattice point, so the interval rule plays no part.
    #[default]
    Mmse,
    /// `x̂_m = x̄_m(j1, j2)`: the mean of the detected cell, with the interval
    /// chosen by the given rule.
    CellMean(IntervalRule),
}

/// Reconstruction values for every channel point `K = c·j1 + ĵ2`.
#[derive(Debug, Clone)]
pub struct NqCodebook<T> {
    a: T,
    k_min: i64,
    points: Vec<[T; 2]>,
}

impl<T: Real> NqCodebook<T> {
    /// Cell means of the decoded indices, independent of the channel.
    pub fn cell_means(params: &NqParams<T>, tables: &NqTables<T>, rule: IntervalRule) -> Result<Self> {
        let decoder = NqDecoder::new(params, tables)?.with_rule(rule);
        let (k_min, k_max) = lattice_range(params, tables);
        let points = (k_min..=k_max)
            .map(|k| {
                // a point exactly on a lattice site decodes to that site
                let d = decoder.indices(params.a * T::lit(k as f64));
                debug_assert_eq!(d.j1 * params.c as i64 + d.j2_folded, k);
                tables.cell_mean(d.j1, d.j2)
            })
            .collect();
        Ok(NqCodebook { a: params.a, k_min, points })
    }

    /// Detected lattice point `⌊z/a⌉`, clamped to the used range.
    pub fn lattice_index(&self, z: T) -> i64 {
        round_index(z / self.a).clamp(self.k_min, self.k_min + self.points.len() as i64 - 1)
    }

    pub fn point(&self, k: i64) -> [T; 2] {
        let idx = (k - self.k_min).clamp(0, self.points.len() as i64 - 1);
        self.points[idx as usize]
    }

    pub fn decode(&self, z: T) -> (T, T) {
        let p = self.point(self.lattice_index(z));
        (p[0], p[1])
    }

    pub fn range(&self) -> (i64, i64) {
        (self.k_min, self.k_min + self.points.len() as i64 - 1)
    }
}

fn lattice_range<T: Real>(params: &NqParams<T>, tables: &NqTables<T>) -> (i64, i64) {
    let ci = params.c as i64;
    let h = params.half_width();
    (-ci * tables.n - h, ci * tables.n + h)
}

/// Transition weights `Pr(K' | K)` between lattice points. The decision
/// region of `K'` is the unit interval around `K'` in `z/a`, with the two
/// outermost regions extended to infinity.
struct Transition<T> {
    r: T,
    reach: i64,
    kernel: Vec<T>,
    nk: usize,
}

impl<T: Real> Transition<T> {
    fn new(r: T, nk: usize) -> Self {
        let reach = (T::lit(8.5) / r).ceil().to_i64().unwrap_or(i64::MAX / 4).saturating_add(1);
        let reach = reach.min(nk as i64);
        let kernel = (-reach..=reach)
            .map(|d| normal_mass((T::lit(d as f64) - T::half()) * r, (T::lit(d as f64) + T::half()) * r))
            .collect();
        Transition { r, reach, kernel, nk }
    }

    /// Weight into the lower (`upper = false`) or upper edge region from
    /// offset index `k`.
    fn edge(&self, k: usize, upper: bool) -> T {
        if self.nk == 1 {
            return T::one();
        }
        if upper {
            let d = T::lit((self.nk - 1) as f64 - k as f64);
            normal_sf((d - T::half()) * self.r)
        } else {
            let d = -T::lit(k as f64);
            normal_cdf((d + T::half()) * self.r)
        }
    }

    fn edge_range(&self, upper: bool) -> std::ops::Range<usize> {
        let reach = self.reach as usize;
        if upper {
            (self.nk - 1).saturating_sub(reach)..self.nk
        } else {
            0..(reach + 1).min(self.nk)
        }
    }

    /// `out[K] = Σ_K' Pr(K' | K)·v[K']`.
    fn forward(&self, v: &[T]) -> Vec<T> {
        if self.nk == 1 {
            return v.to_vec();
        }
        let mut inner = v.to_vec();
        inner[0] = T::zero();
        inner[self.nk - 1] = T::zero();
        let mut out = convolve_same(&inner, &self.kernel);
        for upper in [false, true] {
            let edge_value = v[if upper { self.nk - 1 } else { 0 }];
            for k in self.edge_range(upper) {
                out[k] += self.edge(k, upper) * edge_value;
            }
        }
        out
    }

    /// `out[K'] = Σ_K Pr(K' | K)·v[K]`.
    fn adjoint(&self, v: &[T]) -> Vec<T> {
        if self.nk == 1 {
            return v.to_vec();
        }
        let mut out = convolve_same(v, &self.kernel);
        for upper in [false, true] {
            let acc = self.edge_range(upper).fold(T::zero(), |acc, k| acc + self.edge(k, upper) * v[k]);
            out[if upper { self.nk - 1 } else { 0 }] = acc;
        }
        out
    }

    fn weight(&self, k: usize, kp: usize) -> T {
        if kp == 0 || kp == self.nk - 1 {
            self.edge(k, kp != 0)
        } else {
            self.kernel[(kp as i64 - k as i64 + self.reach) as usize]
        }
    }
}

/// Full analytical evaluation at one operating point.
#[derive(Debug, Clone)]
pub struct NqAnalysis<T> {
    pub report: DistortionReport<T>,
    c: u32,
    k_min: i64,
    class_prob: Vec<T>,
    collapsed: Vec<[T; 2]>,
    codebook: NqCodebook<T>,
}

impl<T: Real> NqAnalysis<T> {
    fn slot(&self, i1: i64, i2_folded: i64) -> Option<usize> {
        let k = self.c as i64 * i1 + i2_folded - self.k_min;
        (k >= 0 && (k as usize) < self.class_prob.len()).then_some(k as usize)
    }

    /// `Pr(i1, ĩ2)`.
    pub fn class_probability(&self, i1: i64, i2_folded: i64) -> T {
        self.slot(i1, i2_folded).map_or(T::zero(), |k| self.class_prob[k])
    }

    /// `x̃_m(i1, ĩ2) = E{x̂_m | i1, ĩ2}`.
    pub fn collapsed_mean(&self, i1: i64, i2_folded: i64) -> [T; 2] {
        self.slot(i1, i2_folded).map_or([T::zero(); 2], |k| self.collapsed[k])
    }

    /// The reconstruction used by the analysis, for simulation.
    pub fn codebook(&self) -> &NqCodebook<T> {
        &self.codebook
    }
}

pub fn nq_analyze<T: Real>(
    params: &NqParams<T>,
    channel: &ChannelModel<T>,
    tables: &NqTables<T>,
    estimator: Estimator,
) -> Result<NqAnalysis<T>> {
    if tables.delta != params.delta {
        return Err(Error::invalid("tables", "built for a different quantizer step"));
    }
    let c = params.c;
    let ci = c as i64;
    let (k_min, k_max) = lattice_range(params, tables);
    let nk = (k_max - k_min + 1) as usize;
    let slot = |i1: i64, i2: i64| (ci * i1 + nest_index(i2, c) - k_min) as usize;

    let mut class_prob = vec![T::zero(); nk];
    let mut class_moment = [vec![T::zero(); nk], vec![T::zero(); nk]];
    for (i1, i2, cell) in tables.cells() {
        let k = slot(i1, i2);
        class_prob[k] += cell.prob;
        class_moment[0][k] += cell.prob * cell.mean[0];
        class_moment[1][k] += cell.prob * cell.mean[1];
    }

    let transition = Transition::new(params.a / channel.sigma_n(), nk);
    let codebook = match estimator {
        Estimator::CellMean(rule) => NqCodebook::cell_means(params, tables, rule)?,
        Estimator::Mmse => {
            let fallback = NqCodebook::cell_means(params, tables, IntervalRule::Nearest)?;
            let den = transition.adjoint(&class_prob);
            let num = [transition.adjoint(&class_moment[0]), transition.adjoint(&class_moment[1])];
            let points = (0..nk)
                .map(|k| {
                    if den[k] > T::lit(1e-250) {
                        [num[0][k] / den[k], num[1][k] / den[k]]
                    } else {
                        fallback.points[k]
                    }
                })
                .collect();
            NqCodebook { a: params.a, k_min, points }
        }
    };

    let component = |m: usize| -> Vec<T> { codebook.points.iter().map(|p| p[m]).collect() };
    let xhat = [component(0), component(1)];
    let xt = [transition.forward(&xhat[0]), transition.forward(&xhat[1])];

    let mut eps_n = [T::zero(); 2];
    if transition.kernel.len() <= DIRECT_MAX {
        // short reach: two-pass sum of squared deviations
        let reach = transition.reach as usize;
        for (k, &pk) in class_prob.iter().enumerate() {
            if !(pk > T::zero()) {
                continue;
            }
            let lo = k.saturating_sub(reach);
            let hi = (k + reach).min(nk - 1);
            for m in 0..2 {
                let mut spread = T::zero();
                for (kp, &xh) in (lo..=hi).zip(&xhat[m][lo..=hi]) {
                    let e = xt[m][k] - xh;
                    spread += transition.weight(k, kp) * e * e;
                }
                eps_n[m] += pk * spread;
            }
        }
    } else {
        // long reach: Σ w·(x̃ − x̂)² = F[x̂²] − 2x̃·F[x̂] + x̃²·F[1]
        let s0 = transition.forward(&vec![T::one(); nk]);
        for m in 0..2 {
            let sq: Vec<T> = xhat[m].iter().map(|&x| x * x).collect();
            let s2 = transition.forward(&sq);
            for (k, &pk) in class_prob.iter().enumerate() {
                let t = xt[m][k];
                let spread = (s2[k] - T::two() * t * t + t * t * s0[k]).max(T::zero());
                eps_n[m] += pk * spread;
            }
        }
    }

    let mut eps_c = [T::zero(); 2];
    for (i1, i2, cell) in tables.cells() {
        let k = slot(i1, i2);
        for m in 0..2 {
            let e = cell.mean[m] - xt[m][k];
            eps_c[m] += cell.prob * e * e;
        }
    }

    let collapsed = (0..nk).map(|k| [xt[0][k], xt[1][k]]).collect();
    let eps_q = tables.eps_q;
    let report = DistortionReport::with_terms(
        eps_q[0] + eps_c[0] + eps_n[0],
        eps_q[1] + eps_c[1] + eps_n[1],
        vec![
            ("eps_q_1", eps_q[0]),
            ("eps_c_1", eps_c[0]),
            ("eps_n_1", eps_n[0]),
            ("eps_q_2", eps_q[1]),
            ("eps_c_2", eps_c[1]),
            ("eps_n_2", eps_n[1]),
        ],
    );
    Ok(NqAnalysis { report, c, k_min, class_prob, collapsed, codebook })
}

/// Analytical distortion `D_m = ε_q,m + ε_c,m + ε_n,m` with the MMSE
/// estimator.
pub fn nq_distortion<T: Real>(
    params: &NqParams<T>,
    model: &SourceModel<T>,
    channel: &ChannelModel<T>,
) -> Result<DistortionReport<T>> {
    let tables = NqTables::build(params.delta, model)?;
    Ok(nq_analyze(params, channel, &tables, Estimator::default())?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gmac_transmit, joint_density, sample_source_pair};
    use crate::quad::gauss_legendre;
    use crate::rng::RandomStream;

    type Source = SourceModel<f64>;
    type Params = NqParams<f64>;
    type Tables = NqTables<f64>;
    type Channel = ChannelModel<f64>;

    #[test]
    fn index_examples() {
        assert_eq!(quantize_index(0.0, 1.0), 0);
        assert_eq!(quantize_index(2.4, 1.0), 2);
        assert_eq!(quantize_index(-0.5, 1.0), -1);
        assert_eq!(quantize_index(0.5, 1.0), 1);
        assert_eq!(nest_index(5, 7), -2);
        assert_eq!(nest_index(3, 7), 3);
        assert_eq!(nest_index(10, 3), 1);
        assert_eq!(nest_index(-4, 7), 3);
        for i in -500..500 {
            assert_eq!(nest_index(i, 1), 0);
        }
    }

    #[test]
    fn nest_matches_rounding_definition() {
        for c in (1..=31u32).step_by(2) {
            for i in -300i64..=300 {
                let direct = i - c as i64 * (i as f64 / c as f64).round() as i64;
                assert_eq!(nest_index(i, c), direct, "i={i} c={c}");
            }
        }
    }

    #[test]
    fn encoder_examples() {
        let p = Params::new(1.0, 7, 1.0).unwrap();
        assert_eq!(nq_encode(0.0, 0.0, &p), (0.0, 0.0));
        assert_eq!(nq_encode(2.1, 5.2, &p), (14.0, -2.0));
        let p = Params::new(0.3, 5, 0.7).unwrap();
        let mut s = RandomStream::from_seed(9);
        for _ in 0..100_000 {
            let x2 = 10.0 * s.standard_normal();
            let (_, y2) = nq_encode(0.0, x2, &p);
            assert!(y2.abs() <= 0.7 * 2.0 + 1e-12);
        }
        assert!(Params::new(1.0, 4, 1.0).is_err());
        assert!(Params::new(0.0, 3, 1.0).is_err());
    }

    #[test]
    fn power_matches_sampling() {
        let model = Source::unit(0.0).unwrap();
        let p = Params::new(1.0, 1, 1.0).unwrap();
        assert_eq!(nq_power(&p, &model).1, 0.0);

        let p = Params::new(1.0, 7, 1.0).unwrap();
        let (p1, p2) = nq_power(&p, &model);
        let mut s = RandomStream::from_seed(11);
        let n = 10_000_000;
        let (mut e1, mut e2) = (0.0, 0.0);
        for _ in 0..n {
            let (y1, y2) = nq_encode(s.standard_normal(), s.standard_normal(), &p);
            e1 += y1 * y1;
            e2 += y2 * y2;
        }
        assert!((e1 / n as f64 / p1 - 1.0).abs() < 0.005, "{} {p1}", e1 / n as f64);
        assert!((e2 / n as f64 / p2 - 1.0).abs() < 0.005, "{} {p2}", e2 / n as f64);
        assert!(p1 >= p2);
    }

    #[test]
    fn with_power_meets_budget() {
        let model = Source::unit(0.5).unwrap();
        for &c in &[1u32, 3, 9, 31] {
            let p = Params::with_power(0.2, c, &model, 1.0).unwrap();
            let (p1, p2) = nq_power(&p, &model);
            assert!((p1 + p2 - 2.0).abs() < 1e-12);
        }
    }

    /// Direct tensor quadrature of the joint density over one cell.
    fn direct_cell(i1: i64, i2: i64, delta: f64, model: &SourceModel<f64>) -> (f64, f64, f64) {
        let (lo1, lo2) = ((i1 as f64 - 0.5) * delta, (i2 as f64 - 0.5) * delta);
        let panels = 16;
        let h = delta / panels as f64;
        let (mut p, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for a in 0..panels {
            for b in 0..panels {
                let xa = lo1 + a as f64 * h;
                let xb = lo2 + b as f64 * h;
                let inner = |x1: f64, g: &dyn Fn(f64, f64) -> f64| {
                    gauss_legendre(xb, xb + h, |x2| joint_density(x1, x2, model).unwrap() * g(x1, x2))
                };
                p += gauss_legendre(xa, xa + h, |x1| inner(x1, &|_, _| 1.0));
                m1 += gauss_legendre(xa, xa + h, |x1| inner(x1, &|u, _| u));
                m2 += gauss_legendre(xa, xa + h, |x1| inner(x1, &|_, v| v));
            }
        }
        (p, m1 / p, m2 / p)
    }

    #[test]
    fn cell_statistics_match_direct_quadrature() {
        for &(rho, delta) in &[(0.5, 0.4), (0.95, 0.3), (0.95, 2.0), (0.3, 1.0)] {
            let model = Source::unit(rho).unwrap();
            let t = Tables::build(delta, &model).unwrap();
            for &(i1, i2) in &[(0, 0), (1, 0), (2, 2), (-3, -2), (4, 1)] {
                let (p, m1, m2) = direct_cell(i1, i2, delta, &model);
                let Some(cell) = t.cell(i1, i2) else {
                    assert!(p < 1e-9, "{rho} {delta} {i1} {i2}: untabulated mass {p}");
                    continue;
                };
                assert!((cell.prob - p).abs() < 1e-10 + 1e-7 * p, "{rho} {delta} {i1} {i2}: {} vs {p}", cell.prob);
                if p > 1e-8 {
                    assert!((cell.mean[0] - m1).abs() < 1e-6, "{} vs {m1}", cell.mean[0]);
                    assert!((cell.mean[1] - m2).abs() < 1e-6, "{} vs {m2}", cell.mean[1]);
                }
            }
        }
    }

    #[test]
    fn tables_cover_the_mass() {
        for &rho in &[0.0, 0.4, 0.95, 0.999, 1.0] {
            for &delta in &[0.05, 0.5, 2.0] {
                let t = Tables::build(delta, &Source::unit(rho).unwrap()).unwrap();
                assert!((t.total_mass() - 1.0).abs() < 1e-6, "{rho} {delta} {}", t.total_mass());
            }
        }
    }

    #[test]
    fn granular_distortion_small_step() {
        let delta = 0.02;
        for &rho in &[0.0, 0.6, 1.0] {
            let t = Tables::build(delta, &Source::unit(rho).unwrap()).unwrap();
            let eq = t.granular_distortion();
            for e in eq {
                assert!((e / (delta * delta / 12.0) - 1.0).abs() < 1e-3, "{rho}: {e}");
            }
        }
    }

    #[test]
    fn product_and_general_paths_agree() {
        let t0 = Tables::build(0.5, &Source::unit(0.0).unwrap()).unwrap();
        let t1 = Tables::build(0.5, &Source::unit(1e-9).unwrap()).unwrap();
        for i1 in -4..=4 {
            for i2 in -4..=4 {
                let (a, b) = (t0.cell(i1, i2).unwrap(), t1.cell(i1, i2).unwrap());
                assert!((a.prob - b.prob).abs() < 1e-9);
                assert!((a.mean[0] - b.mean[0]).abs() < 1e-7);
                assert!((a.mean[1] - b.mean[1]).abs() < 1e-7);
            }
        }
        for m in 0..2 {
            assert!((t0.granular_distortion()[m] - t1.granular_distortion()[m]).abs() < 1e-8);
        }
    }

    #[test]
    fn sequential_decoder_is_nearest_lattice_point() {
        let model = Source::unit(0.7).unwrap();
        let p = Params::new(0.25, 5, 0.3).unwrap();
        let t = Tables::build(0.25, &model).unwrap();
        let dec = NqDecoder::new(&p, &t).unwrap();
        let n = t.index_bound();
        let mut s = RandomStream::from_seed(3);
        for _ in 0..100_000 {
            let z = 40.0 * s.standard_normal();
            let d = dec.indices(z);
            let k = round_index(z / 0.3).clamp(-5 * n - 2, 5 * n + 2);
            assert_eq!(d.j1 * 5 + d.j2_folded, k);
            assert_eq!(nest_index(d.j2, 5), d.j2_folded);
        }
    }

    #[test]
    fn interval_rule_examples() {
        assert_eq!(interval_shift(0.0, 0, 1, 7, IntervalRule::ClampedAtZero), 0);
        assert_eq!(interval_shift(0.0, 0, 1, 7, IntervalRule::Nearest), 0);
        // fully correlated: x1 = x2 lands on K = c·i + ĩ and i2 = i1 is recovered
        let model = Source::unit(1.0).unwrap();
        for &c in &[1u32, 3, 7] {
            let p = Params::new(1.0, c, 1.0).unwrap();
            let t = Tables::build(1.0, &model).unwrap();
            let dec = NqDecoder::new(&p, &t).unwrap();
            for i in -6..=6 {
                let (y1, y2) = nq_encode(i as f64, i as f64, &p);
                let d = dec.indices(y1 + y2);
                assert_eq!((d.j1, d.j2), (i, i));
                // the clamped rule only fails once the true interval is negative
                let printed = dec.with_rule(IntervalRule::ClampedAtZero).indices(y1 + y2);
                let h = (c as i64 - 1) / 2;
                assert_eq!(printed.j2 == i, i >= -h, "c={c} i={i}");
            }
        }
    }

    #[test]
    fn noiseless_large_modulus_leaves_granular_noise() {
        let delta = 0.1;
        let model = Source::unit(0.0).unwrap();
        let channel = Channel::new(1e-9, 1.0).unwrap();
        let p = Params::with_power(delta, 201, &model, 1.0).unwrap();
        let r = nq_distortion(&p, &model, &channel).unwrap();
        for m in 1..=2 {
            let q = r.term(&format!("eps_q_{m}")).unwrap();
            assert!((q / (delta * delta / 12.0) - 1.0).abs() < 0.01);
            assert!(r.term(&format!("eps_c_{m}")).unwrap() < 1e-12);
            assert!(r.term(&format!("eps_n_{m}")).unwrap() < 1e-12);
        }
        assert!((r.d() / (delta * delta / 12.0) - 1.0).abs() < 0.01);
    }

    /// `E{(x − x̂)²}` summed cell by cell over all detected lattice points.
    fn direct_error_sum(p: &Params, t: &Tables, channel: &Channel, book: &NqCodebook<f64>) -> [f64; 2] {
        let r = p.a() / channel.sigma_n();
        let (k_min, k_max) = book.range();
        let c = p.c();
        let mut direct = t.granular_distortion();
        for (i1, i2, cell) in t.cells() {
            if cell.prob < 1e-300 {
                continue;
            }
            let k = c as i64 * i1 + nest_index(i2, c);
            for kp in k_min..=k_max {
                let lo = if kp == k_min { f64::NEG_INFINITY } else { (kp - k) as f64 * r - 0.5 * r };
                let hi = if kp == k_max { f64::INFINITY } else { (kp - k) as f64 * r + 0.5 * r };
                let w = normal_mass(lo, hi);
                let x = book.point(kp);
                direct[0] += cell.prob * w * (cell.mean[0] - x[0]).powi(2);
                direct[1] += cell.prob * w * (cell.mean[1] - x[1]).powi(2);
            }
        }
        direct
    }

    #[test]
    fn decomposition_equals_direct_error_sum() {
        // short reach (direct sums) and long reach (convolution) paths
        for &(rho, snr, delta, c) in &[(0.9, 20.0, 0.3, 5u32), (0.9, 0.0, 0.1, 3), (0.0, 5.0, 0.08, 7)] {
            let model = Source::unit(rho).unwrap();
            let channel = Channel::from_snr_db(snr, 1.0).unwrap();
            let p = Params::with_power(delta, c, &model, 1.0).unwrap();
            let t = Tables::build(delta, &model).unwrap();
            for est in [Estimator::Mmse, Estimator::CellMean(IntervalRule::Nearest)] {
                let analysis = nq_analyze(&p, &channel, &t, est).unwrap();
                let direct = direct_error_sum(&p, &t, &channel, analysis.codebook());
                let r = &analysis.report;
                assert!((r.d1 / direct[0] - 1.0).abs() < 1e-9, "{rho} {snr} {est:?}: {} vs {}", r.d1, direct[0]);
                assert!((r.d2 / direct[1] - 1.0).abs() < 1e-9, "{rho} {snr} {est:?}: {} vs {}", r.d2, direct[1]);
            }
        }
    }

    #[test]
    fn mmse_never_worse_than_cell_mean() {
        for &(rho, snr, delta, c) in &[(0.0, 25.0, 0.6, 9u32), (0.95, 30.0, 0.2, 3), (0.5, 10.0, 0.5, 3)] {
            let model = Source::unit(rho).unwrap();
            let channel = Channel::from_snr_db(snr, 1.0).unwrap();
            let p = Params::with_power(delta, c, &model, 1.0).unwrap();
            let t = Tables::build(delta, &model).unwrap();
            let mmse = nq_analyze(&p, &channel, &t, Estimator::Mmse).unwrap().report;
            let cell = nq_analyze(&p, &channel, &t, Estimator::CellMean(IntervalRule::Nearest)).unwrap().report;
            assert!(mmse.d1 <= cell.d1 * (1.0 + 1e-12) && mmse.d2 <= cell.d2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cell_mean_codebook_matches_decoder() {
        let model = Source::unit(0.7).unwrap();
        let p = Params::new(0.25, 5, 0.3).unwrap();
        let t = Tables::build(0.25, &model).unwrap();
        let dec = NqDecoder::new(&p, &t).unwrap();
        let book = NqCodebook::cell_means(&p, &t, IntervalRule::Nearest).unwrap();
        let mut s = RandomStream::from_seed(5);
        for _ in 0..10_000 {
            let z = 20.0 * s.standard_normal();
            assert_eq!(book.decode(z), dec.decode(z));
        }
    }

    #[test]
    fn analytical_distortion_matches_simulation() {
        let model = Source::unit(0.8).unwrap();
        let channel = Channel::from_snr_db(25.0, 1.0).unwrap();
        let p = Params::with_power(0.25, 5, &model, 1.0).unwrap();
        let t = Tables::build(0.25, &model).unwrap();
        for est in [Estimator::Mmse, Estimator::CellMean(IntervalRule::Nearest)] {
            let analysis = nq_analyze(&p, &channel, &t, est).unwrap();
            let r = &analysis.report;
            let mut s = RandomStream::from_seed(21);
            let n = 1_000_000;
            let (mut d1, mut d2) = (0.0, 0.0);
            for _ in 0..n {
                let (x1, x2) = sample_source_pair(&model, &mut s);
                let (y1, y2) = nq_encode(x1, x2, &p);
                let (h1, h2) = analysis.codebook().decode(gmac_transmit(y1, y2, &channel, &mut s));
                d1 += (x1 - h1).powi(2);
                d2 += (x2 - h2).powi(2);
            }
            let (d1, d2) = (d1 / n as f64, d2 / n as f64);
            assert!((d1 / r.d1 - 1.0).abs() < 0.03, "{d1} vs {}", r.d1);
            assert!((d2 / r.d2 - 1.0).abs() < 0.03, "{d2} vs {}", r.d2);
        }
    }
}
