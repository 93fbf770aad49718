//! Scalar quantizer linear coder.
//!
//! Encoder 1 scales `x1` by `ξ` and quantizes it with a midrise quantizer of
//! step `Δ`; the centroid is sent as is. Encoder 2 clips `x2` to `±κ` and
//! scales it by `α`. Each centroid therefore carries a short analog segment
//! on the channel, and the decoder first finds the segment, then reads the
//! analog part off it.
//!
//! Source-1 quantities (`Δ`, centroids, `ε_q`, `ε_Ch1`) live in the scaled
//! domain `ξ·x1`; reports convert them back to source units by dividing by
//! `ξ²`.

use crate::error::{Error, Result};
use crate::model::{ChannelModel, DistortionReport, SourceModel};
use crate::quad::integrate;
use crate::scalar::{gaussian_pdf, interval_moments, normal_pdf, normal_sf, round_index, Edge, Real};

/// Default ellipse and noise width parameters.
pub const DEFAULT_WIDTH: f64 = 4.0;

/// Which channel-output model applies for the anomaly analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryCase {
    /// `l1 > 2κ`: the clipper bounds each channel segment.
    ClipDominated,
    /// `l1 ≤ 2κ`: the conditional spread of `x2` given `x1` bounds it.
    CorrelationDominated,
}

/// Geometry of the source ellipse relative to the clipping level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry<T> {
    pub b: T,
    pub b_n: T,
    pub theta: T,
    /// Length of the `x2` range holding the significant mass given `x1`.
    pub l1: T,
    pub case: GeometryCase,
}

/// `ϑ(ρx) = min(1 + ρx/0.7, 2)`.
pub fn theta_schedule<T: Real>(rho_x: T) -> T {
    (T::one() + rho_x / T::lit(0.7)).min(T::two())
}

impl<T: Real> Geometry<T> {
    pub fn new(model: &SourceModel<T>, kappa: T) -> Self {
        Self::with_widths(T::lit(DEFAULT_WIDTH), T::lit(DEFAULT_WIDTH), model, kappa)
    }

    pub fn with_widths(b: T, b_n: T, model: &SourceModel<T>, kappa: T) -> Self {
        let theta = theta_schedule(model.rho_x());
        let l1 = T::two() * b * model.sigma_x() * (theta * (T::one() - model.rho_x())).sqrt();
        let case = if l1 > T::two() * kappa { GeometryCase::ClipDominated } else { GeometryCase::CorrelationDominated };
        Geometry { b, b_n, theta, l1, case }
    }

    /// Channel extent `α·min(2κ, l1)` of one segment.
    pub fn segment_length(&self, alpha: T, kappa: T) -> T {
        alpha * (T::two() * kappa).min(self.l1)
    }
}

/// Encoder and decoder parameters `(α, β, Δ, κ)` with the source-1 scaling `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqlcParams<T> {
    alpha: T,
    beta: T,
    delta: T,
    kappa: T,
    xi: T,
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

/// Checks that neighbouring channel segments do not overlap:
/// `Δ·(1 + α·ρx/ξ) > α·min(2κ, l1)`.
pub fn check_separability<T: Real>(alpha: T, delta: T, kappa: T, xi: T, model: &SourceModel<T>) -> Result<()> {
    let g = Geometry::new(model, kappa);
    let spacing = delta * (T::one() + alpha * model.rho_x() / xi);
    let segment = g.segment_length(alpha, kappa);
    if spacing > segment {
        Ok(())
    } else {
        Err(Error::GeometryViolation { spacing: spacing.as_f64(), segment: segment.as_f64() })
    }
}

impl<T: Real> SqlcParams<T> {
    /// Explicit parameters, including `ξ`.
    pub fn new(alpha: T, beta: T, delta: T, kappa: T, xi: T, model: &SourceModel<T>) -> Result<Self> {
        positive("alpha", alpha)?;
        positive("beta", beta)?;
        positive("delta", delta)?;
        positive("kappa", kappa)?;
        positive("xi", xi)?;
        check_separability(alpha, delta, kappa, xi, model)?;
        Ok(SqlcParams { alpha, beta, delta, kappa, xi })
    }

    /// Parameters with the step given relative to the scaled source,
    /// `u = Δ/(ξσx)`, and `ξ` chosen so that `P1 + P2 = 2·power`.
    pub fn from_normalized_step(alpha: T, beta: T, u: T, kappa: T, model: &SourceModel<T>, power: T) -> Result<Self> {
        positive("u", u)?;
        positive("kappa", kappa)?;
        let sigma = model.sigma_x();
        let budget = T::two() * power - clipped_power(alpha, kappa, sigma);
        if !(budget > T::zero()) {
            return Err(Error::InfeasiblePower { budget: budget.as_f64(), minimum: 0.0 });
        }
        Self::scaled(alpha, beta, u, kappa, model, budget, midrise_moments(u).0)
    }

    /// `ξ² = budget/(σx²·h)` with `h = E{q²}/(ξσx)²` already known.
    pub(crate) fn scaled(alpha: T, beta: T, u: T, kappa: T, model: &SourceModel<T>, budget: T, h: T) -> Result<Self> {
        let sigma = model.sigma_x();
        let xi = (budget / h).sqrt() / sigma;
        Self::new(alpha, beta, u * xi * sigma, kappa, xi, model)
    }

    /// Parameters with an absolute step `Δ`; `ξ` is solved so that
    /// `P1 + P2 = 2·power`.
    pub fn with_step(alpha: T, beta: T, delta: T, kappa: T, model: &SourceModel<T>, power: T) -> Result<Self> {
        positive("delta", delta)?;
        positive("kappa", kappa)?;
        let sigma = model.sigma_x();
        let budget = T::two() * power - clipped_power(alpha, kappa, sigma);
        // as ξ → 0 every sample lands on ±Δ/2
        let minimum = delta * delta / T::lit(4.0);
        if !(budget > minimum) {
            return Err(Error::InfeasiblePower { budget: budget.as_f64(), minimum: minimum.as_f64() });
        }
        let p1 = |xi: T| {
            let s = xi * sigma;
            s * s * midrise_moments(delta / s).0
        };
        let mut hi = budget.sqrt() / sigma;
        while p1(hi) < budget {
            hi *= T::two();
        }
        let mut lo = hi * T::half();
        while p1(lo) > budget && lo > T::lit(1e-300) {
            lo *= T::half();
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if p1(mid) < budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        Self::new(alpha, beta, delta, kappa, (lo * hi).sqrt(), model)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn xi(&self) -> T {
        self.xi
    }

    /// Same encoder with a different receiver gain.
    pub fn with_beta(mut self, beta: T) -> Result<Self> {
        positive("beta", beta)?;
        self.beta = beta;
        Ok(self)
    }

    /// `Δ/(ξσx)`.
    pub fn normalized_step(&self, sigma_x: T) -> T {
        self.delta / (self.xi * sigma_x)
    }
}

const FINE_STEP: f64 = 0.05;

/// `(E{q²}, E{(t − q)²})` for `t ~ N(0, 1)` and the midrise quantizer of
/// step `u` with centroids `(i + ½)u`.
///
/// Below `u = 0.05` the closed forms `1 + u²/12` and `u²/12` are used; their
/// error is of order `exp(−2π²/u²)`.
pub fn midrise_moments<T: Real>(u: T) -> (T, T) {
    if u < T::lit(FINE_STEP) {
        let e = u * u / T::lit(12.0);
        return (T::one() + e, e);
    }
    let cells = (T::lit(10.0) / u).ceil().to_i64().unwrap_or(1).clamp(1, 10_000_000);
    let mut lo = Edge::new(T::zero());
    let mut h = T::zero();
    let mut e = T::zero();
    for i in 0..cells {
        let hi = Edge::new(u * T::lit((i + 1) as f64));
        let centre = u * (T::lit(i as f64) + T::half());
        let (p, _, m2) = interval_moments(-centre, T::one(), &lo, &hi);
        h += p * centre * centre;
        e += m2;
        lo = hi;
    }
    (T::two() * h, T::two() * e)
}

/// `Pr{x2 ≥ κ}` for `x2 ~ N(0, σx²)`.
pub fn clip_tail_probability<T: Real>(kappa: T, sigma_x: T) -> T {
    normal_sf(kappa / sigma_x)
}

/// `E{(α·clip(x2))²}`.
pub fn clipped_power<T: Real>(alpha: T, kappa: T, sigma_x: T) -> T {
    let t = kappa / sigma_x;
    let q = normal_sf(t);
    let s2 = sigma_x * sigma_x;
    alpha
        * alpha
        * (s2 * (T::one() - T::two() * q) - T::two() * kappa * sigma_x * normal_pdf(t) + T::two() * kappa * kappa * q)
}

/// `E{(x2 − clip(x2))²}`.
pub fn clip_distortion<T: Real>(kappa: T, sigma_x: T) -> T {
    let t = kappa / sigma_x;
    T::two() * ((sigma_x * sigma_x + kappa * kappa) * normal_sf(t) - kappa * sigma_x * normal_pdf(t))
}

/// Receiver gain minimizing `σx²(1 − αβ)² + β²σn²`.
pub fn optimal_beta<T: Real>(alpha: T, sigma_x2: T, sigma_n2: T) -> T {
    alpha * sigma_x2 / (alpha * alpha * sigma_x2 + sigma_n2)
}

pub fn sqlc_encode<T: Real>(x1: T, x2: T, params: &SqlcParams<T>) -> (T, T) {
    let d = params.delta;
    let i = round_index(params.xi * x1 / d - T::half());
    let y1 = d * (T::lit(i as f64) + T::half());
    let y2 = params.alpha * x2.max(-params.kappa).min(params.kappa);
    (y1, y2)
}

/// `(P1, P2)`; `P1` is the power of the centroids of the scaled source.
pub fn sqlc_power<T: Real>(params: &SqlcParams<T>, model: &SourceModel<T>) -> (T, T) {
    let sigma = model.sigma_x();
    let s = params.xi * sigma;
    let (h, _) = midrise_moments(params.delta / s);
    (s * s * h, clipped_power(params.alpha, params.kappa, sigma))
}

/// Midpoint of the channel segment attached to centroid `q`.
pub fn segment_mean<T: Real>(q: T, params: &SqlcParams<T>, rho_x: T) -> T {
    q * (T::one() + params.alpha * rho_x / params.xi)
}

/// Sequential decoder with the conditional-mean refinement for source 2.
#[derive(Debug, Clone, Copy)]
pub struct SqlcDecoder<T> {
    params: SqlcParams<T>,
    sigma: T,
    rho: T,
    spacing: T,
    max_index: i64,
    noise_eff2: T,
}

impl<T: Real> SqlcDecoder<T> {
    pub fn new(params: &SqlcParams<T>, model: &SourceModel<T>) -> Self {
        let sigma = model.sigma_x();
        let rho = model.rho_x();
        let p = *params;
        let spacing = p.delta * (T::one() + p.alpha * rho / p.xi);
        let max_index = (T::lit(8.0) * sigma * p.xi / p.delta).ceil().to_i64().unwrap_or(1).max(1);
        // the noise level for which β would be the linear MMSE gain
        let s2 = sigma * sigma;
        let noise_eff2 = (p.alpha * s2 / p.beta - p.alpha * p.alpha * s2).max(T::zero());
        SqlcDecoder { params: p, sigma, rho, spacing, max_index, noise_eff2 }
    }

    /// Index `n` of the detected centroid `q = Δ(n + ½)`; midway outputs go
    /// to the lower index.
    pub fn centroid_index(&self, z: T) -> i64 {
        let n =
            (z / self.spacing - T::one()).ceil().to_i64().unwrap_or(if z > T::zero() { i64::MAX } else { i64::MIN });
        n.clamp(-self.max_index, self.max_index - 1)
    }

    /// `(g1(z), g2(z)) = (q, β(z − q))` before any refinement.
    pub fn raw(&self, z: T) -> (T, T) {
        let q = self.params.delta * (T::lit(self.centroid_index(z) as f64) + T::half());
        (q, self.params.beta * (z - q))
    }

    pub fn decode(&self, z: T) -> (T, T) {
        let p = &self.params;
        let n = self.centroid_index(z);
        let q = p.delta * (T::lit(n as f64) + T::half());
        let x1_hat = q / p.xi;
        if self.rho == T::zero() {
            return (x1_hat, p.beta * (z - q));
        }
        // x1 lies in the source-domain cell of the detected centroid
        let width = p.delta / p.xi;
        let lo = T::lit(n as f64) * width;
        let centre = lo + width * T::half();
        let (mass, m1, m2) =
            interval_moments(-centre, self.sigma, &Edge::new(lo / self.sigma), &Edge::new((lo + width) / self.sigma));
        let (mean1, var1) = if mass > T::lit(1e-280) {
            let m = m1 / mass;
            (centre + m, (m2 / mass - m * m).max(T::zero()))
        } else {
            (centre, width * width / T::lit(12.0))
        };
        let m = self.rho * mean1;
        let v = self.sigma * self.sigma * (T::one() - self.rho * self.rho) + self.rho * self.rho * var1;
        let denom = p.alpha * p.alpha * v + self.noise_eff2;
        let gain = if denom > T::zero() { p.alpha * v / denom } else { T::one() / p.alpha };
        (x1_hat, m + gain * (z - q - p.alpha * m))
    }
}

pub fn sqlc_decode<T: Real>(z: T, params: &SqlcParams<T>, model: &SourceModel<T>) -> (T, T) {
    SqlcDecoder::new(params, model).decode(z)
}

/// Channel-output density around one centroid when clipping bounds the
/// segment: clipped Gaussian `α·x2` convolved with the noise.
pub fn channel_output_pdf_case1<T: Real>(
    z2: T,
    mu: T,
    params: &SqlcParams<T>,
    model: &SourceModel<T>,
    channel: &ChannelModel<T>,
) -> T {
    let sigma = model.sigma_x();
    let sn = channel.sigma_n();
    let a = params.alpha;
    let k = params.kappa / sigma;
    let d = z2 - mu;
    // y = ασx·t
    let cont =
        integrate(|t: T| normal_pdf(t) * gaussian_pdf(d - a * sigma * t, sn), -k, k, T::lit(1e-12), T::lit(1e-12))
            .value;
    let ak = a * params.kappa;
    cont + clip_tail_probability(params.kappa, sigma) * (gaussian_pdf(d - ak, sn) + gaussian_pdf(d + ak, sn))
}

/// Channel-output density around one centroid when the source correlation
/// bounds the segment.
pub fn channel_output_pdf_case2<T: Real>(
    z2: T,
    mu: T,
    params: &SqlcParams<T>,
    model: &SourceModel<T>,
    channel: &ChannelModel<T>,
) -> T {
    gaussian_pdf(z2 - mu, case2_std(params, model, channel))
}

fn case2_std<T: Real>(params: &SqlcParams<T>, model: &SourceModel<T>, channel: &ChannelModel<T>) -> T {
    let rho = model.rho_x();
    let a = params.alpha;
    (a * a * model.sigma_x2() * (T::one() - rho * rho) + channel.sigma_n2()).sqrt()
}

/// Half the distance between neighbouring segment midpoints.
fn threshold_level<T: Real>(params: &SqlcParams<T>, rho_x: T) -> T {
    params.delta * T::half() * (T::one() + params.alpha * rho_x / params.xi)
}

/// Probability that the channel output leaves the decision interval of the
/// transmitted centroid.
pub fn threshold_probability<T: Real>(
    params: &SqlcParams<T>,
    model: &SourceModel<T>,
    channel: &ChannelModel<T>,
    geometry: &Geometry<T>,
) -> T {
    let thr = threshold_level(params, model.rho_x());
    match geometry.case {
        GeometryCase::CorrelationDominated => T::two() * normal_sf(thr / case2_std(params, model, channel)),
        GeometryCase::ClipDominated => {
            // ∫_thr^∞ p(z) dz with the z-integral done in closed form
            let sigma = model.sigma_x();
            let sn = channel.sigma_n();
            let a = params.alpha;
            let k = params.kappa / sigma;
            let f = |t: T| normal_pdf(t) * normal_sf((thr - a * sigma * t) / sn);
            let tol = (T::lit(1e-16), T::lit(1e-10));
            // the integrand steps up where α·σx·t crosses the threshold
            let knee = thr / (a * sigma);
            let cont = if knee > -k && knee < k {
                integrate(f, -k, knee, tol.0, tol.1).value + integrate(f, knee, k, tol.0, tol.1).value
            } else {
                integrate(f, -k, k, tol.0, tol.1).value
            };
            let ak = a * params.kappa;
            let po = clip_tail_probability(params.kappa, sigma);
            T::two() * (cont + po * (normal_sf((thr - ak) / sn) + normal_sf((thr + ak) / sn)))
        }
    }
}

/// Analytical distortion.
///
/// Source 1: `ε_q` (granular noise) and `ε_Ch1 = Δ²·p_th` (jumps to the
/// neighbouring centroid), both divided by `ξ²`. Source 2: clipping `ε_κ`,
/// additive channel noise `ε_Ch2` and anomalies `ε_an`.
pub fn sqlc_distortion<T: Real>(
    params: &SqlcParams<T>,
    model: &SourceModel<T>,
    channel: &ChannelModel<T>,
    geometry: &Geometry<T>,
) -> Result<DistortionReport<T>> {
    let spacing = params.delta * (T::one() + params.alpha * model.rho_x() / params.xi);
    let segment = geometry.segment_length(params.alpha, params.kappa);
    if !(spacing > segment) {
        return Err(Error::GeometryViolation { spacing: spacing.as_f64(), segment: segment.as_f64() });
    }
    let (_, e) = midrise_moments(params.normalized_step(model.sigma_x()));
    Ok(distortion_with_moments(params, model, channel, geometry, e))
}

/// [`sqlc_distortion`] after the separability check, with the normalized
/// granular noise `e = E{(t − q)²}` of the scaled quantizer supplied.
pub(crate) fn distortion_with_moments<T: Real>(
    params: &SqlcParams<T>,
    model: &SourceModel<T>,
    channel: &ChannelModel<T>,
    geometry: &Geometry<T>,
    e: T,
) -> DistortionReport<T> {
    let sigma = model.sigma_x();
    let s2 = model.sigma_x2();
    let xi2 = params.xi * params.xi;
    let p_th = threshold_probability(params, model, channel, geometry);

    let eps_q = s2 * e;
    let eps_ch1 = params.delta * params.delta * p_th / xi2;
    let eps_kappa = clip_distortion(params.kappa, sigma);
    let ab = T::one() - params.alpha * params.beta;
    let eps_ch2 = s2 * ab * ab + params.beta * params.beta * channel.sigma_n2();
    let eps_an = match geometry.case {
        GeometryCase::ClipDominated => T::lit(4.0) * p_th * params.kappa * params.kappa,
        GeometryCase::CorrelationDominated => {
            let gamma = (geometry.l1 - params.delta).max(T::zero());
            p_th * gamma * gamma
        }
    };
    DistortionReport::with_terms(
        eps_q + eps_ch1,
        eps_kappa + eps_ch2 + eps_an,
        vec![
            ("eps_q", eps_q),
            ("eps_ch1", eps_ch1),
            ("eps_kappa", eps_kappa),
            ("eps_ch2", eps_ch2),
            ("eps_an", eps_an),
        ],
    )
}
