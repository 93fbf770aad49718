//! Monte Carlo validation: SDR estimation, SNR-mismatch sweeps, equal-power
//! time sharing and the NQ cross-term check.
//!
//! Samples are generated in chunks of [`CHUNK_LEN`]; chunk `k` always draws
//! from substream `(master_seed, 0, k)` in the order `v, w1, w2, n`, and the
//! per-chunk sums are merged in chunk order, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{gmac_transmit, sample_source_pair, ChannelModel, SourceModel};
use crate::nq::{nest_index, nq_analyze, quantize_index, Estimator, NqAnalysis, NqCodebook, NqParams, NqTables};
use crate::optimize::{optimize_sqlc, NqOptimizer};
use crate::rng::{RandomStream, CHUNK_LEN};
use crate::scalar::CompensatedSum;
use crate::sqlc::{sqlc_encode, SqlcDecoder, SqlcParams};

/// Smallest accepted sample count.
pub const MIN_SAMPLES: usize = 10_000;
pub const DEFAULT_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Nq,
    Sqlc,
    Uncoded,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nq => "nq",
            Scheme::Sqlc => "sqlc",
            Scheme::Uncoded => "uncoded",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nq" => Ok(Scheme::Nq),
            "sqlc" => Ok(Scheme::Sqlc),
            "uncoded" => Ok(Scheme::Uncoded),
            other => Err(Error::invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerMode {
    /// `P1 + P2 ≤ 2P`.
    #[default]
    Average,
    /// Encoder roles alternate between the two sources on even and odd
    /// samples, so each transmitter spends `(P1 + P2)/2` in the long run.
    EqualTimeSharing,
}

/// An encoder/decoder pair ready for simulation.
#[derive(Debug, Clone)]
pub enum Codec {
    Nq {
        params: NqParams<f64>,
        codebook: Arc<NqCodebook<f64>>,
    },
    Sqlc {
        params: SqlcParams<f64>,
        decoder: SqlcDecoder<f64>,
    },
    /// Both encoders send `g·x_m`; the decoder is the scalar MMSE estimator
    /// `E{x_m | z} = w·z`.
    Uncoded {
        gain: f64,
        weight: f64,
    },
}

impl Codec {
    /// NQ with the MMSE reconstruction designed for `design` noise.
    pub fn nq(params: &NqParams<f64>, model: &SourceModel<f64>, design: &ChannelModel<f64>) -> Result<Self> {
        let tables = NqTables::build(params.delta(), model)?;
        let analysis = nq_analyze(params, design, &tables, Estimator::Mmse)?;
        Ok(Codec::Nq { params: *params, codebook: Arc::new(analysis.codebook().clone()) })
    }

    pub fn sqlc(params: &SqlcParams<f64>, model: &SourceModel<f64>) -> Self {
        Codec::Sqlc { params: *params, decoder: SqlcDecoder::new(params, model) }
    }

    /// Uncoded transmission at power `design.power()` per encoder, decoder
    /// matched to `design` noise.
    pub fn uncoded(model: &SourceModel<f64>, design: &ChannelModel<f64>) -> Self {
        let s2 = model.sigma_x2();
        let gain = (design.power() / s2).sqrt();
        let one_p = 1.0 + model.rho_x();
        let weight = gain * s2 * one_p / (2.0 * gain * gain * s2 * one_p + design.sigma_n2());
        Codec::Uncoded { gain, weight }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            Codec::Nq { .. } => Scheme::Nq,
            Codec::Sqlc { .. } => Scheme::Sqlc,
            Codec::Uncoded { .. } => Scheme::Uncoded,
        }
    }

    #[inline]
    pub fn encode(&self, x1: f64, x2: f64) -> (f64, f64) {
        match self {
            Codec::Nq { params, .. } => crate::nq::nq_encode(x1, x2, params),
            Codec::Sqlc { params, .. } => sqlc_encode(x1, x2, params),
            Codec::Uncoded { gain, .. } => (gain * x1, gain * x2),
        }
    }

    #[inline]
    pub fn decode(&self, z: f64) -> (f64, f64) {
        match self {
            Codec::Nq { codebook, .. } => codebook.decode(z),
            Codec::Sqlc { decoder, .. } => decoder.decode(z),
            Codec::Uncoded { weight, .. } => (weight * z, weight * z),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub codec: Codec,
    pub model: SourceModel<f64>,
    pub channel: ChannelModel<f64>,
    pub n_samples: usize,
    pub master_seed: u64,
    pub power_mode: PowerMode,
}

impl SimulationConfig {
    pub fn new(codec: Codec, model: &SourceModel<f64>, channel: &ChannelModel<f64>) -> Self {
        SimulationConfig {
            codec,
            model: *model,
            channel: *channel,
            n_samples: DEFAULT_SAMPLES,
            master_seed: 0,
            power_mode: PowerMode::Average,
        }
    }

    pub fn with_samples(mut self, n_samples: usize) -> Result<Self> {
        if n_samples < MIN_SAMPLES {
            return Err(Error::invalid("n_samples", format!("need at least {MIN_SAMPLES}, got {n_samples}")));
        }
        self.n_samples = n_samples;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_power_mode(mut self, mode: PowerMode) -> Self {
        self.power_mode = mode;
        self
    }

    pub fn with_channel(mut self, channel: &ChannelModel<f64>) -> Self {
        self.channel = *channel;
        self
    }
}

/// One simulated operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub snr_db: f64,
    pub rho_x: f64,
    pub scheme: Scheme,
    pub sdr_db: f64,
    /// Standard error of `sdr_db` (delta method).
    pub sdr_se_db: f64,
    pub d1: f64,
    pub d2: f64,
    pub measured_p1: f64,
    pub measured_p2: f64,
    pub p1_se: f64,
    pub p2_se: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl SweepRecord {
    pub fn d(&self) -> f64 {
        0.5 * (self.d1 + self.d2)
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    e1: CompensatedSum,
    e2: CompensatedSum,
    e_sq: CompensatedSum,
    p1: CompensatedSum,
    p1_sq: CompensatedSum,
    p2: CompensatedSum,
    p2_sq: CompensatedSum,
}

impl Moments {
    fn merge(&mut self, o: &Moments) {
        self.e1.merge(&o.e1);
        self.e2.merge(&o.e2);
        self.e_sq.merge(&o.e_sq);
        self.p1.merge(&o.p1);
        self.p1_sq.merge(&o.p1_sq);
        self.p2.merge(&o.p2);
        self.p2_sq.merge(&o.p2_sq);
    }
}

fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK_LEN)
}

fn chunk_len(n: usize, chunk: usize) -> usize {
    (n - chunk * CHUNK_LEN).min(CHUNK_LEN)
}

fn run_chunk(config: &SimulationConfig, chunk: usize) -> Moments {
    let mut stream = RandomStream::new(config.master_seed, 0, chunk as u64);
    let mut m = Moments::default();
    let swap_odd = config.power_mode == PowerMode::EqualTimeSharing;
    // CHUNK_LEN is even, so sample parity is the parity within the chunk
    for k in 0..chunk_len(config.n_samples, chunk) {
        let (x1, x2) = sample_source_pair(&config.model, &mut stream);
        let swapped = swap_odd && k % 2 == 1;
        let (t1, t2, h1, h2);
        if swapped {
            let (a, b) = config.codec.encode(x2, x1);
            (t1, t2) = (b, a);
            let z = gmac_transmit(a, b, &config.channel, &mut stream);
            let (g1, g2) = config.codec.decode(z);
            (h1, h2) = (g2, g1);
        } else {
            (t1, t2) = config.codec.encode(x1, x2);
            let z = gmac_transmit(t1, t2, &config.channel, &mut stream);
            (h1, h2) = config.codec.decode(z);
        }
        let e1 = (x1 - h1) * (x1 - h1);
        let e2 = (x2 - h2) * (x2 - h2);
        let e = 0.5 * (e1 + e2);
        m.e1.add(e1);
        m.e2.add(e2);
        m.e_sq.add(e * e);
        let (q1, q2) = (t1 * t1, t2 * t2);
        m.p1.add(q1);
        m.p1_sq.add(q1 * q1);
        m.p2.add(q2);
        m.p2_sq.add(q2 * q2);
    }
    m
}

fn standard_error(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (var / n).sqrt()
}

/// Simulates `config.n_samples` channel uses.
pub fn simulate(config: &SimulationConfig) -> Result<SweepRecord> {
    if config.n_samples < MIN_SAMPLES {
        return Err(Error::invalid("n_samples", format!("need at least {MIN_SAMPLES}")));
    }
    let chunks: Vec<Moments> =
        (0..chunk_count(config.n_samples)).into_par_iter().map(|c| run_chunk(config, c)).collect();
    let mut total = Moments::default();
    for m in &chunks {
        total.merge(m);
    }
    let n = config.n_samples as f64;
    let d1 = total.e1.value() / n;
    let d2 = total.e2.value() / n;
    let d = 0.5 * (d1 + d2);
    let sdr_db = crate::model::sdr_db(config.model.sigma_x2(), d)?;
    let d_se = standard_error(d * n, total.e_sq.value(), n);
    Ok(SweepRecord {
        snr_db: config.channel.snr_db(),
        rho_x: config.model.rho_x(),
        scheme: config.codec.scheme(),
        sdr_db,
        sdr_se_db: 10.0 / std::f64::consts::LN_10 * d_se / d,
        d1,
        d2,
        measured_p1: total.p1.value() / n,
        measured_p2: total.p2.value() / n,
        p1_se: standard_error(total.p1.value(), total.p1_sq.value(), n),
        p2_se: standard_error(total.p2.value(), total.p2_sq.value(), n),
        n_samples: config.n_samples,
        seed: config.master_seed,
    })
}

/// Optimizes `scheme` once at `design_snr_db`, then simulates the fixed
/// encoder and decoder at every SNR of `eval_grid`.
pub fn robustness_sweep(
    design_snr_db: f64,
    eval_grid: &[f64],
    scheme: Scheme,
    model: &SourceModel<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    let design = ChannelModel::from_snr_db(design_snr_db, 1.0)?;
    let codec = design_codec(scheme, model, &design)?;
    robustness_with_codec(&codec, model, eval_grid, n_samples, seed)
}

/// Optimized codec for one operating point.
pub fn design_codec(scheme: Scheme, model: &SourceModel<f64>, design: &ChannelModel<f64>) -> Result<Codec> {
    match scheme {
        Scheme::Nq => {
            let r = NqOptimizer::new(model).optimize(design)?;
            Codec::nq(&r.params, model, design)
        }
        Scheme::Sqlc => Ok(Codec::sqlc(&optimize_sqlc(model, design)?.params, model)),
        Scheme::Uncoded => Ok(Codec::uncoded(model, design)),
    }
}

/// Simulates a fixed codec over `eval_grid` (power 1).
pub fn robustness_with_codec(
    codec: &Codec,
    model: &SourceModel<f64>,
    eval_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    eval_grid
        .iter()
        .map(|&snr| {
            let channel = ChannelModel::from_snr_db(snr, 1.0)?;
            let config = SimulationConfig::new(codec.clone(), model, &channel).with_samples(n_samples)?.with_seed(seed);
            simulate(&config)
        })
        .collect()
}

/// Time-shared simulation; `config.power_mode` must be
/// [`PowerMode::EqualTimeSharing`].
pub fn time_share_simulate(config: &SimulationConfig) -> Result<SweepRecord> {
    if config.power_mode != PowerMode::EqualTimeSharing {
        return Err(Error::invalid("power_mode", "time sharing needs the equal-power mode"));
    }
    simulate(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeShareComparison {
    pub average: SweepRecord,
    pub time_shared: SweepRecord,
    /// `SDR(average) − SDR(time shared)` in dB.
    pub loss_db: f64,
}

/// Runs the same codec and seed in both power modes.
pub fn time_share_loss(config: &SimulationConfig) -> Result<TimeShareComparison> {
    let average = simulate(&config.clone().with_power_mode(PowerMode::Average))?;
    let time_shared = time_share_simulate(&config.clone().with_power_mode(PowerMode::EqualTimeSharing))?;
    let loss_db = average.sdr_db - time_shared.sdr_db;
    Ok(TimeShareComparison { average, time_shared, loss_db })
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Expansion of the NQ error `x − x̂ = (x − x̄) + (x̄ − x̃) + (x̃ − x̂)` for one
/// source: the three squared terms, the three doubled cross terms and the
/// total squared error, each estimated from the same samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orthogonality {
    /// `E{(x − x̄)²}`, `E{(x̄ − x̃)²}`, `E{(x̃ − x̂)²}`.
    pub components: [Estimate; 3],
    /// `2E{(x − x̄)(x̄ − x̃)}`, `2E{(x − x̄)(x̃ − x̂)}`, `2E{(x̄ − x̃)(x̃ − x̂)}`.
    pub cross: [Estimate; 3],
    pub total: Estimate,
}

/// Estimates the NQ cross terms per source with the MMSE reconstruction.
pub fn orthogonality_check(
    params: &NqParams<f64>,
    model: &SourceModel<f64>,
    channel: &ChannelModel<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<[Orthogonality; 2]> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid("n_samples", format!("need at least {MIN_SAMPLES}")));
    }
    let tables = NqTables::build(params.delta(), model)?;
    let analysis = nq_analyze(params, channel, &tables, Estimator::Mmse)?;
    // per source: 3 components, 3 cross terms, total; sums and sums of squares
    type Acc = [[(CompensatedSum, CompensatedSum); 7]; 2];
    let run = |chunk: usize| -> Acc {
        let mut acc: Acc = Default::default();
        let mut stream = RandomStream::new(seed, 0, chunk as u64);
        for _ in 0..chunk_len(n_samples, chunk) {
            let (x1, x2) = sample_source_pair(model, &mut stream);
            let (y1, y2) = crate::nq::nq_encode(x1, x2, params);
            let z = gmac_transmit(y1, y2, channel, &mut stream);
            let (i1, i2) = (quantize_index(x1, params.delta()), quantize_index(x2, params.delta()));
            let bar = tables.cell_mean(i1, i2);
            let tilde = collapsed(&analysis, params.c(), i1, nest_index(i2, params.c()));
            let hat = analysis.codebook().decode(z);
            let hat = [hat.0, hat.1];
            for (m, &x) in [x1, x2].iter().enumerate() {
                let (a, b, c) = (x - bar[m], bar[m] - tilde[m], tilde[m] - hat[m]);
                let values = [a * a, b * b, c * c, 2.0 * a * b, 2.0 * a * c, 2.0 * b * c, (x - hat[m]).powi(2)];
                for (slot, v) in acc[m].iter_mut().zip(values) {
                    slot.0.add(v);
                    slot.1.add(v * v);
                }
            }
        }
        acc
    };
    let parts: Vec<Acc> = (0..chunk_count(n_samples)).into_par_iter().map(run).collect();
    let mut total: Acc = Default::default();
    for p in &parts {
        for m in 0..2 {
            for j in 0..7 {
                total[m][j].0.merge(&p[m][j].0);
                total[m][j].1.merge(&p[m][j].1);
            }
        }
    }
    let n = n_samples as f64;
    let est = |s: &(CompensatedSum, CompensatedSum)| Estimate {
        mean: s.0.value() / n,
        se: standard_error(s.0.value(), s.1.value(), n),
    };
    let per_source = |m: usize| Orthogonality {
        components: [est(&total[m][0]), est(&total[m][1]), est(&total[m][2])],
        cross: [est(&total[m][3]), est(&total[m][4]), est(&total[m][5])],
        total: est(&total[m][6]),
    };
    Ok([per_source(0), per_source(1)])
}

/// `x̃` for a sampled cell. Cells beyond the tabulated range (total mass
/// below 1e-8) fall back to the reconstruction of their lattice point.
fn collapsed(analysis: &NqAnalysis<f64>, c: u32, i1: i64, i2_folded: i64) -> [f64; 2] {
    if analysis.class_probability(i1, i2_folded) > 0.0 {
        analysis.collapsed_mean(i1, i2_folded)
    } else {
        analysis.codebook().point(c as i64 * i1 + i2_folded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{opta_sdr_db, uncoded_sdr};

    fn unit(rho: f64) -> SourceModel<f64> {
        SourceModel::unit(rho).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::Nq, Scheme::Sqlc, Scheme::Uncoded] {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("lattice".parse::<Scheme>().is_err());
    }

    #[test]
    fn too_few_samples_rejected() {
        let model = unit(0.5);
        let ch = ChannelModel::from_snr_db(0.0, 1.0).unwrap();
        assert!(SimulationConfig::new(Codec::uncoded(&model, &ch), &model, &ch).with_samples(100).is_err());
    }

    #[test]
    fn uncoded_matches_closed_form() {
        let model = unit(0.5);
        let ch = ChannelModel::from_snr_db(-3.0, 1.0).unwrap();
        let cfg =
            SimulationConfig::new(Codec::uncoded(&model, &ch), &model, &ch).with_samples(200_000).unwrap().with_seed(4);
        let r = simulate(&cfg).unwrap();
        let expect = 10.0 * uncoded_sdr(1.0, ch.sigma_n2(), 0.5).log10();
        assert!((r.sdr_db - expect).abs() < 3.0 * r.sdr_se_db + 1e-3, "{} vs {expect}", r.sdr_db);
        assert!((expect - opta_sdr_db(-3.0, 0.5)).abs() < 1e-9);
        assert!((r.measured_p1 - 1.0).abs() < 3.0 * r.p1_se);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let model = unit(0.8);
        let ch = ChannelModel::from_snr_db(20.0, 1.0).unwrap();
        let p = SqlcParams::with_step(0.15, 5.0, 0.8, 3.0, &model, 1.0).unwrap();
        let cfg = SimulationConfig::new(Codec::sqlc(&p, &model), &model, &ch)
            .with_samples(3 * CHUNK_LEN + 17)
            .unwrap()
            .with_seed(99);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| simulate(&cfg)).unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| simulate(&cfg)).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.sdr_db.to_bits(), simulate(&cfg).unwrap().sdr_db.to_bits());
    }

    #[test]
    fn time_sharing_balances_power() {
        let model = unit(0.0);
        let ch = ChannelModel::from_snr_db(30.0, 1.0).unwrap();
        let p = NqParams::with_power(0.8, 9, &model, 1.0).unwrap();
        let codec = Codec::nq(&p, &model, &ch).unwrap();
        let cfg = SimulationConfig::new(codec, &model, &ch).with_samples(200_000).unwrap();
        assert!(time_share_simulate(&cfg).is_err());
        let cmp = time_share_loss(&cfg).unwrap();
        let a = &cmp.average;
        assert!(a.measured_p1 > 5.0 * a.measured_p2);
        let t = &cmp.time_shared;
        let diff = t.measured_p1 - t.measured_p2;
        let se = (t.p1_se * t.p1_se + t.p2_se * t.p2_se).sqrt();
        assert!(diff.abs() < 3.0 * se + 0.01, "{diff} {se}");
        assert!((t.measured_p1 + t.measured_p2 - 2.0).abs() < 0.05);
    }

    #[test]
    fn noiseless_nq_has_no_channel_term() {
        let model = unit(0.95);
        let ch = ChannelModel::new(1e-12, 1.0).unwrap();
        let p = NqParams::with_power(0.3, 5, &model, 1.0).unwrap();
        let o = orthogonality_check(&p, &model, &ch, 50_000, 3).unwrap();
        for s in &o {
            assert_eq!(s.components[2].mean, 0.0);
            assert_eq!(s.cross[1].mean, 0.0);
            assert_eq!(s.cross[2].mean, 0.0);
        }
    }
}
