//! Experiment orchestration: every command computes all of its rows first
//! and only then writes files, so a failure leaves no partial output.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use gmac_jscc::bounds::{opta_sdr, uncoded_sdr};
use gmac_jscc::export::{write_param_csv, write_sweep_csv, ExponentialFit, ParamRow, SWEEP_HEADER};
use gmac_jscc::model::db_to_linear;
use gmac_jscc::montecarlo::{simulate, time_share_loss, Codec, Scheme, SimulationConfig, SweepRecord};
use gmac_jscc::optimize::{high_snr_gap_db, optimize_sqlc, NqOptimizer};
use gmac_jscc::sqlc::optimal_beta;
use gmac_jscc::{ChannelModel, Error, NqParams, SourceModel, SqlcParams};

use crate::plot::{Plot, Series};
use crate::spec::{Command, ExperimentSpec, Output, SpecError};

#[derive(Debug)]
pub enum RunError {
    Spec(SpecError),
    Numerical(Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Spec(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Spec(e) => write!(f, "invalid experiment: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "output failed: {e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Output(msg) => RunError::Io(msg),
            other => RunError::Numerical(other),
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// One file to write: a relative name (or the main output) and its content.
struct Artifact {
    path: Option<PathBuf>,
    bytes: Vec<u8>,
}

pub fn run(spec: &ExperimentSpec) -> Result<()> {
    let mut artifacts = match spec.command {
        Command::Bound => bound(spec)?,
        Command::Optimize => optimize(spec)?,
        Command::Simulate | Command::Sweep => sweep(spec)?,
        Command::Robustness => robustness(spec)?,
        Command::Timeshare => timeshare(spec)?,
        Command::Gapcurve => gapcurve(spec)?,
    };
    let main = artifacts.remove(0);
    match &spec.output {
        Output::Stdout => io::stdout().lock().write_all(&main.bytes)?,
        Output::File(path) => write_file(path, &main.bytes)?,
    }
    for a in artifacts {
        if let Some(name) = a.path {
            write_file(&spec.dir.join(name), &a.bytes)?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main_csv(bytes: Vec<u8>) -> Artifact {
    Artifact { path: None, bytes }
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

/// Secondary table named after the main output, e.g. `sweep_sqlc_fit.csv`.
fn sibling(spec: &ExperimentSpec, suffix: &str) -> PathBuf {
    let stem = match &spec.output {
        Output::File(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()),
        Output::Stdout => None,
    }
    .unwrap_or_else(|| format!("{}_{}", spec.command.name(), spec.label()));
    PathBuf::from(format!("{stem}_{suffix}.csv"))
}

fn plot_artifact(spec: &ExperimentSpec, rho: &str, plot: Plot) -> Artifact {
    let name = format!("{}_{}_{}.svg", spec.command.name(), spec.label(), rho);
    Artifact { path: Some(PathBuf::from(name)), bytes: plot.to_svg().into_bytes() }
}

fn channel(spec: &ExperimentSpec, snr_db: f64) -> Result<ChannelModel> {
    Ok(ChannelModel::from_snr_db(snr_db, spec.power)?)
}

fn bound_db(spec: &ExperimentSpec, rho: f64, snr_db: f64) -> f64 {
    let snr = db_to_linear(snr_db);
    opta_sdr(spec.power, spec.power / snr, rho).sdr_db()
}

fn uncoded_db(spec: &ExperimentSpec, rho: f64, snr_db: f64) -> f64 {
    let snr = db_to_linear(snr_db);
    10.0 * uncoded_sdr(spec.power, spec.power / snr, rho).log10()
}

fn progress(spec: &ExperimentSpec, rho: f64, snr: f64, what: &str, value: f64) {
    eprintln!("{} {} rho={rho} snr={snr} dB: {what} {value:.3} dB", spec.command.name(), spec.label());
}

/// Builds optimized codecs for one source model. At full correlation the
/// optimizers have nothing to trade off, so the limiting designs are used:
/// an almost continuous SQLC quantizer with a linear second encoder, or an
/// NQ with `c = 1`.
struct Designer {
    model: SourceModel,
    nq: NqOptimizer,
}

impl Designer {
    fn new(spec: &ExperimentSpec, rho: f64) -> Result<Self> {
        let model = SourceModel::new(spec.sigma_x, rho)?;
        Ok(Designer { nq: NqOptimizer::new(&model), model })
    }

    fn codec(&self, scheme: Scheme, channel: &ChannelModel) -> Result<Codec> {
        let model = &self.model;
        let full = model.rho_x() >= 1.0;
        Ok(match scheme {
            Scheme::Uncoded => Codec::uncoded(model, channel),
            Scheme::Sqlc if full => {
                let beta = optimal_beta(1.0, model.sigma_x2(), channel.sigma_n2());
                let delta = 1e-3 * model.sigma_x();
                let kappa = 12.0 * model.sigma_x();
                Codec::sqlc(&SqlcParams::with_step(1.0, beta, delta, kappa, model, channel.power())?, model)
            }
            Scheme::Sqlc => Codec::sqlc(&optimize_sqlc(model, channel)?.params, model),
            Scheme::Nq if full => {
                let params = NqParams::with_power(1e-3 * model.sigma_x(), 1, model, channel.power())?;
                Codec::nq(&params, model, channel)?
            }
            Scheme::Nq => Codec::nq(&self.nq.optimize(channel)?.params, model, channel)?,
        })
    }

    fn config(&self, spec: &ExperimentSpec, codec: Codec, channel: &ChannelModel) -> Result<SimulationConfig> {
        Ok(SimulationConfig::new(codec, &self.model, channel).with_samples(spec.n_samples)?.with_seed(spec.seed))
    }
}

fn bound(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    let mut buf = Vec::new();
    let mut w = csv_writer(&mut buf);
    w.write_record(SWEEP_HEADER)?;
    for &rho in &spec.rho_x {
        for &snr in &spec.snr_db {
            let sdr = bound_db(spec, rho, snr);
            let d = spec.sigma_x * spec.sigma_x / db_to_linear(sdr);
            w.write_record([
                snr.to_string(),
                rho.to_string(),
                "bound".to_string(),
                sdr.to_string(),
                "0".to_string(),
                d.to_string(),
                d.to_string(),
                spec.power.to_string(),
                spec.power.to_string(),
                "0".to_string(),
                "0".to_string(),
            ])?;
        }
    }
    w.flush()?;
    drop(w);
    let mut out = vec![main_csv(buf)];
    if spec.plot {
        for &rho in &spec.rho_x {
            let plot = Plot::new(format!("Bound, rho = {rho}"), "SNR [dB]", "SDR [dB]")
                .with(Series::line("bound", spec.snr_db.iter().map(|&s| (s, bound_db(spec, rho, s))).collect()))
                .with(
                    Series::line("uncoded", spec.snr_db.iter().map(|&s| (s, uncoded_db(spec, rho, s))).collect())
                        .dashed(),
                );
            out.push(plot_artifact(spec, &rho.to_string(), plot));
        }
    }
    Ok(out)
}

fn optimize(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    let mut rows = Vec::new();
    for &rho in &spec.rho_x {
        let designer = Designer::new(spec, rho)?;
        let sigma_x2 = designer.model.sigma_x2();
        for &snr in &spec.snr_db {
            let ch = channel(spec, snr)?;
            let row = match spec.scheme {
                Scheme::Nq => ParamRow::nq(rho, snr, sigma_x2, &designer.nq.optimize(&ch)?),
                Scheme::Sqlc => ParamRow::sqlc(rho, snr, sigma_x2, &optimize_sqlc(&designer.model, &ch)?),
                Scheme::Uncoded => unreachable!("rejected when the spec is resolved"),
            };
            progress(spec, rho, snr, "SDR", row.sdr_db);
            rows.push(row);
        }
    }
    let mut buf = Vec::new();
    write_param_csv(&mut buf, &rows)?;

    let mut fits = Vec::new();
    let mut fit_buf = Vec::new();
    let mut w = csv_writer(&mut fit_buf);
    w.write_record(["rho_x", "scheme", "parameter", "ln_a", "k", "rms"])?;
    for &rho in &spec.rho_x {
        let at_rho: Vec<&ParamRow> = rows.iter().filter(|r| r.rho_x == rho).collect();
        let snr: Vec<f64> = at_rho.iter().map(|r| r.snr_db).collect();
        let columns: Vec<(&str, Vec<Option<f64>>)> = vec![
            ("delta", at_rho.iter().map(|r| Some(r.delta)).collect()),
            ("a", at_rho.iter().map(|r| r.a).collect()),
            ("alpha", at_rho.iter().map(|r| r.alpha).collect()),
            ("beta", at_rho.iter().map(|r| r.beta).collect()),
            ("kappa", at_rho.iter().map(|r| r.kappa).collect()),
        ];
        for (name, values) in columns {
            let Some(values) = values.into_iter().collect::<Option<Vec<f64>>>() else {
                continue;
            };
            // too few or non-positive values: no fit for this parameter
            let Ok(fit) = ExponentialFit::fit(&snr, &values) else {
                continue;
            };
            w.write_record([
                rho.to_string(),
                spec.scheme.to_string(),
                name.to_string(),
                fit.ln_a.to_string(),
                fit.k.to_string(),
                fit.rms.to_string(),
            ])?;
            fits.push((rho, name, fit, snr.clone(), values));
        }
    }
    w.flush()?;
    drop(w);

    let mut out = vec![main_csv(buf), Artifact { path: Some(sibling(spec, "fit")), bytes: fit_buf }];
    if spec.plot {
        for &rho in &spec.rho_x {
            let mut plot = Plot::new(
                format!("Optimal {} parameters, rho = {rho}", spec.scheme.name().to_uppercase()),
                "SNR [dB]",
                "log10 value",
            );
            for (_, name, fit, snr, values) in fits.iter().filter(|f| f.0 == rho) {
                let pts = snr.iter().zip(values).map(|(&s, &v)| (s, v.log10())).collect();
                let fitted = snr.iter().map(|&s| (s, fit.eval(s).log10())).collect();
                plot = plot
                    .with(Series::line(*name, pts).markers())
                    .with(Series::line(format!("{name} fit"), fitted).dashed());
            }
            out.push(plot_artifact(spec, &rho.to_string(), plot));
        }
    }
    Ok(out)
}

fn sdr_plot(spec: &ExperimentSpec, rho: f64, title: String, records: &[&SweepRecord]) -> Plot {
    let grid = &spec.snr_db;
    Plot::new(title, "SNR [dB]", "SDR [dB]")
        .with(Series::line("bound", grid.iter().map(|&s| (s, bound_db(spec, rho, s))).collect()))
        .with(Series::line(spec.scheme.name(), records.iter().map(|r| (r.snr_db, r.sdr_db)).collect()).markers())
        .with(Series::line("uncoded", grid.iter().map(|&s| (s, uncoded_db(spec, rho, s))).collect()).dashed())
}

fn sweep_artifacts(spec: &ExperimentSpec, records: &[SweepRecord], title: &str) -> Result<Vec<Artifact>> {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, records)?;
    let mut out = vec![main_csv(buf)];
    if spec.plot {
        for &rho in &spec.rho_x {
            let at: Vec<&SweepRecord> = records.iter().filter(|r| r.rho_x == rho).collect();
            out.push(plot_artifact(spec, &rho.to_string(), sdr_plot(spec, rho, format!("{title}, rho = {rho}"), &at)));
        }
    }
    Ok(out)
}

fn sweep(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    let mut records = Vec::new();
    for &rho in &spec.rho_x {
        let designer = Designer::new(spec, rho)?;
        for &snr in &spec.snr_db {
            let ch = channel(spec, snr)?;
            let codec = designer.codec(spec.scheme, &ch)?;
            let record = simulate(&designer.config(spec, codec, &ch)?)?;
            progress(spec, rho, snr, "SDR", record.sdr_db);
            records.push(record);
        }
    }
    let title = format!("{} at the design SNR", spec.scheme.name().to_uppercase());
    sweep_artifacts(spec, &records, &title)
}

fn robustness(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    let design_snr = spec.design_snr_db.ok_or_else(|| RunError::Spec(SpecError("missing --design-snr".into())))?;
    let design = channel(spec, design_snr)?;
    let mut records = Vec::new();
    for &rho in &spec.rho_x {
        let designer = Designer::new(spec, rho)?;
        let codec = designer.codec(spec.scheme, &design)?;
        for &snr in &spec.snr_db {
            let ch = channel(spec, snr)?;
            let record = simulate(&designer.config(spec, codec.clone(), &ch)?)?;
            progress(spec, rho, snr, "SDR", record.sdr_db);
            records.push(record);
        }
    }
    let title = format!("{} designed for {design_snr} dB", spec.scheme.name().to_uppercase());
    sweep_artifacts(spec, &records, &title)
}

fn timeshare(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    let mut shared = Vec::new();
    let mut loss_buf = Vec::new();
    let mut w = csv_writer(&mut loss_buf);
    w.write_record(["snr_db", "rho_x", "scheme", "sdr_average_db", "sdr_time_shared_db", "loss_db", "p1", "p2"])?;
    let mut losses = Vec::new();
    for &rho in &spec.rho_x {
        let designer = Designer::new(spec, rho)?;
        for &snr in &spec.snr_db {
            let ch = channel(spec, snr)?;
            let codec = designer.codec(spec.scheme, &ch)?;
            let cmp = time_share_loss(&designer.config(spec, codec, &ch)?)?;
            progress(spec, rho, snr, "loss", cmp.loss_db);
            w.write_record([
                snr.to_string(),
                rho.to_string(),
                spec.scheme.to_string(),
                cmp.average.sdr_db.to_string(),
                cmp.time_shared.sdr_db.to_string(),
                cmp.loss_db.to_string(),
                cmp.time_shared.measured_p1.to_string(),
                cmp.time_shared.measured_p2.to_string(),
            ])?;
            losses.push((snr, rho, cmp.loss_db));
            shared.push(cmp.time_shared);
        }
    }
    w.flush()?;
    drop(w);
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &shared)?;
    let mut out = vec![main_csv(buf), Artifact { path: Some(sibling(spec, "loss")), bytes: loss_buf }];
    if spec.plot {
        let mut plot =
            Plot::new(format!("{} time-sharing loss", spec.scheme.name().to_uppercase()), "rho_x", "loss [dB]");
        for &snr in &spec.snr_db {
            let pts = losses.iter().filter(|l| l.0 == snr).map(|l| (l.1, l.2)).collect();
            plot = plot.with(Series::line(format!("{snr} dB"), pts).markers());
        }
        out.push(plot_artifact(spec, "all", plot));
    }
    Ok(out)
}

fn gapcurve(spec: &ExperimentSpec) -> Result<Vec<Artifact>> {
    let mut rows = Vec::new();
    for &rho in &spec.rho_x {
        let designer = Designer::new(spec, rho)?;
        let model = &designer.model;
        let estimate = high_snr_gap_db(rho)?;
        for &snr in &spec.snr_db {
            let ch = channel(spec, snr)?;
            let sdr = match spec.scheme {
                Scheme::Nq => designer.nq.optimize(&ch)?.sdr_db(model.sigma_x2()),
                Scheme::Sqlc => optimize_sqlc(model, &ch)?.sdr_db(model.sigma_x2()),
                Scheme::Uncoded => uncoded_db(spec, rho, snr),
            };
            let bound = bound_db(spec, rho, snr);
            progress(spec, rho, snr, "gap", bound - sdr);
            rows.push((snr, rho, sdr, bound, estimate));
        }
    }
    let mut buf = Vec::new();
    let mut w = csv_writer(&mut buf);
    w.write_record(["snr_db", "rho_x", "scheme", "sdr_db", "bound_db", "gap_db", "high_snr_gap_db"])?;
    for &(snr, rho, sdr, bound, estimate) in &rows {
        w.write_record([
            snr.to_string(),
            rho.to_string(),
            spec.scheme.to_string(),
            sdr.to_string(),
            bound.to_string(),
            (bound - sdr).to_string(),
            estimate.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    let mut out = vec![main_csv(buf)];
    if spec.plot {
        for &rho in &spec.rho_x {
            let at: Vec<_> = rows.iter().filter(|r| r.1 == rho).collect();
            let plot = Plot::new(
                format!("{} gap to the bound, rho = {rho}", spec.scheme.name().to_uppercase()),
                "SNR [dB]",
                "gap [dB]",
            )
            .with(Series::line("gap", at.iter().map(|r| (r.0, r.3 - r.2)).collect()).markers())
            .with(Series::line("high-SNR estimate", at.iter().map(|r| (r.0, r.4)).collect()).dashed());
            out.push(plot_artifact(spec, &rho.to_string(), plot));
        }
    }
    Ok(out)
}
