//! Command-line flags, the key-value config file and their merge into an
//! [`ExperimentSpec`].

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gmac_jscc::montecarlo::{Scheme, DEFAULT_SAMPLES, MIN_SAMPLES};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "GMAC_JSCC_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "gmac-jscc", version, about = "Zero-delay source-channel codes on the Gaussian MAC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandLine,
}

#[derive(Debug, Subcommand)]
pub enum CommandLine {
    /// Performance bound on an SNR grid.
    Bound(Flags),
    /// Optimal parameters per operating point, with exponential fits.
    Optimize(Flags),
    /// Optimize and simulate a single operating point.
    Simulate(Flags),
    /// Optimize and simulate every point of an SNR grid.
    Sweep(Flags),
    /// Fixed design at --design-snr, simulated over the SNR grid.
    Robustness(Flags),
    /// Time-sharing loss under equal transmit power.
    Timeshare(Flags),
    /// Analytical gap to the bound and the high-SNR estimate.
    Gapcurve(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// nq, sqlc or uncoded
    #[arg(long)]
    pub scheme: Option<String>,
    /// Source correlations, comma separated
    #[arg(long)]
    pub rho: Option<String>,
    /// SNR grid in dB: start:step:stop or a comma-separated list
    #[arg(long)]
    pub snr: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV path, `-` for stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write SVG plots next to the CSV
    #[arg(long)]
    pub plot: bool,
    /// Flat key = value file with the same keys as the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "sigma-x")]
    pub sigma_x: Option<f64>,
    /// Average power per encoder
    #[arg(long)]
    pub power: Option<f64>,
    /// Design SNR in dB for `robustness`
    #[arg(long = "design-snr")]
    pub design_snr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bound,
    Optimize,
    Simulate,
    Sweep,
    Robustness,
    Timeshare,
    Gapcurve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bound => "bound",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Robustness => "robustness",
            Command::Timeshare => "timeshare",
            Command::Gapcurve => "gapcurve",
        }
    }

    fn simulates(self) -> bool {
        matches!(self, Command::Simulate | Command::Sweep | Command::Robustness | Command::Timeshare)
    }
}

impl CommandLine {
    pub fn split(self) -> (Command, Flags) {
        match self {
            CommandLine::Bound(f) => (Command::Bound, f),
            CommandLine::Optimize(f) => (Command::Optimize, f),
            CommandLine::Simulate(f) => (Command::Simulate, f),
            CommandLine::Sweep(f) => (Command::Sweep, f),
            CommandLine::Robustness(f) => (Command::Robustness, f),
            CommandLine::Timeshare(f) => (Command::Timeshare, f),
            CommandLine::Gapcurve(f) => (Command::Gapcurve, f),
        }
    }
}

/// A problem with the requested experiment; reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecError(pub String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn spec_err<T>(msg: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError(msg.into()))
}

/// Where the main CSV goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Stdout,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub scheme: Scheme,
    pub rho_x: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub output: Output,
    /// Directory for plots and secondary tables.
    pub dir: PathBuf,
    pub plot: bool,
    pub sigma_x: f64,
    pub power: f64,
    pub design_snr_db: Option<f64>,
}

impl ExperimentSpec {
    /// Label used in file names; `bound` for the bound command.
    pub fn label(&self) -> &'static str {
        if self.command == Command::Bound {
            "bound"
        } else {
            self.scheme.name()
        }
    }
}

const CONFIG_KEYS: [&str; 10] =
    ["scheme", "rho", "snr", "samples", "seed", "output", "plot", "sigma-x", "power", "design-snr"];

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; `_` in keys is read as `-`.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>, SpecError> {
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return spec_err(format!("config line {}: expected `key = value`", n + 1));
        };
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return spec_err(format!("config line {}: unknown key `{key}`", n + 1));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>, SpecError> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (number(start)?, number(step)?, number(stop)?);
            if step == 0.0 || (stop - start) * step < 0.0 {
                return spec_err(format!("SNR grid `{s}` has a step that never reaches the stop value"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return spec_err(format!("SNR grid `{s}` has too many points"));
            }
            // rounding keeps values such as 0.1 + 2·0.1 printable as 0.3
            (0..count).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect()
        }
        [_] => number_list(s)?,
        _ => return spec_err(format!("SNR grid `{s}` is neither start:step:stop nor a list")),
    };
    if grid.is_empty() {
        return spec_err("empty SNR grid");
    }
    Ok(grid)
}

pub fn parse_rho_list(s: &str) -> Result<Vec<f64>, SpecError> {
    let rho = number_list(s)?;
    if let Some(bad) = rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return spec_err(format!("correlation {bad} is outside [0, 1]"));
    }
    Ok(rho)
}

fn number(s: &str) -> Result<f64, SpecError> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => spec_err(format!("`{}` is not a finite number", s.trim())),
    }
}

fn number_list(s: &str) -> Result<Vec<f64>, SpecError> {
    let list = s.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return spec_err("empty list");
    }
    Ok(list)
}

fn parse_bool(s: &str) -> Result<bool, SpecError> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => spec_err(format!("`{s}` is not a boolean")),
    }
}

fn from_file<T>(
    file: &HashMap<String, String>,
    key: &str,
    parse: impl Fn(&str) -> Result<T, SpecError>,
) -> Result<Option<T>, SpecError> {
    file.get(key).map(|v| parse(v).map_err(|e| SpecError(format!("config `{key}`: {e}")))).transpose()
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, SpecError> {
    s.parse().map_err(|_| SpecError(format!("`{s}` is not a valid number")))
}

/// Merges flags over the config file (if any) and validates the result.
/// `env_dir` is the value of [`OUTPUT_DIR_ENV`].
pub fn resolve(command: Command, flags: Flags, env_dir: Option<&Path>) -> Result<ExperimentSpec, SpecError> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SpecError(format!("cannot read config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => HashMap::new(),
    };

    let scheme = match flags.scheme.or_else(|| file.get("scheme").cloned()) {
        Some(s) => s.parse::<Scheme>().map_err(|e| SpecError(e.to_string()))?,
        None => Scheme::Sqlc,
    };
    let rho_x = match flags.rho.or_else(|| file.get("rho").cloned()) {
        Some(s) => parse_rho_list(&s)?,
        None => return spec_err("missing --rho"),
    };
    let snr_db = match flags.snr.or_else(|| file.get("snr").cloned()) {
        Some(s) => parse_snr_grid(&s)?,
        None => return spec_err("missing --snr"),
    };
    let n_samples = match flags.samples {
        Some(n) => n,
        None => from_file(&file, "samples", parse_num)?.unwrap_or(DEFAULT_SAMPLES),
    };
    let seed = match flags.seed {
        Some(s) => s,
        None => from_file(&file, "seed", parse_num)?.unwrap_or(1),
    };
    let plot = flags.plot || from_file(&file, "plot", parse_bool)?.unwrap_or(false);
    let sigma_x = match flags.sigma_x {
        Some(v) => v,
        None => from_file(&file, "sigma-x", number)?.unwrap_or(1.0),
    };
    let power = match flags.power {
        Some(v) => v,
        None => from_file(&file, "power", number)?.unwrap_or(1.0),
    };
    let design_snr_db = match flags.design_snr {
        Some(v) => Some(v),
        None => from_file(&file, "design-snr", number)?,
    };
    let output = flags.output.or_else(|| file.get("output").map(PathBuf::from));

    if command.simulates() && n_samples < MIN_SAMPLES {
        return spec_err(format!("--samples must be at least {MIN_SAMPLES}"));
    }
    if !sigma_x.is_finite() || sigma_x <= 0.0 {
        return spec_err("--sigma-x must be positive");
    }
    if !power.is_finite() || power <= 0.0 {
        return spec_err("--power must be positive");
    }
    if !design_snr_db.is_none_or(f64::is_finite) {
        return spec_err("--design-snr must be finite");
    }
    match command {
        Command::Optimize if scheme == Scheme::Uncoded => {
            return spec_err("optimize needs --scheme nq or sqlc");
        }
        Command::Simulate if rho_x.len() != 1 || snr_db.len() != 1 => {
            return spec_err("simulate takes one --rho and one --snr; use sweep for grids");
        }
        Command::Robustness if design_snr_db.is_none() => return spec_err("robustness needs --design-snr"),
        Command::Gapcurve if rho_x.iter().any(|&r| r >= 1.0) => {
            return spec_err("gapcurve needs correlations below 1");
        }
        _ => {}
    }

    let default_dir = env_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let label = if command == Command::Bound { "bound" } else { scheme.name() };
    let (output, dir) = match output {
        Some(p) if p.as_os_str() == "-" => (Output::Stdout, default_dir),
        Some(p) => {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            (Output::File(p), dir)
        }
        None => (Output::File(default_dir.join(format!("{}_{label}.csv", command.name()))), default_dir),
    };

    Ok(ExperimentSpec {
        command,
        scheme,
        rho_x,
        snr_db,
        n_samples,
        seed,
        output,
        dir,
        plot,
        sigma_x,
        power,
        design_snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_grids() {
        assert_eq!(parse_snr_grid("0:2:50").unwrap().len(), 26);
        assert_eq!(parse_snr_grid("10:5:45").unwrap(), vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0]);
        assert_eq!(parse_snr_grid("0:0.1:0.3").unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(parse_snr_grid("30:-10:10").unwrap(), vec![30.0, 20.0, 10.0]);
        assert_eq!(parse_snr_grid("29, 37").unwrap(), vec![29.0, 37.0]);
        assert!(parse_snr_grid("0:0:5").is_err());
        assert!(parse_snr_grid("0:1:-5").is_err());
        assert!(parse_snr_grid("1:2").is_err());
        assert!(parse_snr_grid("a").is_err());
        assert!(parse_snr_grid("").is_err());
    }

    #[test]
    fn rho_lists() {
        assert_eq!(parse_rho_list("0,0.95").unwrap(), vec![0.0, 0.95]);
        assert!(parse_rho_list("1.2").is_err());
        assert!(parse_rho_list("-0.1").is_err());
        assert!(parse_rho_list("nan").is_err());
    }

    #[test]
    fn config_file() {
        let map = parse_config("# manifest\nscheme = nq\n\nsigma_x=2\n").unwrap();
        assert_eq!(map["scheme"], "nq");
        assert_eq!(map["sigma-x"], "2");
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("scheme nq").is_err());
    }

    #[test]
    fn flags_override_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "scheme = nq\nrho = 0.5\nsnr = 10:10:30\nseed = 9\nplot = yes\n").unwrap();
        let flags = Flags { config: Some(cfg), scheme: Some("sqlc".into()), ..Flags::default() };
        let spec = resolve(Command::Sweep, flags, Some(dir.path())).unwrap();
        assert_eq!(spec.scheme, Scheme::Sqlc);
        assert_eq!(spec.rho_x, vec![0.5]);
        assert_eq!(spec.snr_db, vec![10.0, 20.0, 30.0]);
        assert_eq!(spec.seed, 9);
        assert!(spec.plot);
        assert_eq!(spec.n_samples, DEFAULT_SAMPLES);
        assert_eq!(spec.output, Output::File(dir.path().join("sweep_sqlc.csv")));
    }

    #[test]
    fn invalid_specs() {
        let base = Flags { rho: Some("0".into()), snr: Some("10".into()), ..Flags::default() };
        let with = |f: Flags, c| resolve(c, f, None);
        assert!(with(Flags { rho: None, ..base.clone() }, Command::Bound).is_err());
        assert!(with(Flags { samples: Some(10), ..base.clone() }, Command::Sweep).is_err());
        assert!(with(Flags { samples: Some(10), ..base.clone() }, Command::Bound).is_ok());
        assert!(with(Flags { scheme: Some("turbo".into()), ..base.clone() }, Command::Sweep).is_err());
        assert!(with(Flags { scheme: Some("uncoded".into()), ..base.clone() }, Command::Optimize).is_err());
        assert!(with(base.clone(), Command::Robustness).is_err());
        assert!(with(Flags { snr: Some("10,20".into()), ..base.clone() }, Command::Simulate).is_err());
        assert!(with(Flags { power: Some(0.0), ..base.clone() }, Command::Bound).is_err());
        assert!(with(Flags { rho: Some("1".into()), ..base }, Command::Gapcurve).is_err());
    }
}
