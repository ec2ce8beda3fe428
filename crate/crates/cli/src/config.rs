//! Command-line and config-file parsing into a fully resolved [`RunConfig`].
//!
//! Flags and config-file entries share one key space and one set of value
//! parsers. A config file is a flat TOML table; flags win over file entries.
//! Keys that belong to another subcommand are ignored, so one file can drive
//! several subcommands, but keys nobody knows are rejected.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use qtomo::harness::{default_n_grid, log_grid, log_space, DEFAULT_REPETITIONS};
use qtomo::protocols::DEFAULT_POW_EXPONENT;
use qtomo::{
    bloch_to_density, fixtures, BlochVector, CampaignSpec, DensityMatrix, ErrorFamily,
    ErrorModelSpec, ProtocolSpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "QTOMO_OUT_DIR";

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Waveplate angle error in radians when a model is chosen without `e`.
pub const DEFAULT_E: f64 = 0.01;
pub const DEFAULT_ALPHAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_E_GRID: &str = "1e-3:3e-2:5";
pub const DEFAULT_START_N: u64 = 1000;
pub const DEFAULT_N_CAP: u64 = 1 << 40;
pub const DEFAULT_N_MIN: u64 = 100;
pub const DEFAULT_N_MAX: u64 = 30_000;
pub const DEFAULT_N_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Run,
    SweepAlpha,
    SweepNoise,
    Fit,
    Fixtures,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Run => "run",
            CommandKind::SweepAlpha => "sweep-alpha",
            CommandKind::SweepNoise => "sweep-noise",
            CommandKind::Fit => "fit",
            CommandKind::Fixtures => "fixtures",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::Run => &[
                "out_dir", "threads", "gnuplot", "state", "reps", "seed", "n", "n_min", "n_max",
                "n_points", "protocol", "alpha", "exponent", "model", "e", "axis",
            ],
            CommandKind::SweepAlpha => &[
                "out_dir", "threads", "gnuplot", "state", "reps", "seed", "n", "n_min", "n_max",
                "n_points", "alphas", "model", "e", "axis",
            ],
            CommandKind::SweepNoise => &[
                "out_dir",
                "threads",
                "gnuplot",
                "state",
                "reps",
                "seed",
                "protocols",
                "alpha",
                "exponent",
                "model",
                "axis",
                "e_grid",
                "start_n",
                "n_cap",
            ],
            CommandKind::Fit => &["out_dir", "input"],
            CommandKind::Fixtures => &[],
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const KNOWN_KEYS: &[&str] = &[
    "out_dir",
    "threads",
    "gnuplot",
    "state",
    "reps",
    "seed",
    "n",
    "n_min",
    "n_max",
    "n_points",
    "protocol",
    "protocols",
    "alpha",
    "alphas",
    "exponent",
    "model",
    "e",
    "axis",
    "e_grid",
    "start_n",
    "n_cap",
    "input",
];

/// True state of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    /// The pure target state.
    Eq7,
    /// The slightly mixed measured state.
    Eq10,
    Bloch(BlochVector),
}

impl StateSpec {
    pub fn density(&self) -> DensityMatrix {
        match self {
            StateSpec::Eq7 => fixtures::target_state(),
            StateSpec::Eq10 => fixtures::measured_state(),
            StateSpec::Bloch(r) => bloch_to_density(*r).expect("validated when parsed"),
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Eq7 => f.write_str("eq7"),
            StateSpec::Eq10 => f.write_str("eq10"),
            StateSpec::Bloch(r) => write!(f, "{},{},{}", r.x, r.y, r.z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub protocol: ProtocolSpec,
    pub state: StateSpec,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub error_model: ErrorModelSpec,
    pub seed: u64,
}

impl CampaignConfig {
    pub fn spec(&self) -> CampaignSpec {
        CampaignSpec {
            protocol: self.protocol,
            state: self.state.density(),
            n_grid: self.n_grid.clone(),
            repetitions: self.reps,
            error_model: self.error_model,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepConfig {
    pub alphas: Vec<f64>,
    pub state: StateSpec,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub error_model: ErrorModelSpec,
    pub seed: u64,
}

impl AlphaSweepConfig {
    pub fn campaign(&self, alpha: f64) -> CampaignConfig {
        CampaignConfig {
            protocol: ProtocolSpec::Adaptive { alpha },
            state: self.state,
            n_grid: self.n_grid.clone(),
            reps: self.reps,
            error_model: self.error_model,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepConfig {
    pub family: ErrorFamily,
    pub e_grid: Vec<f64>,
    pub protocols: Vec<ProtocolSpec>,
    pub state: StateSpec,
    pub start_n: u64,
    pub n_cap: u64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    Run(CampaignConfig),
    SweepAlpha(AlphaSweepConfig),
    SweepNoise(NoiseSweepConfig),
    Fit(FitConfig),
    Fixtures,
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub out_dir: PathBuf,
    /// Upper bound on worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub gnuplot: bool,
}

impl RunConfig {
    pub fn command(&self) -> CommandKind {
        match self.task {
            Task::Run(_) => CommandKind::Run,
            Task::SweepAlpha(_) => CommandKind::SweepAlpha,
            Task::SweepNoise(_) => CommandKind::SweepNoise,
            Task::Fit(_) => CommandKind::Fit,
            Task::Fixtures => CommandKind::Fixtures,
        }
    }
}

macro_rules! flag_group {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, Args)]
        pub struct $name {
            $($(#[$fm])* #[arg(long)] pub $field: Option<String>,)*
        }

        impl $name {
            fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(if let Some(v) = &self.$field {
                    out.push((stringify!($field), v.clone()));
                })*
                out
            }
        }
    };
}

flag_group!(SamplingFlags {
    /// True state: eq7, eq10 or a Bloch vector "x,y,z" [default: eq7]
    state,
    /// Repetitions per grid point [default: 150]
    reps,
    /// Master seed [default: 1]
    seed,
});

flag_group!(GridFlags {
    /// Explicit comma-separated N grid; excludes --n-min/--n-max/--n-points
    n,
    /// Smallest N of the log-spaced grid [default: 100]
    n_min,
    /// Largest N of the log-spaced grid [default: 30000]
    n_max,
    /// Number of grid points [default: 10]
    n_points,
});

flag_group!(ProtocolFlags {
    /// Preliminary fraction of adaptive protocols, in (0, 1) [default: 0.5]
    alpha,
    /// Preliminary exponent of adaptive-pow, in (0, 1) [default: 2/3]
    exponent,
});

flag_group!(ModelFlags {
    /// Waveplate error model: none, 1, 2 or 3 [default: none]
    model,
    /// Waveplate angle error in radians [default: 0.01 when a model is set]
    e,
    /// Fixed rotation axis of model 3, "x,y,z" [default: 1,0,0]
    axis,
});

flag_group!(NoiseFlags {
    /// Comma-separated protocols [default: static,adaptive]
    protocols,
    /// Waveplate error model: 1, 2 or 3 [default: 1]
    model,
    /// Fixed rotation axis of model 3, "x,y,z" [default: 1,0,0]
    axis,
    /// Error magnitudes: "start:stop:count" log-spaced, or a comma list [default: 1e-3:3e-2:5]
    e_grid,
    /// First N of the doubling search [default: 1000]
    start_n,
    /// Largest N tried [default: 2^40]
    n_cap,
});

/// Options every computing subcommand accepts.
#[derive(Debug, Clone, Default, Args)]
pub struct OutputFlags {
    /// Flat TOML config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $QTOMO_OUT_DIR or .]
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Maximum number of worker threads [default: all cores]
    #[arg(long)]
    pub threads: Option<String>,
    /// Also write a gnuplot script
    #[arg(long)]
    pub gnuplot: bool,
}

impl OutputFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(v) = &self.out_dir {
            out.push(("out_dir", v.clone()));
        }
        if let Some(v) = &self.threads {
            out.push(("threads", v.clone()));
        }
        if self.gnuplot {
            out.push(("gnuplot", "true".into()));
        }
        out
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qtomo",
    version,
    about = "Simulated single-qubit static and adaptive tomography"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run one protocol over an N grid
    Run {
        /// static, adaptive, adaptive-pow, reduced-adaptive or known-basis [default: static]
        #[arg(long)]
        protocol: Option<String>,
        #[command(flatten)]
        protocol_flags: ProtocolFlags,
        #[command(flatten)]
        sampling: SamplingFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run adaptive tomography for several preliminary fractions
    SweepAlpha {
        /// Comma-separated alphas [default: 0.1,0.3,0.5,0.7,0.9]
        #[arg(long)]
        alphas: Option<String>,
        #[command(flatten)]
        sampling: SamplingFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Locate noise floors over a range of error magnitudes
    SweepNoise {
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        protocol_flags: ProtocolFlags,
        #[command(flatten)]
        sampling: SamplingFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Refit a campaign or noise-floor CSV
    Fit {
        /// CSV written by run, sweep-alpha or sweep-noise
        #[arg(long)]
        input: Option<String>,
        /// Flat TOML config file; flags override its entries
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory [default: $QTOMO_OUT_DIR or .]
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Print the built-in states
    Fixtures,
}

impl CliCommand {
    fn split(self) -> (CommandKind, Option<PathBuf>, Vec<(&'static str, String)>) {
        match self {
            CliCommand::Run {
                protocol,
                protocol_flags,
                sampling,
                grid,
                model,
                output,
            } => {
                let mut pairs: Vec<_> = protocol.map(|p| ("protocol", p)).into_iter().collect();
                pairs.extend(protocol_flags.pairs());
                pairs.extend(sampling.pairs());
                pairs.extend(grid.pairs());
                pairs.extend(model.pairs());
                pairs.extend(output.pairs());
                (CommandKind::Run, output.config, pairs)
            }
            CliCommand::SweepAlpha {
                alphas,
                sampling,
                grid,
                model,
                output,
            } => {
                let mut pairs: Vec<_> = alphas.map(|a| ("alphas", a)).into_iter().collect();
                pairs.extend(sampling.pairs());
                pairs.extend(grid.pairs());
                pairs.extend(model.pairs());
                pairs.extend(output.pairs());
                (CommandKind::SweepAlpha, output.config, pairs)
            }
            CliCommand::SweepNoise {
                noise,
                protocol_flags,
                sampling,
                output,
            } => {
                let mut pairs = noise.pairs();
                pairs.extend(protocol_flags.pairs());
                pairs.extend(sampling.pairs());
                pairs.extend(output.pairs());
                (CommandKind::SweepNoise, output.config, pairs)
            }
            CliCommand::Fit {
                input,
                config,
                out_dir,
            } => {
                let mut pairs: Vec<_> = input.map(|i| ("input", i)).into_iter().collect();
                pairs.extend(out_dir.map(|o| ("out_dir", o)));
                (CommandKind::Fit, config, pairs)
            }
            CliCommand::Fixtures => (CommandKind::Fixtures, None, Vec::new()),
        }
    }
}

/// Parses `argv` (program name first), reading the default output directory
/// from [`OUT_DIR_ENV`].
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_out_dir = std::env::var(OUT_DIR_ENV).ok().filter(|s| !s.is_empty());
    parse_config_with_env(argv, env_out_dir.as_deref())
}

pub fn parse_config_with_env<I, T>(
    argv: I,
    env_out_dir: Option<&str>,
) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    let (kind, config_path, flags) = cli.command.split();
    let mut values = match config_path {
        Some(path) => read_config_file(&path)?,
        None => BTreeMap::new(),
    };
    values.retain(|k, _| kind.keys().contains(&k.as_str()));
    for (k, v) in flags {
        values.insert(k.to_string(), v);
    }
    resolve(kind, Values(values), env_out_dir)
}

/// Reads a flat TOML table into key/value strings.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| e.message().to_string())?;
    let mut out = BTreeMap::new();
    for (key, value) in table {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(format!("unknown key `{key}`"));
        }
        let text = scalar_text(&value)
            .or_else(|| match &value {
                toml::Value::Array(items) => items
                    .iter()
                    .map(scalar_text)
                    .collect::<Option<Vec<_>>>()
                    .map(|v| v.join(",")),
                _ => None,
            })
            .ok_or_else(|| format!("key `{key}` must be a scalar or a list of scalars"))?;
        out.insert(key, text);
    }
    Ok(out)
}

fn scalar_text(value: &toml::Value) -> Option<String> {
    match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        _ => None,
    }
}

struct Values(BTreeMap<String, String>);

fn usage(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Usage(format!("invalid `{key}`: {msg}"))
}

impl Values {
    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn get<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        self.0
            .get(key)
            .map(|v| parse(v.trim()).map_err(|e| usage(key, e)))
            .transpose()
    }

    fn get_or<T>(
        &self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, CliError> {
        Ok(self.get(key, parse)?.unwrap_or(default))
    }

    fn conflict(&self, key: &str, reason: impl fmt::Display) -> Result<(), CliError> {
        if self.has(key) {
            Err(CliError::Usage(format!("`{key}` conflicts with {reason}")))
        } else {
            Ok(())
        }
    }
}

fn parse_from<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("{s:?}: {e}"))
}

/// Parses a real number. Besides the usual forms, `MeE` with a fractional
/// exponent is read as `M·10^E`, so `1e-1.5` is `10^-1.5`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let v = s.parse::<f64>().ok().or_else(|| {
        let (m, e) = s.split_once(['e', 'E'])?;
        Some(m.parse::<f64>().ok()? * 10f64.powf(e.parse::<f64>().ok()?))
    });
    match v {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{s:?} is not a finite number")),
    }
}

/// Parses a count, accepting integral reals such as `1e4`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v = parse_real(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("{s:?} is not a non-negative integer"))
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out = s
        .split(',')
        .map(|p| item(p.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        Err("empty list".into())
    } else {
        Ok(out)
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{s:?} is not a boolean")),
    }
}

fn parse_triple(s: &str) -> Result<BlochVector, String> {
    let v = parse_list(s, parse_real)?;
    match v[..] {
        [x, y, z] => Ok(BlochVector::new(x, y, z)),
        _ => Err(format!("{s:?} needs three comma-separated components")),
    }
}

pub fn parse_state(s: &str) -> Result<StateSpec, String> {
    match s {
        "eq7" => Ok(StateSpec::Eq7),
        "eq10" => Ok(StateSpec::Eq10),
        _ => {
            let r = parse_triple(s)
                .map_err(|_| format!("{s:?} is neither eq7, eq10 nor a Bloch vector x,y,z"))?;
            bloch_to_density(r).map_err(|e| e.to_string())?;
            Ok(StateSpec::Bloch(r))
        }
    }
}

fn parse_axis(s: &str) -> Result<BlochVector, String> {
    let a = parse_triple(s)?;
    if a.normalized().is_none() {
        return Err("axis must be nonzero".into());
    }
    Ok(a)
}

/// Error magnitudes, either `start:stop:count` (log-spaced, endpoints
/// included) or a comma-separated list.
pub fn parse_e_grid(s: &str) -> Result<Vec<f64>, String> {
    let grid = match s.split(':').collect::<Vec<_>>()[..] {
        [start, stop, count] => {
            let (start, stop) = (parse_real(start.trim())?, parse_real(stop.trim())?);
            let count = parse_count(count.trim())? as usize;
            if !(start > 0.0 && stop > start && count >= 2) {
                return Err(format!("{s:?} needs 0 < start < stop and count >= 2"));
            }
            log_space(start, stop, count)
        }
        [_] => parse_list(s, parse_real)?,
        _ => return Err(format!("{s:?} is not start:stop:count or a list")),
    };
    if grid.iter().any(|&e| e < 0.0) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err("magnitudes must be non-negative and strictly increasing".into());
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProtocolName {
    Static,
    Adaptive,
    AdaptivePow,
    ReducedAdaptive,
    KnownBasis,
}

impl ProtocolName {
    fn takes_alpha(self) -> bool {
        matches!(self, ProtocolName::Adaptive | ProtocolName::ReducedAdaptive)
    }

    fn build(self, alpha: f64, exponent: f64) -> ProtocolSpec {
        match self {
            ProtocolName::Static => ProtocolSpec::Static,
            ProtocolName::Adaptive => ProtocolSpec::Adaptive { alpha },
            ProtocolName::AdaptivePow => ProtocolSpec::AdaptivePow { exponent },
            ProtocolName::ReducedAdaptive => ProtocolSpec::ReducedAdaptive { alpha },
            ProtocolName::KnownBasis => ProtocolSpec::KnownBasis,
        }
    }
}

fn parse_protocol_name(s: &str) -> Result<ProtocolName, String> {
    Ok(match s {
        "static" => ProtocolName::Static,
        "adaptive" => ProtocolName::Adaptive,
        "adaptive-pow" => ProtocolName::AdaptivePow,
        "reduced-adaptive" => ProtocolName::ReducedAdaptive,
        "known-basis" => ProtocolName::KnownBasis,
        _ => {
            return Err(format!(
                "{s:?} is not one of static, adaptive, adaptive-pow, reduced-adaptive, known-basis"
            ))
        }
    })
}

/// Builds protocols from names, checking that `alpha` and `exponent` are
/// used by at least one of them and lie in range.
fn build_protocols(names: &[ProtocolName], v: &Values) -> Result<Vec<ProtocolSpec>, CliError> {
    if !names.iter().any(|n| n.takes_alpha()) {
        v.conflict("alpha", "a protocol without a preliminary fraction")?;
    }
    if !names.contains(&ProtocolName::AdaptivePow) {
        v.conflict("exponent", "a protocol other than adaptive-pow")?;
    }
    let alpha = v.get_or("alpha", DEFAULT_ALPHA, parse_real)?;
    let exponent = v.get_or("exponent", DEFAULT_POW_EXPONENT, parse_real)?;
    names
        .iter()
        .map(|n| {
            let p = n.build(alpha, exponent);
            p.validate().map_err(|e| {
                let key = if *n == ProtocolName::AdaptivePow {
                    "exponent"
                } else {
                    "alpha"
                };
                usage(key, e)
            })?;
            Ok(p)
        })
        .collect()
}

fn sampling(v: &Values) -> Result<(StateSpec, usize, u64), CliError> {
    let state = v.get_or("state", StateSpec::Eq7, parse_state)?;
    let reps = v.get_or("reps", DEFAULT_REPETITIONS, parse_from::<usize>)?;
    if reps < 2 {
        return Err(usage(
            "reps",
            "at least 2 repetitions are needed for a standard error",
        ));
    }
    let seed = v.get_or("seed", DEFAULT_SEED, parse_from::<u64>)?;
    Ok((state, reps, seed))
}

fn n_grid(v: &Values) -> Result<Vec<u64>, CliError> {
    if let Some(grid) = v.get("n", |s| parse_list(s, parse_count))? {
        for key in ["n_min", "n_max", "n_points"] {
            v.conflict(key, "an explicit `n` grid")?;
        }
        if grid.contains(&0) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(usage("n", "grid must be positive and strictly increasing"));
        }
        return Ok(grid);
    }
    if !(v.has("n_min") || v.has("n_max") || v.has("n_points")) {
        return Ok(default_n_grid());
    }
    let min = v.get_or("n_min", DEFAULT_N_MIN, parse_count)?;
    let max = v.get_or("n_max", DEFAULT_N_MAX, parse_count)?;
    let points = v.get_or("n_points", DEFAULT_N_POINTS as u64, parse_count)? as usize;
    if min == 0 || min > max {
        return Err(usage(
            "n_min",
            format!("need 0 < n_min <= n_max, got {min} and {max}"),
        ));
    }
    if points == 0 {
        return Err(usage("n_points", "need at least one point"));
    }
    Ok(log_grid(min, max, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelKind {
    None,
    One,
    Two,
    Three,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    match s {
        "none" => Ok(ModelKind::None),
        "1" => Ok(ModelKind::One),
        "2" => Ok(ModelKind::Two),
        "3" => Ok(ModelKind::Three),
        _ => Err(format!("{s:?} is not one of none, 1, 2, 3")),
    }
}

fn family(kind: ModelKind, v: &Values) -> Result<Option<ErrorFamily>, CliError> {
    if kind != ModelKind::Three {
        v.conflict("axis", "an error model other than 3")?;
    }
    Ok(match kind {
        ModelKind::None => None,
        ModelKind::One => Some(ErrorFamily::Model1),
        ModelKind::Two => Some(ErrorFamily::Model2),
        ModelKind::Three => Some(ErrorFamily::Model3 {
            axis: v.get_or("axis", BlochVector::X, parse_axis)?,
        }),
    })
}

fn error_model(v: &Values) -> Result<ErrorModelSpec, CliError> {
    let kind = v.get_or("model", ModelKind::None, parse_model)?;
    match family(kind, v)? {
        None => {
            v.conflict("e", "error model none")?;
            Ok(ErrorModelSpec::None)
        }
        Some(f) => {
            let e = v.get_or("e", DEFAULT_E, parse_real)?;
            if e < 0.0 {
                return Err(usage("e", "magnitude must be non-negative"));
            }
            Ok(f.with_magnitude(e))
        }
    }
}

fn resolve(kind: CommandKind, v: Values, env_out_dir: Option<&str>) -> Result<RunConfig, CliError> {
    let task = match kind {
        CommandKind::Run => {
            let name = v.get_or("protocol", ProtocolName::Static, parse_protocol_name)?;
            let protocol = build_protocols(&[name], &v)?[0];
            let (state, reps, seed) = sampling(&v)?;
            Task::Run(CampaignConfig {
                protocol,
                state,
                n_grid: n_grid(&v)?,
                reps,
                error_model: error_model(&v)?,
                seed,
            })
        }
        CommandKind::SweepAlpha => {
            let alphas = v.get_or("alphas", DEFAULT_ALPHAS.to_vec(), |s| {
                parse_list(s, parse_real)
            })?;
            for &alpha in &alphas {
                ProtocolSpec::Adaptive { alpha }
                    .validate()
                    .map_err(|e| usage("alphas", e))?;
            }
            let (state, reps, seed) = sampling(&v)?;
            Task::SweepAlpha(AlphaSweepConfig {
                alphas,
                state,
                n_grid: n_grid(&v)?,
                reps,
                error_model: error_model(&v)?,
                seed,
            })
        }
        CommandKind::SweepNoise => {
            let names = v.get_or(
                "protocols",
                vec![ProtocolName::Static, ProtocolName::Adaptive],
                |s| parse_list(s, parse_protocol_name),
            )?;
            let protocols = build_protocols(&names, &v)?;
            let kind = v.get_or("model", ModelKind::One, parse_model)?;
            let family = family(kind, &v)?
                .ok_or_else(|| usage("model", "a noise sweep needs model 1, 2 or 3"))?;
            let e_grid = v.get("e_grid", parse_e_grid)?.map_or_else(
                || Ok(parse_e_grid(DEFAULT_E_GRID).expect("default grid parses")),
                Ok::<_, CliError>,
            )?;
            let start_n = v.get_or("start_n", DEFAULT_START_N, parse_count)?;
            let n_cap = v.get_or("n_cap", DEFAULT_N_CAP, parse_count)?;
            if start_n == 0 || start_n > n_cap {
                return Err(usage(
                    "start_n",
                    format!("need 0 < start_n <= n_cap, got {start_n} and {n_cap}"),
                ));
            }
            let (state, reps, seed) = sampling(&v)?;
            Task::SweepNoise(NoiseSweepConfig {
                family,
                e_grid,
                protocols,
                state,
                start_n,
                n_cap,
                reps,
                seed,
            })
        }
        CommandKind::Fit => {
            let input = v
                .get("input", |s| Ok(PathBuf::from(s)))?
                .ok_or_else(|| CliError::Usage("fit needs `input`".into()))?;
            Task::Fit(FitConfig { input })
        }
        CommandKind::Fixtures => Task::Fixtures,
    };
    let out_dir = match v.0.get("out_dir") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(env_out_dir.unwrap_or(".")),
    };
    let threads = v.get("threads", parse_from::<usize>)?;
    if threads == Some(0) {
        return Err(usage("threads", "must be at least 1"));
    }
    Ok(RunConfig {
        task,
        out_dir,
        threads,
        gnuplot: v.get_or("gnuplot", false, parse_bool)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> Result<RunConfig, CliError> {
        parse_config_with_env(
            std::iter::once("qtomo").chain(args.split_whitespace()),
            None,
        )
    }

    fn usage_message(args: &str) -> String {
        match parse(args) {
            Err(CliError::Usage(m)) => m,
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_run() {
        let cfg = parse("run --protocol static --state eq7 --n 1000 --reps 5 --seed 7").unwrap();
        let Task::Run(c) = cfg.task else { panic!() };
        assert_eq!(c.protocol, ProtocolSpec::Static);
        assert_eq!(c.error_model, ErrorModelSpec::None);
        assert_eq!((c.n_grid, c.reps, c.seed), (vec![1000], 5, 7));
        assert_eq!(cfg.out_dir, PathBuf::from("."));
    }

    #[test]
    fn defaults() {
        let Task::Run(c) = parse("run").unwrap().task else {
            panic!()
        };
        assert_eq!(c.n_grid, default_n_grid());
        assert_eq!(c.reps, 150);
        assert_eq!(c.state, StateSpec::Eq7);
        let Task::SweepNoise(n) = parse("sweep-noise").unwrap().task else {
            panic!()
        };
        assert_eq!(n.family, ErrorFamily::Model1);
        assert_eq!(
            n.protocols,
            vec![ProtocolSpec::Static, ProtocolSpec::Adaptive { alpha: 0.5 }]
        );
        assert_eq!(n.e_grid.len(), 5);
    }

    #[test]
    fn out_of_range_alpha_names_the_key() {
        assert!(usage_message("run --protocol adaptive --alpha 1.5").contains("`alpha`"));
        assert!(usage_message("sweep-alpha --alphas 0.5,1").contains("`alphas`"));
    }

    #[test]
    fn conflicting_keys_are_rejected() {
        assert!(usage_message("run --protocol static --alpha 0.3").contains("`alpha`"));
        assert!(usage_message("run --n 100,200 --n-max 500").contains("`n_max`"));
        assert!(usage_message("run --e 0.1").contains("`e`"));
        assert!(usage_message("run --model 1 --axis 0,0,1").contains("`axis`"));
        assert!(usage_message("sweep-noise --model none").contains("`model`"));
    }

    #[test]
    fn malformed_values_are_usage_errors() {
        for args in [
            "run --reps 1",
            "run --n 300,200",
            "run --state 1,1,1",
            "run --state eq8",
            "run --threads 0",
            "run --model 4",
            "sweep-noise --e-grid 1e-2:1e-3:4",
            "sweep-noise --start-n 10 --n-cap 5",
        ] {
            usage_message(args);
        }
    }

    #[test]
    fn clap_errors_and_help() {
        assert!(matches!(parse("run --bogus 1"), Err(CliError::Clap(e)) if e.exit_code() == 2));
        assert!(matches!(parse("--help"), Err(CliError::Clap(e)) if e.exit_code() == 0));
    }

    #[test]
    fn fractional_exponents() {
        assert_eq!(parse_real("1e-3").unwrap(), 1e-3);
        assert!((parse_real("1e-1.5").unwrap() - 10f64.powf(-1.5)).abs() < 1e-15);
        let grid = parse_e_grid("1e-3:1e-1.5:6").unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[0], 1e-3);
        assert!(parse_real("1e400").is_err());
    }

    #[test]
    fn config_text_is_flattened() {
        let map = parse_config_text(
            "reps = 150\nn = [100, 1000]\nstate = \"eq10\"\ngnuplot = true\ne = 0.5\n",
        )
        .unwrap();
        assert_eq!(map["reps"], "150");
        assert_eq!(map["n"], "100,1000");
        assert_eq!(map["state"], "eq10");
        assert_eq!(map["gnuplot"], "true");
        assert_eq!(map["e"], "0.5");
        assert!(parse_config_text("foo = 1").unwrap_err().contains("`foo`"));
        assert!(parse_config_text("[table]\nreps = 1").is_err());
    }

    #[test]
    fn env_sets_default_out_dir() {
        let cfg = parse_config_with_env(["qtomo", "run"], Some("/tmp/x")).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        let cfg =
            parse_config_with_env(["qtomo", "run", "--out-dir", "y"], Some("/tmp/x")).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("y"));
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        for args in [
            "run --protocol adaptive-pow --exponent 0.6 --state 0.1,-0.2,0.3 --model 3 --axis 0,1,1 --e 0.02",
            "sweep-alpha --alphas 0.2,0.4 --n-min 50 --n-max 5000 --n-points 4 --seed 18446744073709551615",
            "sweep-noise --protocols static,reduced-adaptive --alpha 0.3 --e-grid 1e-3:1e-1.5:6 --threads 2",
            "fit --input a.csv",
            "fixtures",
        ] {
            let cfg = parse(args).unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg, "{args}");
        }
    }
}
