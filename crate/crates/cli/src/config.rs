//! Command-line and `key = value` file configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use toeplitz_lab::sphere_domain::{battery_symbol, SphereSymbol};
use toeplitz_lab::MeasurePreservingMap;

use crate::CliError;

/// Environment variable for the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TOEPLITZ_LAB_OUTPUT_DIR";

/// Tolerance names accepted by `--tol name=value`.
pub const TOLERANCE_NAMES: &[&str] = &["majorize", "schur", "projection", "projection_total"];

const FILE_KEYS: &[&str] = &[
    "symbol", "ranks", "seed", "output_dir", "format", "map", "samples", "trials",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    ClaimA,
    ClaimB,
    Schur,
    Projection,
    Szego,
    Density,
    WeakPairing,
    /// Every experiment above.
    Suite,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ClaimA => "claim-a",
            Experiment::ClaimB => "claim-b",
            Experiment::Schur => "schur",
            Experiment::Projection => "projection",
            Experiment::Szego => "szego",
            Experiment::Density => "density",
            Experiment::WeakPairing => "weak-pairing",
            Experiment::Suite => "suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Quantize,
    Spectrum,
    Rearrange,
    Majorize,
    ApproxMap,
    Experiment(Experiment),
}

impl Command {
    pub fn name(self) -> String {
        match self {
            Command::Quantize => "quantize".into(),
            Command::Spectrum => "spectrum".into(),
            Command::Rearrange => "rearrange".into(),
            Command::Majorize => "majorize".into(),
            Command::ApproxMap => "approx-map".into(),
            Command::Experiment(e) => format!("experiment-{}", e.name()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "toeplitz-lab", version, about = "Toeplitz quantization and majorization experiments")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,

    /// File of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Battery symbol name or `poly:c0,c1,...` (zonal polynomial in z).
    #[arg(long, global = true)]
    symbol: Option<String>,

    /// Comma-separated, strictly increasing ranks.
    #[arg(long, global = true)]
    ranks: Option<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// `identity`, `rotation:<float>`, `doubling` or `baker`.
    #[arg(long, global = true)]
    map: Option<String>,

    /// Hull samples for claim-b.
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Random unitaries per rank for schur.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Tolerance override `name=value` (repeatable).
    #[arg(long = "tol", global = true)]
    tolerances: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Assemble T^m_f and write its entries.
    Quantize,
    /// Eigenvalues of T^m_f.
    Spectrum,
    /// Decreasing rearrangement f* next to Λ^m.
    Rearrange,
    /// Certificate for diag(T^m_f) ≺ λ(T^m_f).
    Majorize,
    /// Best dyadic permutation approximating a map.
    ApproxMap,
    /// Run a named experiment.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub symbol: String,
    /// Empty means the command's default schedule.
    pub ranks: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: Format,
    pub map: String,
    pub samples: usize,
    pub trials: usize,
    pub tolerances: BTreeMap<String, f64>,
}

impl RunConfig {
    pub fn tolerance(&self, name: &str) -> Option<f64> {
        self.tolerances.get(name).copied()
    }
}

/// Parses `args` (without the program name). `file` is the content of a
/// `key = value` file; when `None`, the file named by `--config` is read.
pub fn parse_config(args: &[String], file: Option<&str>) -> Result<RunConfig, CliError> {
    let cli = Cli::try_parse_from(std::iter::once("toeplitz-lab".to_string()).chain(args.iter().cloned()))
        .map_err(CliError::Clap)?;
    let file_text = match (file, &cli.config) {
        (Some(text), _) => Some(text.to_string()),
        (None, Some(path)) => Some(std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?),
        (None, None) => None,
    };
    let values = match file_text {
        Some(t) => parse_key_values(&t)?,
        None => BTreeMap::new(),
    };
    let from_file = |key: &str| values.get(key).cloned();

    let command = match cli.command {
        CliCommand::Quantize => Command::Quantize,
        CliCommand::Spectrum => Command::Spectrum,
        CliCommand::Rearrange => Command::Rearrange,
        CliCommand::Majorize => Command::Majorize,
        CliCommand::ApproxMap => Command::ApproxMap,
        CliCommand::Experiment { name } => Command::Experiment(name),
    };

    let symbol = cli.symbol.or_else(|| from_file("symbol")).unwrap_or_else(|| "x3".into());
    resolve_symbol(&symbol)?;

    let ranks = match cli.ranks.or_else(|| from_file("ranks")) {
        Some(r) => parse_ranks(&r)?,
        None => Vec::new(),
    };

    let seed = match cli.seed {
        Some(s) => s,
        None => from_file("seed").map(|s| parse_num("seed", &s)).transpose()?.unwrap_or(0),
    };

    let output_dir = cli
        .output_dir
        .or_else(|| from_file("output_dir").map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let format = match cli.format {
        Some(f) => f,
        None => match from_file("format").as_deref() {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => return Err(CliError::Usage(format!("format: unknown value '{other}' (csv, json)"))),
        },
    };

    let map = cli.map.or_else(|| from_file("map")).unwrap_or_else(|| "rotation:0.25".into());
    MeasurePreservingMap::from_name(&map).map_err(|e| CliError::Usage(format!("map: {e}")))?;

    let samples = match cli.samples {
        Some(s) => s,
        None => from_file("samples").map(|s| parse_num("samples", &s)).transpose()?.unwrap_or(200),
    };
    let trials = match cli.trials {
        Some(s) => s,
        None => from_file("trials").map(|s| parse_num("trials", &s)).transpose()?.unwrap_or(1000),
    };
    if samples == 0 || trials == 0 {
        return Err(CliError::Usage("samples and trials must be positive".into()));
    }

    let mut tolerances = BTreeMap::new();
    for (k, v) in values.iter().filter_map(|(k, v)| k.strip_prefix("tol.").map(|n| (n, v))) {
        tolerances.insert(check_tolerance_name(k)?, parse_tolerance(k, v)?);
    }
    for spec in &cli.tolerances {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--tol expects name=value, got '{spec}'")))?;
        let k = k.trim();
        tolerances.insert(check_tolerance_name(k)?, parse_tolerance(k, v.trim())?);
    }

    Ok(RunConfig {
        command,
        symbol,
        ranks,
        seed,
        output_dir,
        format,
        map,
        samples,
        trials,
        tolerances,
    })
}

fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if !FILE_KEYS.contains(&k) && !k.starts_with("tol.") {
            return Err(CliError::Usage(format!("config line {}: unknown key '{k}'", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse '{v}'")))
}

fn check_tolerance_name(name: &str) -> Result<String, CliError> {
    if TOLERANCE_NAMES.contains(&name) {
        Ok(name.to_string())
    } else {
        Err(CliError::Usage(format!(
            "unknown tolerance '{name}' (known: {})",
            TOLERANCE_NAMES.join(", ")
        )))
    }
}

fn parse_tolerance(name: &str, v: &str) -> Result<f64, CliError> {
    let t: f64 = parse_num(&format!("tol.{name}"), v)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(CliError::Usage(format!("tol.{name} must be a finite non-negative number")));
    }
    Ok(t)
}

/// Comma-separated positive, strictly increasing ranks.
pub fn parse_ranks(s: &str) -> Result<Vec<usize>, CliError> {
    let ranks = s
        .split(',')
        .map(|t| parse_num::<usize>("ranks", t))
        .collect::<Result<Vec<_>, _>>()?;
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(CliError::Usage("ranks must be positive".into()));
    }
    if ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("ranks must be strictly increasing".into()));
    }
    Ok(ranks)
}

/// Battery name or `poly:c0,c1,...`.
pub fn resolve_symbol(name: &str) -> Result<SphereSymbol, CliError> {
    if let Some(coeffs) = name.strip_prefix("poly:") {
        let c = coeffs
            .split(',')
            .map(|t| parse_num::<f64>("symbol", t))
            .collect::<Result<Vec<_>, _>>()?;
        if c.is_empty() {
            return Err(CliError::Usage("symbol: empty polynomial".into()));
        }
        return SphereSymbol::zonal_polynomial(name, c).map_err(|e| CliError::Usage(format!("symbol: {e}")));
    }
    battery_symbol(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown symbol '{name}' (battery names or poly:c0,c1,...)"
        ))
    })
}
