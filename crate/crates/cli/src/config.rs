//! Command-line flags, config files, and the resolved run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

pub const DEFAULT_SAMPLES: u64 = 1_000_000;
pub const DEFAULT_FIT_MIN: usize = 10;
pub const DEFAULT_EXPONENT_N_MAX: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Trees,
    BpCoeff,
    GasCoeff,
    Verify,
    Green,
    ForestRoot,
    Exponents,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Trees => "trees",
            CommandKind::BpCoeff => "bp-coeff",
            CommandKind::GasCoeff => "gas-coeff",
            CommandKind::Verify => "verify",
            CommandKind::Green => "green",
            CommandKind::ForestRoot => "forest-root",
            CommandKind::Exponents => "exponents",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    #[default]
    HardCore,
    /// `v(r²) = amplitude · e^{-r²}`
    Gaussian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunctionKind {
    #[default]
    GaussianBump,
    RaisedCosine,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// every coefficient equal to the amplitude
    #[default]
    Uniform,
    /// coefficients drawn from the seed
    Random,
}

#[derive(Parser, Debug)]
#[command(name = "dimred", version, about = "Branched polymers, repulsive gases and their series coefficients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enumerate or count labeled trees
    Trees(Flags),
    /// Polymer generating-function coefficients
    BpCoeff(Flags),
    /// Gas pressure coefficients
    GasCoeff(Flags),
    /// Compare gas and mapped polymer coefficients at one order
    Verify(Flags),
    /// Compare two-point coefficients at one order
    Green(Flags),
    /// Sum the forest-root terms of a Gaussian test function
    ForestRoot(Flags),
    /// Fit exponents and critical activity to an exact polymer table
    Exponents(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Trees(f) => (CommandKind::Trees, f),
            Command::BpCoeff(f) => (CommandKind::BpCoeff, f),
            Command::GasCoeff(f) => (CommandKind::GasCoeff, f),
            Command::Verify(f) => (CommandKind::Verify, f),
            Command::Green(f) => (CommandKind::Green, f),
            Command::ForestRoot(f) => (CommandKind::ForestRoot, f),
            Command::Exponents(f) => (CommandKind::Exponents, f),
        }
    }
}

/// Flags shared by every command. A config file (TOML, same keys) fills in
/// whatever the command line leaves unset.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Flags {
    /// Order
    #[arg(long)]
    pub n: Option<usize>,
    /// Highest order of a table
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    /// Gas dimension
    #[arg(long = "D")]
    #[serde(rename = "D")]
    pub gas_dim: Option<usize>,
    /// Polymer dimension
    #[arg(long = "d")]
    #[serde(rename = "d")]
    pub polymer_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub potential: Option<PotentialKind>,
    /// Potential amplitude, or the coefficient of the uniform forest-root family
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Monte Carlo samples (accepts 1e6)
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "de_count")]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: DIMRED_WORKERS or all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long = "test-function", value_enum)]
    pub test_function: Option<TestFunctionKind>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    /// First order of the exponent fit window
    #[arg(long = "fit-min")]
    pub fit_min: Option<usize>,
    /// Use closed forms instead of Monte Carlo
    #[arg(long)]
    #[serde(default)]
    pub exact: bool,
    /// Print only the number of trees
    #[arg(long = "count-only")]
    #[serde(default)]
    pub count_only: bool,
    /// Recompute even when the cache holds a result
    #[arg(long)]
    #[serde(default)]
    pub force: bool,
    /// Result cache directory (default: DIMRED_CACHE_DIR, else no cache)
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    /// TOML file with default values for these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Flags {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// `self` wins wherever it is set.
    pub fn over(self, file: Flags) -> Flags {
        Flags {
            n: self.n.or(file.n),
            n_max: self.n_max.or(file.n_max),
            gas_dim: self.gas_dim.or(file.gas_dim),
            polymer_dim: self.polymer_dim.or(file.polymer_dim),
            potential: self.potential.or(file.potential),
            amplitude: self.amplitude.or(file.amplitude),
            samples: self.samples.or(file.samples),
            seed: self.seed.or(file.seed),
            workers: self.workers.or(file.workers),
            output: self.output.or(file.output),
            format: self.format.or(file.format),
            test_function: self.test_function.or(file.test_function),
            family: self.family.or(file.family),
            fit_min: self.fit_min.or(file.fit_min),
            exact: self.exact || file.exact,
            count_only: self.count_only || file.count_only,
            force: self.force || file.force,
            cache_dir: self.cache_dir.or(file.cache_dir),
            config: self.config,
        }
    }
}

/// Parses a sample count written as an integer or in float notation (`1e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim().replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    count_from_f64(f)
}

fn count_from_f64(f: f64) -> Result<u64, String> {
    if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= 9_007_199_254_740_992.0 {
        Ok(f as u64)
    } else {
        Err(format!("not a whole sample count: {f}"))
    }
}

fn de_count<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Float(f64),
        Text(String),
    }
    let parsed = match Raw::deserialize(d)? {
        Raw::Int(v) => Ok(v),
        Raw::Float(f) => count_from_f64(f),
        Raw::Text(s) => parse_count(&s),
    };
    parsed.map(Some).map_err(serde::de::Error::custom)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    pub amplitude: f64,
}

/// Fully resolved and validated configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub gas_dimension: Option<usize>,
    pub polymer_dimension: Option<usize>,
    pub potential: PotentialConfig,
    pub n_samples: u64,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub exact: bool,
    pub count_only: bool,
    pub test_function: Option<TestFunctionKind>,
    pub family: Option<FamilyKind>,
    pub fit_min: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn require<T>(v: Option<T>, name: &str, cmd: CommandKind) -> Result<T, CliError> {
    v.ok_or_else(|| invalid(format!("{cmd} needs --{name}")))
}

fn in_range(v: usize, name: &str, lo: usize, hi: usize) -> Result<usize, CliError> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(format!("--{name} {v} is outside {lo}..={hi}")))
    }
}

/// Orders `1..=n_max` from `--n-max`, or the single order `--n`.
fn orders(flags: &Flags, cmd: CommandKind) -> Result<(Option<usize>, Option<usize>), CliError> {
    match (flags.n, flags.n_max) {
        (Some(_), Some(_)) => Err(invalid(format!("{cmd} takes --n or --n-max, not both"))),
        (None, None) => Err(invalid(format!("{cmd} needs --n or --n-max"))),
        (n, m) => Ok((n, m)),
    }
}

impl RunConfig {
    pub fn resolve(command: CommandKind, flags: &Flags) -> Result<Self, CliError> {
        let potential = PotentialConfig {
            kind: flags.potential.unwrap_or_default(),
            amplitude: flags.amplitude.unwrap_or(1.0),
        };
        if !(potential.amplitude.is_finite() && potential.amplitude > 0.0) {
            return Err(invalid(format!("--amplitude must be positive, got {}", potential.amplitude)));
        }
        let n_samples = flags.samples.unwrap_or(DEFAULT_SAMPLES);
        if n_samples < 2 {
            return Err(invalid("--samples must be at least 2"));
        }
        if flags.workers == Some(0) {
            return Err(invalid("--workers must be at least 1"));
        }
        let mut cfg = RunConfig {
            command,
            n: None,
            n_max: None,
            gas_dimension: None,
            polymer_dimension: None,
            potential,
            n_samples,
            seed: flags.seed,
            workers: flags.workers,
            output: flags.output.clone(),
            format: flags.format.unwrap_or_default(),
            exact: flags.exact,
            count_only: flags.count_only,
            test_function: None,
            family: None,
            fit_min: None,
        };
        let hard = potential.kind == PotentialKind::HardCore;
        let stochastic = match command {
            CommandKind::Trees => {
                let n = require(flags.n, "n", command)?;
                cfg.n = Some(if flags.count_only {
                    in_range(n, "n", 1, 17)?
                } else {
                    in_range(n, "n", 1, dimred_core::combinatorics::DEFAULT_TREE_BOUND)?
                });
                false
            }
            CommandKind::BpCoeff => {
                let d = require(flags.polymer_dim, "d", command)?;
                (cfg.n, cfg.n_max) = orders(flags, command)?;
                let top = cfg.n.or(cfg.n_max).unwrap_or(0);
                if flags.exact {
                    if !hard || !(2..=3).contains(&d) {
                        return Err(invalid("closed forms exist only for hard-core polymers in d = 2, 3"));
                    }
                    in_range(top, "n", 1, 500)?;
                } else {
                    in_range(d, "d", 2, 8)?;
                    in_range(top, "n", 1, 12)?;
                }
                cfg.polymer_dimension = Some(d);
                !flags.exact
            }
            CommandKind::GasCoeff => {
                let dim = require(flags.gas_dim, "D", command)?;
                (cfg.n, cfg.n_max) = orders(flags, command)?;
                let top = cfg.n.or(cfg.n_max).unwrap_or(0);
                if flags.exact {
                    if !hard || dim > 1 {
                        return Err(invalid("exact gas series exist only for hard cores in D = 0, 1"));
                    }
                    in_range(top, "n", 1, 500)?;
                } else {
                    in_range(dim, "D", 1, 6)?;
                    in_range(top, "n", 1, dimred_core::gas::MAX_GAS_ORDER)?;
                }
                cfg.gas_dimension = Some(dim);
                !flags.exact
            }
            CommandKind::Verify => {
                let n = require(flags.n, "n", command)?;
                let dim = require(flags.gas_dim, "D", command)?;
                if flags.exact {
                    if dim != 1 || !hard {
                        return Err(invalid("exact verification compares hard rods (D = 1) with d = 3 polymers"));
                    }
                    in_range(n, "n", 1, 500)?;
                } else {
                    in_range(n, "n", 2, dimred_core::reduction::MAX_VERIFY_ORDER)?;
                    in_range(dim, "D", 1, 3)?;
                }
                cfg.n = Some(n);
                cfg.gas_dimension = Some(dim);
                cfg.polymer_dimension = Some(dim + 2);
                !flags.exact
            }
            CommandKind::Green => {
                if !hard {
                    return Err(invalid("two-point coefficients are implemented for hard cores only"));
                }
                let n = require(flags.n, "n", command)?;
                let dim = flags.gas_dim.unwrap_or(1);
                cfg.n = Some(in_range(n, "n", 1, dimred_core::reduction::MAX_GREEN_ORDER)?);
                cfg.gas_dimension = Some(in_range(dim, "D", 1, 3)?);
                cfg.polymer_dimension = Some(dim + 2);
                cfg.test_function = Some(flags.test_function.unwrap_or_default());
                n > 1
            }
            CommandKind::ForestRoot => {
                let n = require(flags.n, "n", command)?;
                cfg.n = Some(in_range(n, "n", 1, dimred_core::forestroot::MAX_FOREST_ROOT_N)?);
                cfg.family = Some(flags.family.unwrap_or_default());
                true
            }
            CommandKind::Exponents => {
                let d = require(flags.polymer_dim, "d", command)?;
                if !(2..=3).contains(&d) {
                    return Err(invalid("exponent fits use the exact tables in d = 2, 3"));
                }
                let n_max = in_range(flags.n_max.unwrap_or(DEFAULT_EXPONENT_N_MAX), "n-max", 6, 500)?;
                let fit_min = flags.fit_min.unwrap_or(DEFAULT_FIT_MIN);
                if fit_min < 1 || fit_min + 3 > n_max {
                    return Err(invalid(format!("fit window {fit_min}..={n_max} needs at least 4 orders")));
                }
                cfg.polymer_dimension = Some(d);
                cfg.n_max = Some(n_max);
                cfg.fit_min = Some(fit_min);
                false
            }
        };
        if stochastic && cfg.seed.is_none() {
            return Err(invalid(format!("{command} is stochastic and needs --seed")));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags::default()
    }

    #[test]
    fn counts_in_float_notation() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("2500"), Ok(2500));
        assert_eq!(parse_count("10_000"), Ok(10_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert!(parse_count("abc").is_err());
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let f = Flags {
            n: Some(3),
            gas_dim: Some(1),
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::Verify, &f).is_err());
        let f = Flags { seed: Some(1), ..f };
        assert!(RunConfig::resolve(CommandKind::Verify, &f).is_ok());
        let exact = Flags {
            n: Some(2),
            polymer_dim: Some(2),
            exact: true,
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::BpCoeff, &exact).is_ok());
    }

    #[test]
    fn invalid_combinations() {
        let gauss_exact = Flags {
            n: Some(2),
            polymer_dim: Some(3),
            exact: true,
            potential: Some(PotentialKind::Gaussian),
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::BpCoeff, &gauss_exact).is_err());
        let d4_exact = Flags {
            n: Some(2),
            polymer_dim: Some(4),
            exact: true,
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::BpCoeff, &d4_exact).is_err());
        let both = Flags {
            n: Some(2),
            n_max: Some(3),
            polymer_dim: Some(2),
            exact: true,
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::BpCoeff, &both).is_err());
        let trees = Flags { n: Some(9), ..flags() };
        assert!(RunConfig::resolve(CommandKind::Trees, &trees).is_err());
        let count = Flags {
            n: Some(9),
            count_only: true,
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::Trees, &count).is_ok());
        let window = Flags {
            polymer_dim: Some(2),
            n_max: Some(12),
            fit_min: Some(10),
            ..flags()
        };
        assert!(RunConfig::resolve(CommandKind::Exponents, &window).is_err());
    }

    #[test]
    fn command_line_overrides_file() {
        let file: Flags = toml::from_str("n = 3\nD = 2\nsamples = 1e5\nseed = 9\npotential = \"gaussian\"\n").unwrap();
        assert_eq!(file.samples, Some(100_000));
        let cli = Flags {
            n: Some(4),
            ..flags()
        };
        let merged = cli.over(file);
        assert_eq!(merged.n, Some(4));
        assert_eq!(merged.gas_dim, Some(2));
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.potential, Some(PotentialKind::Gaussian));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<Flags>("nn = 3\n").is_err());
    }
}
