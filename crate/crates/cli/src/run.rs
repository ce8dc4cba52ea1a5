use std::fs;
use std::path::PathBuf;

use dimred_core::analysis::{bp_exact_table, fit_theta, ratio_extrapolate, stirling_asymptotic_ln, SeriesTable, SeriesValue};
use dimred_core::combinatorics::{enumerate_trees, tree_count};
use dimred_core::forestroot::{forest_root_terms, GaussianFamily, SmoothTestFunction, Variables};
use dimred_core::gas::{mayer_coefficient_mc, series_exact};
use dimred_core::mc::{derive_seed, z_score, WORKERS_ENV};
use dimred_core::polymer::{bp_coefficient, bp_exact_ln_coefficient};
use dimred_core::reduction::{verify_exact_order, verify_green_order, verify_order, verify_soft_order, GreenTestFunction, PASS_Z};
use dimred_core::{MCEstimate, PotentialSpec, SoftPotential, Value};

use crate::cache::Cache;
use crate::config::{CommandKind, FamilyKind, Flags, OutputFormat, PotentialKind, RunConfig, TestFunctionKind};
use crate::record::{version_stamp, CoefficientRow, ForestTerm, Payload, ResultRecord};
use crate::CliError;

/// Result of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub record: ResultRecord,
    /// Payload in the requested format, as printed on stdout.
    pub rendered: String,
    pub cache_hit: bool,
    pub cache_path: Option<PathBuf>,
}

/// Resolves the configuration, consults the cache, computes and renders.
pub fn execute(kind: CommandKind, flags: Flags) -> Result<Outcome, CliError> {
    let flags = match &flags.config {
        Some(path) => {
            let file = Flags::from_file(path)?;
            flags.over(file)
        }
        None => flags,
    };
    let config = RunConfig::resolve(kind, &flags)?;
    if let Some(w) = config.workers {
        std::env::set_var(WORKERS_ENV, w.to_string());
    }
    let cache = Cache::configured(flags.cache_dir.as_deref());
    let version = version_stamp();

    let hit = match (&cache, flags.force) {
        (Some(c), false) => c.lookup(&config, &version),
        _ => None,
    };
    let cache_hit = hit.is_some();
    let record = match hit {
        Some(r) => r,
        None => ResultRecord::new(config.clone(), compute(&config)?),
    };
    let cache_path = match (&cache, cache_hit) {
        (Some(c), false) => Some(c.store(&record)?),
        _ => None,
    };

    let rendered = match config.format {
        OutputFormat::Json => record.payload.to_json()?,
        OutputFormat::Csv => record.payload.to_csv()?,
    };
    if let Some(path) = &config.output {
        let body = match config.format {
            OutputFormat::Json => serde_json::to_string_pretty(&record)? + "\n",
            OutputFormat::Csv => rendered.clone(),
        };
        fs::write(path, body)?;
    }
    Ok(Outcome {
        record,
        rendered,
        cache_hit,
        cache_path,
    })
}

fn potential(cfg: &RunConfig) -> PotentialSpec {
    match cfg.potential.kind {
        PotentialKind::HardCore => PotentialSpec::HardCore,
        PotentialKind::Gaussian => PotentialSpec::Soft(SoftPotential::gaussian(cfg.potential.amplitude)),
    }
}

fn test_function(kind: TestFunctionKind) -> Result<GreenTestFunction, CliError> {
    Ok(match kind {
        TestFunctionKind::GaussianBump => GreenTestFunction::gaussian_bump(0.5, 1.5)?,
        TestFunctionKind::RaisedCosine => GreenTestFunction::raised_cosine(1.5)?,
    })
}

fn order_list(cfg: &RunConfig) -> Vec<usize> {
    match (cfg.n, cfg.n_max) {
        (Some(n), _) => vec![n],
        (None, Some(m)) => (1..=m).collect(),
        (None, None) => Vec::new(),
    }
}

fn series_value(v: Value) -> SeriesValue {
    match v {
        Value::Exact { value } => SeriesValue::exact(value),
        Value::Mc(e) => SeriesValue::Mc(e),
    }
}

fn table_rows(table: &SeriesTable, orders: &[usize], method: &str) -> Vec<CoefficientRow> {
    orders
        .iter()
        .filter_map(|&n| {
            table.get(n).map(|v| CoefficientRow {
                n,
                value: *v,
                method: method.to_string(),
            })
        })
        .collect()
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.expect("validated: stochastic runs carry a seed")
}

/// Runs the configured computation.
pub fn compute(cfg: &RunConfig) -> Result<Payload, CliError> {
    let orders = order_list(cfg);
    let top = orders.last().copied().unwrap_or(0);
    Ok(match cfg.command {
        CommandKind::Trees => {
            let n = cfg.n.unwrap_or(1);
            let trees = if cfg.count_only {
                None
            } else {
                Some(enumerate_trees(n)?.map(|t| t.edges().to_vec()).collect())
            };
            Payload::Trees {
                n,
                count: tree_count(n),
                trees,
            }
        }
        CommandKind::BpCoeff => {
            let d = cfg.polymer_dimension.unwrap_or(2);
            let pot = potential(cfg);
            let rows = if cfg.exact {
                table_rows(&bp_exact_table(d, top)?, &orders, "exact_formula")
            } else {
                let mut rows = Vec::with_capacity(orders.len());
                for &n in &orders {
                    let c = bp_coefficient(n, d, &pot, cfg.n_samples, derive_seed(seed(cfg), n as u64))?;
                    rows.push(CoefficientRow {
                        n,
                        value: series_value(c.value),
                        method: c.method.name().into(),
                    });
                }
                rows
            };
            Payload::Coefficients {
                model: "branched polymer".into(),
                dimension: d,
                potential: pot.label(),
                rows,
            }
        }
        CommandKind::GasCoeff => {
            let dim = cfg.gas_dimension.unwrap_or(1);
            let pot = potential(cfg);
            let rows = if cfg.exact {
                let method = if dim == 0 { "exact_d0" } else { "exact_d1" };
                table_rows(&series_exact(dim, top)?, &orders, method)
            } else {
                let mut rows = Vec::with_capacity(orders.len());
                for &n in &orders {
                    let row = if n == 1 {
                        CoefficientRow {
                            n,
                            value: SeriesValue::exact(1.0),
                            method: "exact".into(),
                        }
                    } else {
                        let c = mayer_coefficient_mc(n, dim, &pot, cfg.n_samples, derive_seed(seed(cfg), n as u64))?;
                        CoefficientRow {
                            n,
                            value: series_value(c.value),
                            method: c.method.name().into(),
                        }
                    };
                    rows.push(row);
                }
                rows
            };
            Payload::Coefficients {
                model: "repulsive gas".into(),
                dimension: dim,
                potential: pot.label(),
                rows,
            }
        }
        CommandKind::Verify => {
            let n = cfg.n.unwrap_or(2);
            let dim = cfg.gas_dimension.unwrap_or(1);
            let report = if cfg.exact {
                verify_exact_order(n)?
            } else {
                match cfg.potential.kind {
                    PotentialKind::HardCore => verify_order(n, dim, cfg.n_samples, seed(cfg))?,
                    PotentialKind::Gaussian => verify_soft_order(n, dim, &potential(cfg), cfg.n_samples, seed(cfg))?,
                }
            };
            Payload::Reduction(report)
        }
        CommandKind::Green => {
            let f = test_function(cfg.test_function.unwrap_or_default())?;
            let n = cfg.n.unwrap_or(1);
            let dim = cfg.gas_dimension.unwrap_or(1);
            Payload::Reduction(verify_green_order(n, dim, &f, cfg.n_samples, cfg.seed.unwrap_or(0))?)
        }
        CommandKind::ForestRoot => {
            let n = cfg.n.unwrap_or(1);
            let f = match cfg.family.unwrap_or_default() {
                FamilyKind::Uniform => GaussianFamily::uniform(n, cfg.potential.amplitude)?,
                FamilyKind::Random => GaussianFamily::random(n, seed(cfg))?,
            };
            let terms = forest_root_terms(&f, cfg.n_samples, seed(cfg))?;
            let total = MCEstimate::sum_independent(terms.iter().map(|(_, e)| e), seed(cfg));
            let f0 = f.value(&Variables::zeros(n));
            let z = z_score(total.mean, total.std_error, f0, 0.0);
            Payload::ForestRoot {
                n,
                f0,
                total,
                z_score: z,
                pass: z <= PASS_Z,
                terms: terms
                    .into_iter()
                    .map(|(fr, estimate)| ForestTerm {
                        edges: fr.edges().to_vec(),
                        roots: fr.roots().to_vec(),
                        estimate,
                    })
                    .collect(),
            }
        }
        CommandKind::Exponents => {
            let d = cfg.polymer_dimension.unwrap_or(2);
            let n_max = cfg.n_max.unwrap_or(50);
            let table = bp_exact_table(d, n_max)?;
            let fit = fit_theta(&table, cfg.fit_min.unwrap_or(10)..=n_max)?;
            let ratio = ratio_extrapolate(&table)?;
            let stirling_ratio = if d == 3 {
                (stirling_asymptotic_ln(n_max) - bp_exact_ln_coefficient(n_max, 3)?).exp()
            } else {
                1.0
            };
            let all: Vec<usize> = (1..=n_max).collect();
            Payload::Exponents {
                d,
                fit,
                ratio,
                stirling_ratio,
                rows: table_rows(&table, &all, "exact_formula"),
            }
        }
    })
}
