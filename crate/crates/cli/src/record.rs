//! Result records and their JSON / CSV renderings.

use serde::{Deserialize, Serialize};

use dimred_core::analysis::{ExponentFit, RatioEstimate, SeriesValue};
use dimred_core::reduction::ReductionReport;
use dimred_core::MCEstimate;

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Version stamp written into every record and cache key.
pub fn version_stamp() -> String {
    format!("dimred {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub n: usize,
    pub value: SeriesValue,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestTerm {
    pub edges: Vec<(usize, usize)>,
    pub roots: Vec<usize>,
    pub estimate: MCEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Trees {
        n: usize,
        count: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trees: Option<Vec<Vec<(usize, usize)>>>,
    },
    Coefficients {
        model: String,
        dimension: usize,
        potential: String,
        rows: Vec<CoefficientRow>,
    },
    Reduction(ReductionReport),
    ForestRoot {
        n: usize,
        f0: f64,
        total: MCEstimate,
        z_score: f64,
        pass: bool,
        terms: Vec<ForestTerm>,
    },
    Exponents {
        d: usize,
        fit: ExponentFit,
        ratio: RatioEstimate,
        stirling_ratio: f64,
        rows: Vec<CoefficientRow>,
    },
}

impl Payload {
    /// False when a comparison failed its z-score test.
    pub fn passed(&self) -> bool {
        match self {
            Payload::Reduction(r) => r.pass,
            Payload::ForestRoot { pass, .. } => *pass,
            _ => true,
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            Payload::Trees { n, count, trees } => match trees {
                Some(trees) => {
                    w.write_record(["index", "edges"])?;
                    for (k, t) in trees.iter().enumerate() {
                        let edges: Vec<String> = t.iter().map(|(i, j)| format!("{i}-{j}")).collect();
                        w.write_record([k.to_string(), edges.join(" ")])?;
                    }
                }
                None => {
                    w.write_record(["n", "count"])?;
                    w.write_record([n.to_string(), count.to_string()])?;
                }
            },
            Payload::Coefficients { rows, .. } | Payload::Exponents { rows, .. } => {
                w.write_record(["n", "value", "std_error", "ln_abs", "method", "n_samples", "seed"])?;
                for r in rows {
                    let (se, samples, seed) = match r.value {
                        SeriesValue::Mc(e) => (e.std_error, e.n_samples.to_string(), e.seed.to_string()),
                        _ => (0.0, String::new(), String::new()),
                    };
                    w.write_record([
                        r.n.to_string(),
                        float(r.value.value()),
                        float(se),
                        float(r.value.ln_abs()),
                        r.method.clone(),
                        samples,
                        seed,
                    ])?;
                }
            }
            Payload::Reduction(r) => {
                w.write_record([
                    "n", "D", "d", "lhs", "lhs_std_error", "rhs_raw", "rhs_raw_std_error", "rhs_mapped", "rhs_mapped_std_error", "z_score", "pass",
                ])?;
                w.write_record([
                    r.n.to_string(),
                    r.gas_dimension.to_string(),
                    r.polymer_dimension.to_string(),
                    float(r.lhs.mean()),
                    float(r.lhs.std_error()),
                    float(r.rhs_raw.mean()),
                    float(r.rhs_raw.std_error()),
                    float(r.rhs_mapped.mean()),
                    float(r.rhs_mapped.std_error()),
                    float(r.z_score),
                    r.pass.to_string(),
                ])?;
            }
            Payload::ForestRoot { terms, .. } => {
                w.write_record(["edges", "roots", "mean", "std_error", "n_samples", "seed"])?;
                for t in terms {
                    let edges: Vec<String> = t.edges.iter().map(|(i, j)| format!("{i}-{j}")).collect();
                    let roots: Vec<String> = t.roots.iter().map(usize::to_string).collect();
                    w.write_record([
                        edges.join(" "),
                        roots.join(" "),
                        float(t.estimate.mean),
                        float(t.estimate.std_error),
                        t.estimate.n_samples.to_string(),
                        t.estimate.seed.to_string(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest decimal that round-trips to the same `f64`.
fn float(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub version: String,
    pub timestamp: String,
    pub config: RunConfig,
    pub payload: Payload,
}

impl ResultRecord {
    pub fn new(config: RunConfig, payload: Payload) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: version_stamp(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
            payload,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn estimate(mean: f64, se: f64) -> MCEstimate {
        MCEstimate {
            mean,
            std_error: se,
            n_samples: 1000,
            seed: 7,
            n_workers: 1,
        }
    }

    proptest! {
        #[test]
        fn payload_floats_round_trip_exactly(mean in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
                                             se in 0.0f64..1e300, n in 1usize..50) {
            let p = Payload::Coefficients {
                model: "m".into(),
                dimension: 3,
                potential: "hard-core".into(),
                rows: vec![
                    CoefficientRow { n, value: SeriesValue::Mc(estimate(mean, se)), method: "mc".into() },
                    CoefficientRow { n: n + 1, value: SeriesValue::exact(mean), method: "exact".into() },
                ],
            };
            let back: Payload = serde_json::from_str(&p.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn csv_uses_round_trip_decimals() {
        let p = Payload::Coefficients {
            model: "m".into(),
            dimension: 2,
            potential: "hard-core".into(),
            rows: vec![CoefficientRow {
                n: 2,
                value: SeriesValue::exact(std::f64::consts::PI),
                method: "exact_formula".into(),
            }],
        };
        let csv = p.to_csv().unwrap();
        let line = csv.lines().nth(1).unwrap();
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, std::f64::consts::PI);
    }

    #[test]
    fn tree_count_csv() {
        let p = Payload::Trees {
            n: 4,
            count: 16,
            trees: None,
        };
        assert_eq!(p.to_csv().unwrap(), "n,count\n4,16\n");
        assert!(!p.to_json().unwrap().contains("\"trees\":"));
    }
}
