//! Content-addressed store of result records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{CommandKind, FamilyKind, PotentialConfig, RunConfig, TestFunctionKind};
use crate::record::ResultRecord;
use crate::CliError;

pub const CACHE_DIR_ENV: &str = "DIMRED_CACHE_DIR";

/// Everything that determines a payload. Output path, format and worker
/// count do not.
#[derive(Serialize)]
struct KeyFields<'a> {
    command: CommandKind,
    n: Option<usize>,
    n_max: Option<usize>,
    gas_dimension: Option<usize>,
    polymer_dimension: Option<usize>,
    potential: PotentialConfig,
    n_samples: u64,
    seed: Option<u64>,
    exact: bool,
    count_only: bool,
    test_function: Option<TestFunctionKind>,
    family: Option<FamilyKind>,
    fit_min: Option<usize>,
    version: &'a str,
}

/// Hex SHA-256 of the canonical JSON of the payload-determining fields.
pub fn cache_key(config: &RunConfig, version: &str) -> String {
    let fields = KeyFields {
        command: config.command,
        n: config.n,
        n_max: config.n_max,
        gas_dimension: config.gas_dimension,
        polymer_dimension: config.polymer_dimension,
        potential: config.potential,
        n_samples: config.n_samples,
        seed: config.seed,
        exact: config.exact,
        count_only: config.count_only,
        test_function: config.test_function,
        family: config.family,
        fit_min: config.fit_min,
        version,
    };
    let bytes = serde_json::to_vec(&fields).expect("key fields serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `--cache-dir`, else `$DIMRED_CACHE_DIR`, else no cache.
    pub fn configured(flag: Option<&Path>) -> Option<Self> {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .map(Self::new)
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// The stored record for `config`, if any. Unreadable entries count as misses.
    pub fn lookup(&self, config: &RunConfig, version: &str) -> Option<ResultRecord> {
        let text = fs::read_to_string(self.path(&cache_key(config, version))).ok()?;
        let record: ResultRecord = serde_json::from_str(&text).ok()?;
        (record.version == version).then_some(record)
    }

    pub fn store(&self, record: &ResultRecord) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(&cache_key(&record.config, &record.version));
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(serde_json::to_string_pretty(record)?.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Flags, OutputFormat};

    fn config(seed: u64) -> RunConfig {
        let f = Flags {
            n: Some(3),
            gas_dim: Some(1),
            seed: Some(seed),
            ..Flags::default()
        };
        RunConfig::resolve(CommandKind::Verify, &f).unwrap()
    }

    #[test]
    fn key_depends_on_seed_and_version_only_among_run_fields() {
        let a = config(1);
        assert_eq!(cache_key(&a, "0.1.0"), cache_key(&a.clone(), "0.1.0"));
        assert_ne!(cache_key(&a, "0.1.0"), cache_key(&config(2), "0.1.0"));
        assert_ne!(cache_key(&a, "0.1.0"), cache_key(&a, "0.1.1"));
        let mut b = a.clone();
        b.workers = Some(3);
        b.format = OutputFormat::Csv;
        b.output = Some("x.csv".into());
        assert_eq!(cache_key(&a, "0.1.0"), cache_key(&b, "0.1.0"));
        assert_eq!(cache_key(&a, "v").len(), 64);
    }
}
