//! Experiment configuration and manifest entries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convex::ConvexSpec;
use crate::error::{Error, Result};
use crate::model::harmonic::HarmonicSpec;
use crate::model::{DomainGeometry, OperatorModel, Point};
use crate::path::ensemble::SEED_ENV;
use crate::verify::{IdentityId, Pathway};

pub const DEFAULT_SEED: u64 = 0x5EED_2024;
pub const DEFAULT_PATHS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Per-run overrides; unset fields fall back to entry values and defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub n_paths: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub pathway: Option<Pathway>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub step: Option<f64>,
    pub delta_j: Option<f64>,
    pub eps_wos: Option<f64>,
}

/// One verification target: a model, domains, functions and identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub id: String,
    pub identities: Vec<String>,
    pub model: OperatorModel,
    pub domain: DomainGeometry,
    pub subdomain: Option<DomainGeometry>,
    pub x: Vec<f64>,
    pub u: HarmonicSpec,
    pub h: Option<HarmonicSpec>,
    #[serde(default = "default_phi")]
    pub phi: ConvexSpec,
    #[serde(default)]
    pub level: f64,
    #[serde(default = "default_levels")]
    pub exhaustion: usize,
    #[serde(default = "default_lp")]
    pub lp_p: Vec<f64>,
    pub pathway: Option<Pathway>,
    pub n_paths: Option<u64>,
    pub step: Option<f64>,
    pub mc_rhs: Option<bool>,
    pub limit_rel: Option<f64>,
}

fn default_phi() -> ConvexSpec {
    ConvexSpec::Power { p: 2.0 }
}

fn default_levels() -> usize {
    5
}

fn default_lp() -> Vec<f64> {
    vec![2.0, 3.0]
}

impl Entry {
    pub fn point(&self) -> Point {
        Point::from_slice(&self.x)
    }

    pub fn identity_ids(&self) -> Result<Vec<IdentityId>> {
        self.identities.iter().map(|s| IdentityId::parse(s)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub entry: Vec<Entry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Manifest file, relative to the config file.
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Inline entries, run after those of the manifest file.
    #[serde(default)]
    pub entry: Vec<Entry>,
}

fn default_out() -> PathBuf {
    PathBuf::from("hslab-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(path.parent().unwrap_or(Path::new(".")).join(m));
            }
        }
        Ok(cfg)
    }

    /// Manifest entries followed by inline entries; ids must be unique.
    pub fn entries(&self) -> Result<Vec<Entry>> {
        let mut all = match &self.manifest {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", p.display())))?;
                Manifest::parse(&text)?.entry
            }
            None => Vec::new(),
        };
        all.extend(self.entry.iter().cloned());
        let mut seen = std::collections::BTreeSet::new();
        for e in &all {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Config(format!("duplicate entry id {:?}", e.id)));
            }
            e.identity_ids()?;
        }
        Ok(all)
    }
}

/// Command-line overrides, applied above the config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub n_paths: Option<u64>,
    pub pathway: Option<Pathway>,
    pub out: Option<PathBuf>,
}

/// Master seed: command line, then environment, then config, then default.
pub fn resolve_seed(cli: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not a 64-bit seed")));
    }
    Ok(config.unwrap_or(DEFAULT_SEED))
}

/// Entry seed: the master seed mixed with a digest of the entry id, so that
/// reordering the manifest leaves every entry's stream unchanged.
pub fn entry_seed(master: u64, id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    master ^ u64::from_le_bytes(b)
}

pub fn hash_hex<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    const ENTRY: &str = r#"
[[entry]]
id = "b"
identities = ["hs_base"]
model = { dim = 1, diffusion = 1.0 }
domain = { shape = "interval", lo = -2.0, hi = 2.0 }
subdomain = { shape = "interval", lo = -1.0, hi = 1.0 }
x = [0.0]
u = { kind = "affine", gradient = [1.0] }
"#;

    #[test]
    fn parses_inline_entries() {
        let cfg = ExperimentConfig::parse(ENTRY).unwrap();
        let e = &cfg.entries().unwrap()[0];
        assert_eq!(e.phi, ConvexSpec::Power { p: 2.0 });
        assert_eq!(e.identity_ids().unwrap(), vec![IdentityId::HsBase]);
        assert_eq!(cfg.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn rejects_unknown_identity_and_fields() {
        let bad = ENTRY.replace("hs_base", "hs_bogus");
        assert!(matches!(ExperimentConfig::parse(&bad).unwrap().entries(), Err(Error::Config(_))));
        let extra = format!("{ENTRY}colour = 1\n");
        assert!(matches!(ExperimentConfig::parse(&extra), Err(Error::Config(_))));
        let dup = format!("{ENTRY}{ENTRY}");
        assert!(matches!(ExperimentConfig::parse(&dup).unwrap().entries(), Err(Error::Config(_))));
    }

    #[test]
    fn entry_seeds_are_stable() {
        assert_eq!(entry_seed(7, "a"), entry_seed(7, "a"));
        assert_ne!(entry_seed(7, "a"), entry_seed(7, "b"));
        assert_eq!(resolve_seed(Some(3), Some(4)).unwrap(), 3);
    }
}
