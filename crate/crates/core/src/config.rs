//! Run configuration: one strict JSON document covering data paths, seeds
//! and every model's hyperparameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::RfConfig;
use crate::gbr::GbrConfig;
use crate::hurdat2::StormId;
use crate::mlp::MlpConfig;
use crate::preprocess::CleanOptions;
use crate::smote::SmoteConfig;
use crate::svm::SvmConfig;
use crate::windowing::{SplitConfig, WindowConfig};

/// Directory searched for dataset files when no path is configured.
pub const DATA_DIR_ENV: &str = "CYCLONE_DATA_DIR";

pub const KATRINA: &str = "AL122005";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub atlantic: Option<PathBuf>,
    pub pacific: Option<PathBuf>,
    /// When set, replaces every module seed.
    pub seed: Option<u64>,
    pub clean: CleanOptions,
    pub windows: WindowConfig,
    pub split: SplitConfig,
    pub gbr: GbrConfig,
    pub rf: RfConfig,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
    pub smote: SmoteConfig,
    /// Storm removed before splitting and used for the case study.
    pub holdout: Option<StormId>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            atlantic: None,
            pacific: None,
            seed: None,
            clean: CleanOptions::default(),
            windows: WindowConfig::default(),
            split: SplitConfig::default(),
            gbr: GbrConfig::default(),
            rf: RfConfig::default(),
            svm: SvmConfig::default(),
            mlp: MlpConfig::default(),
            smote: SmoteConfig::default(),
            holdout: Some(KATRINA.parse().expect("valid storm id")),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Copy with the master seed pushed into every module.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        if let Some(seed) = self.seed {
            c.split.seed = seed;
            c.rf.seed = seed;
            c.svm.seed = seed;
            c.mlp.seed = seed;
            c.smote.seed = seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.windows.validate()?;
        self.gbr.validate()?;
        self.svm.validate()?;
        self.mlp.validate()?;
        if self.rf.n_trees == 0 || self.smote.k == 0 {
            return Err(Error::InvalidConfig("rf n_trees and smote k must be at least 1".into()));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::InvalidConfig("split test_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Configured dataset paths, falling back to files discovered under
    /// [`DATA_DIR_ENV`].
    pub fn dataset_paths(&self) -> Result<Vec<PathBuf>> {
        let mut paths: Vec<PathBuf> = self.atlantic.iter().chain(&self.pacific).cloned().collect();
        if paths.is_empty() {
            let dir = std::env::var_os(DATA_DIR_ENV).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "no dataset configured; set atlantic/pacific in the config or {DATA_DIR_ENV}"
                ))
            })?;
            let found = discover_datasets(Path::new(&dir))?;
            paths.extend(found.atlantic);
            paths.extend(found.pacific);
            if paths.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "no HURDAT2 files found in {}",
                    Path::new(&dir).display()
                )));
            }
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Datasets {
    pub atlantic: Option<PathBuf>,
    pub pacific: Option<PathBuf>,
}

/// Picks HURDAT2 files by name: anything containing `hurdat2`, with `nepac`
/// or `pacific` marking the Pacific basin. The lexicographically last match
/// wins, which favors newer vintages under the usual naming.
pub fn discover_datasets(dir: &Path) -> Result<Datasets> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut found = Datasets::default();
    for p in names {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_lowercase();
        if !name.contains("hurdat2") || !(name.ends_with(".txt") || name.ends_with(".csv")) {
            continue;
        }
        if name.contains("nepac") || name.contains("pacific") {
            found.pacific = Some(p);
        } else {
            found.atlantic = Some(p);
        }
    }
    Ok(found)
}
