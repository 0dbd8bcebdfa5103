//! On-disk model artifacts. Each file is a JSON envelope carrying a format
//! tag, a version and the component kind around the serialized payload.
//! Output bytes depend only on the models, never on run time or threads.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::RfModel;
use crate::gbr::GbrRegressor;
use crate::mlp::MlpModel;
use crate::pipeline::Models;
use crate::preprocess::ScalerSet;
use crate::svm::OvrSvm;
use crate::windowing::WindowConfig;

pub const FORMAT: &str = "cyclone-model";
pub const VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
const FILES: [(&str, &str); 5] = [
    ("scalers", "scalers.json"),
    ("gbr", "gbr.json"),
    ("rf", "rf.json"),
    ("svm", "svm.json"),
    ("mlp", "mlp.json"),
];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    payload: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub windows: WindowConfig,
    pub classes: Vec<String>,
    pub regression_features: usize,
    pub classification_features: usize,
    /// Resolved run configuration, seeds included.
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

pub fn to_bytes<T: Serialize>(kind: &str, payload: &T) -> Result<Vec<u8>> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        payload,
    };
    Ok(serde_json::to_vec(&env)?)
}

pub fn from_bytes<T: DeserializeOwned>(kind: &str, bytes: &[u8]) -> Result<T> {
    let env: Envelope<T> = serde_json::from_slice(bytes)
        .map_err(|e| Error::Artifact(format!("{kind}: {e}")))?;
    if env.format != FORMAT {
        return Err(Error::Artifact(format!("{kind}: unexpected format {:?}", env.format)));
    }
    if env.version != VERSION {
        return Err(Error::Artifact(format!(
            "{kind}: version {} is not supported (expected {VERSION})",
            env.version
        )));
    }
    if env.kind != kind {
        return Err(Error::Artifact(format!("expected {kind} artifact, found {}", env.kind)));
    }
    Ok(env.payload)
}

/// Writes every model plus a manifest into `dir`.
pub fn save_models(dir: &Path, models: &Models, config: serde_json::Value) -> Result<()> {
    models.validate()?;
    std::fs::create_dir_all(dir)?;
    let blobs = [
        to_bytes("scalers", &models.scalers)?,
        to_bytes("gbr", &models.gbr)?,
        to_bytes("rf", &models.rf)?,
        to_bytes("svm", &models.svm)?,
        to_bytes("mlp", &models.mlp)?,
    ];
    for ((_, file), bytes) in FILES.iter().zip(blobs) {
        std::fs::write(dir.join(file), bytes)?;
    }
    let manifest = Manifest {
        windows: models.windows,
        classes: models.classes().classes().iter().map(ToString::to_string).collect(),
        regression_features: models.windows.regression_features(),
        classification_features: models.windows.classification_features(),
        config,
        files: FILES.iter().map(|(_, f)| f.to_string()).collect(),
    };
    let mut text = serde_json::to_vec_pretty(&to_envelope("manifest", &manifest))?;
    text.push(b'\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

fn to_envelope<'a, T>(kind: &str, payload: &'a T) -> Envelope<&'a T> {
    Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        payload,
    }
}

fn read(dir: &Path, file: &str) -> Result<Vec<u8>> {
    let path = dir.join(file);
    std::fs::read(&path).map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    from_bytes("manifest", &read(dir, MANIFEST_FILE)?)
}

/// Loads and cross-checks a directory written by [`save_models`].
pub fn load_models(dir: &Path) -> Result<Models> {
    let manifest = load_manifest(dir)?;
    let scalers: ScalerSet = from_bytes("scalers", &read(dir, FILES[0].1)?)?;
    let gbr: GbrRegressor = from_bytes("gbr", &read(dir, FILES[1].1)?)?;
    let rf: RfModel = from_bytes("rf", &read(dir, FILES[2].1)?)?;
    let svm: OvrSvm = from_bytes("svm", &read(dir, FILES[3].1)?)?;
    let mlp: MlpModel = from_bytes("mlp", &read(dir, FILES[4].1)?)?;
    let models = Models {
        scalers,
        windows: manifest.windows,
        gbr,
        rf,
        svm,
        mlp,
    };
    models.validate()?;
    let classes: Vec<String> = models.classes().classes().iter().map(ToString::to_string).collect();
    if classes != manifest.classes {
        return Err(Error::Artifact("manifest class list does not match the models".into()));
    }
    Ok(models)
}
