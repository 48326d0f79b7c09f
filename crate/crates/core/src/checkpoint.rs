//! Checkpoint directories: `params/*.mdt`, `optimizer/*.mdt`, `manifest.json`.

use std::path::Path;

use mdhr_tensor::{io, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{at_path, CoreError, Result};
use crate::optim::OptimizerState;
use crate::params::ParamStore;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub epoch: usize,
    /// Validation macro-F1 that selected this checkpoint, if any.
    pub metric: Option<f64>,
    pub precision: String,
    pub step: u64,
    pub params: Vec<String>,
}

/// Writes into a sibling temporary directory, then swaps it in, so a crash
/// mid-write leaves the previous checkpoint intact.
pub fn save<S: Scalar>(dir: &Path, store: &ParamStore<S>, state: &OptimizerState<S>, manifest: &Manifest) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| CoreError::io(&tmp, e))?;
    }
    let pdir = tmp.join("params");
    let odir = tmp.join("optimizer");
    for d in [&pdir, &odir] {
        std::fs::create_dir_all(d).map_err(|e| CoreError::io(d, e))?;
    }
    let payload = io::Payload::native::<S>();
    for (i, p) in store.iter().enumerate() {
        let files = [
            (pdir.join(format!("{}.mdt", p.name)), &p.value),
            (odir.join(format!("{}.m.mdt", p.name)), &state.m[i]),
            (odir.join(format!("{}.v.mdt", p.name)), &state.v[i]),
        ];
        for (path, t) in files {
            io::save(&path, t, payload).map_err(|e| at_path(&path, e))?;
        }
    }
    let mp = tmp.join(MANIFEST);
    std::fs::write(&mp, serde_json::to_string_pretty(manifest).expect("manifest serializes"))
        .map_err(|e| CoreError::io(&mp, e))?;
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    std::fs::rename(&tmp, dir).map_err(|e| CoreError::io(dir, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let mp = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&mp).map_err(|e| CoreError::io(&mp, e))?;
    serde_json::from_str(&text).map_err(|e| CoreError::Format { path: mp, msg: e.to_string() })
}

/// Loads into a store built from the matching config. Missing or extra
/// parameters and shape differences are load errors.
pub fn load<S: Scalar>(dir: &Path, store: &mut ParamStore<S>) -> Result<(Manifest, OptimizerState<S>)> {
    let manifest = read_manifest(dir)?;
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    if let Some(extra) = manifest.params.iter().find(|n| !names.contains(n)) {
        return Err(CoreError::Load(format!("checkpoint parameter {extra} is not part of the configured model")));
    }
    if let Some(missing) = names.iter().find(|n| !manifest.params.contains(n)) {
        return Err(CoreError::Load(format!("checkpoint lacks parameter {missing}")));
    }
    let mut state = OptimizerState::zeros(store);
    state.step = manifest.step;
    for (i, name) in names.iter().enumerate() {
        let read = |path: std::path::PathBuf| io::load::<S>(&path).map_err(|e| at_path(&path, e));
        store.set(name, read(dir.join("params").join(format!("{name}.mdt")))?)?;
        let m = read(dir.join("optimizer").join(format!("{name}.m.mdt")))?;
        let v = read(dir.join("optimizer").join(format!("{name}.v.mdt")))?;
        if m.shape() != state.m[i].shape() || v.shape() != state.v[i].shape() {
            return Err(CoreError::Load(format!("optimizer moments for {name} have the wrong shape")));
        }
        state.m[i] = m;
        state.v[i] = v;
    }
    Ok((manifest, state))
}
