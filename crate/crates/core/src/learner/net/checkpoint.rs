use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, MaskedPredictionNet, NetConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.f32";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub net: NetConfig,
    pub param_count: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub net: MaskedPredictionNet,
    /// Absent for checkpoints written without optimizer state.
    pub optimizer: Option<Adam>,
}

/// Writes `model.json`, the little-endian `f32` parameter blob in
/// declaration order and, if given, the optimizer state.
pub fn save_checkpoint(dir: &Path, net: &MaskedPredictionNet, optimizer: Option<&Adam>, step: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        net: net.config().clone(),
        param_count: net.param_count(),
        step,
    };
    let path = dir.join(MODEL_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let blob: Vec<u8> = net.params().iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    let path = dir.join(PARAMS_FILE);
    fs::write(&path, blob).map_err(|e| Error::io(&path, e))?;
    if let Some(opt) = optimizer {
        let path = dir.join(OPTIMIZER_FILE);
        fs::write(&path, opt.to_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path,
            found: manifest.version.to_string(),
            expected: CHECKPOINT_VERSION.to_string(),
        });
    }
    let path = dir.join(PARAMS_FILE);
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if blob.len() != 4 * manifest.param_count {
        return Err(Error::Truncated {
            path,
            expected: 4 * manifest.param_count,
            found: blob.len(),
        });
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
        .collect();
    let net = MaskedPredictionNet::from_params(manifest.net.clone(), params)?;
    let path = dir.join(OPTIMIZER_FILE);
    let optimizer = if path.exists() {
        let opt = Adam::from_bytes(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        if opt.to_bytes().len() != 24 + 16 * manifest.param_count {
            return Err(Error::Data("optimizer state does not match the architecture".into()));
        }
        Some(opt)
    } else {
        None
    };
    Ok(Checkpoint {
        manifest,
        net,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = NetConfig {
            hidden: 8,
            context_tokens: 8,
            ..NetConfig::desk(2, 2)
        };
        let net = MaskedPredictionNet::new(cfg, &mut seeded(1)).unwrap();
        let mut adam = Adam::new(1e-3, net.param_count());
        let mut p = net.params().to_vec();
        let g = vec![0.1; p.len()];
        adam.step(&mut p, &g).unwrap();
        let net = MaskedPredictionNet::from_params(net.config().clone(), p).unwrap();
        save_checkpoint(dir.path(), &net, Some(&adam), 7).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.net, net);
        assert_eq!(ck.optimizer.unwrap(), adam);
        assert_eq!(ck.manifest.step, 7);

        fs::write(dir.path().join(PARAMS_FILE), [0u8; 5]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Truncated { .. })));
    }

    #[test]
    fn missing_checkpoint_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(Error::Io { .. })));
    }
}
