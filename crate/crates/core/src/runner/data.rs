use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{generate_dataset, write_dataset, Dataset, EnvModel, PolicyMixture};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataGenConfig {
    pub env: String,
    pub episodes: usize,
    pub episode_len: usize,
    pub seed: u64,
    pub mixture: PolicyMixture,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            env: "point_mass_2d".into(),
            episodes: 500,
            episode_len: 200,
            seed: 0,
            mixture: PolicyMixture::default(),
        }
    }
}

fn is_dataset_file(name: &str) -> bool {
    name == "manifest.json" || (name.starts_with("ep_") && name.ends_with(".traj"))
}

/// Simulate a dataset and write it to `dir`. A non-empty directory is
/// refused unless `force`, in which case earlier dataset files are
/// removed first; other files are never touched.
pub fn gen_data(cfg: &DataGenConfig, dir: &Path, force: bool) -> Result<Dataset> {
    let env = EnvModel::from_id(&cfg.env).map_err(|e| Error::Config(e.to_string()))?;
    if dir.exists() {
        let entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        if !entries.is_empty() && !force {
            return Err(Error::Data(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        for e in entries {
            let name = e.file_name();
            if name.to_str().is_some_and(is_dataset_file) {
                fs::remove_file(e.path()).map_err(|err| Error::io(e.path(), err))?;
            }
        }
    }
    let ds = generate_dataset(&env, &cfg.mixture, cfg.episodes, cfg.episode_len, cfg.seed)?;
    write_dataset(dir, &ds)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_non_empty_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DataGenConfig {
            episodes: 3,
            episode_len: 10,
            ..DataGenConfig::default()
        };
        gen_data(&cfg, dir.path(), false).unwrap();
        let err = gen_data(&cfg, dir.path(), false).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        let small = DataGenConfig { episodes: 2, ..cfg };
        gen_data(&small, dir.path(), true).unwrap();
        assert!(dir.path().join("notes.txt").exists());
        assert!(!dir.path().join("ep_2.traj").exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);
    }
}
