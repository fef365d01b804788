//! Dataset directory: `manifest.json` plus one `ep_<idx>.traj` per episode.
//!
//! Episode layout (little-endian): 16-byte magic (`CMTRAJ01` padded with
//! NULs), `u32 T`, `u32 Ds`, `u32 Da`, then `T*Ds` f32 states and `T*Da`
//! f32 actions, both row-major.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetManifest, Trajectory, FORMAT_VERSION};
use crate::error::{Error, Result};

pub const EPISODE_MAGIC: [u8; 16] = *b"CMTRAJ01\0\0\0\0\0\0\0\0";
const MAGIC_PREFIX: &[u8] = b"CMTRAJ";
const HEADER_LEN: usize = 16 + 12;

fn episode_path(dir: &Path, idx: usize) -> PathBuf {
    dir.join(format!("ep_{idx}.traj"))
}

pub fn encode_episode(traj: &Trajectory) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * (traj.states().len() + traj.actions().len()));
    buf.extend_from_slice(&EPISODE_MAGIC);
    for v in [traj.len(), traj.state_dim(), traj.action_dim()] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in traj.states().iter().chain(traj.actions()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_episode(bytes: &[u8], path: &Path, env_id: &str, seed: u64) -> Result<Trajectory> {
    if bytes.len() < 16 || !bytes.starts_with(MAGIC_PREFIX) {
        return Err(Error::CorruptHeader {
            path: path.to_path_buf(),
            reason: "missing CMTRAJ magic".into(),
        });
    }
    if bytes[..16] != EPISODE_MAGIC {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: String::from_utf8_lossy(&bytes[6..8]).into_owned(),
            expected: "01".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| {
        let o = 16 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
    };
    let (t, ds, da) = (word(0), word(1), word(2));
    if t == 0 || ds == 0 || da == 0 {
        return Err(Error::CorruptHeader {
            path: path.to_path_buf(),
            reason: format!("zero dimension in header (T={t}, Ds={ds}, Da={da})"),
        });
    }
    let n_states = t * ds;
    let n_actions = t * da;
    let expected = HEADER_LEN + 4 * (n_states + n_actions);
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let floats: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let (states, actions) = floats.split_at(n_states);
    Trajectory::new(states.to_vec(), actions.to_vec(), ds, da, env_id, seed)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_episode(path: &Path, traj: &Trajectory) -> Result<()> {
    fs::write(path, encode_episode(traj)).map_err(|e| Error::io(path, e))
}

pub fn read_episode(path: &Path, env_id: &str, seed: u64) -> Result<Trajectory> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_episode(&bytes, path, env_id, seed)
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&dataset.manifest)?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        write_episode(&episode_path(dir, i), traj)?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(u64::from(FORMAT_VERSION)) {
        return Err(Error::Version {
            path: manifest_path,
            found: raw.get("version").map(|v| v.to_string()).unwrap_or_else(|| "missing".into()),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(raw)?;
    let mut trajectories = Vec::with_capacity(manifest.episodes);
    for i in 0..manifest.episodes {
        let traj = read_episode(
            &episode_path(dir, i),
            &manifest.env_id,
            manifest.seed.wrapping_add(i as u64),
        )?;
        if traj.state_dim() != manifest.state_dim || traj.action_dim() != manifest.action_dim {
            return Err(Error::Dimension(format!(
                "episode {i} dims ({}, {}) disagree with manifest ({}, {})",
                traj.state_dim(),
                traj.action_dim(),
                manifest.state_dim,
                manifest.action_dim
            )));
        }
        trajectories.push(traj);
    }
    Ok(Dataset {
        manifest,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{generate_dataset, EnvModel, PolicyMixture, RewardKind};

    fn small() -> Dataset {
        generate_dataset(
            &EnvModel::point_mass_2d(RewardKind::Dense),
            &PolicyMixture::default(),
            3,
            12,
            7,
        )
        .unwrap()
    }

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect()
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        let d = small();
        write_dataset(&a, &d).unwrap();
        let back = read_dataset(&a).unwrap();
        assert_eq!(back, d);
        write_dataset(&b, &back).unwrap();
        assert_eq!(dir_bytes(&a), dir_bytes(&b));
    }

    #[test]
    fn header_layout() {
        let d = small();
        let bytes = encode_episode(&d.trajectories[0]);
        assert_eq!(&bytes[..8], b"CMTRAJ01");
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 12);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 28 + 4 * 12 * 6);
    }

    #[test]
    fn truncated_episode_is_payload_error() {
        let d = small();
        let bytes = encode_episode(&d.trajectories[0]);
        let p = Path::new("x.traj");
        let err = decode_episode(&bytes[..bytes.len() - 3], p, "e", 0).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "{err}");
        let err = decode_episode(&bytes[..20], p, "e", 0).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "{err}");
    }

    #[test]
    fn corrupt_and_version_headers() {
        let d = small();
        let mut bytes = encode_episode(&d.trajectories[0]);
        let p = Path::new("x.traj");
        bytes[7] = b'2';
        assert!(matches!(decode_episode(&bytes, p, "e", 0), Err(Error::Version { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_episode(&bytes, p, "e", 0), Err(Error::CorruptHeader { .. })));
    }

    #[test]
    fn manifest_version_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), &small()).unwrap();
        let mp = tmp.path().join("manifest.json");
        let text = fs::read_to_string(&mp).unwrap().replace("\"version\": 1", "\"version\": 7");
        fs::write(&mp, text).unwrap();
        assert!(matches!(read_dataset(tmp.path()), Err(Error::Version { .. })));
    }

    #[test]
    fn truncated_file_on_disk() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), &small()).unwrap();
        let ep = tmp.path().join("ep_1.traj");
        let bytes = fs::read(&ep).unwrap();
        fs::write(&ep, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_dataset(tmp.path()), Err(Error::Truncated { .. })));
    }
}
