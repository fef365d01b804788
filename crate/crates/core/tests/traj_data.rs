mod common;

use currmask::rng::seeded;
use currmask::traj::{
    decode_episode, encode_episode, episode_reward, generate_dataset, read_dataset, sample_window, write_dataset,
    EnvModel, NormStats, PolicyMixture, PolicyTier, RewardKind, Trajectory, Window,
};
use proptest::prelude::*;
use std::path::Path;
use tempfile::tempdir;

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generated_dataset_files_are_reproducible() {
    let env = EnvModel::point_mass_2d(RewardKind::Dense);
    let tmp = tempdir().unwrap();
    for sub in ["a", "b"] {
        let ds = generate_dataset(&env, &PolicyMixture::default(), 10, 200, 7).unwrap();
        write_dataset(&tmp.path().join(sub), &ds).unwrap();
    }
    let a = dir_bytes(&tmp.path().join("a"));
    assert_eq!(a.len(), 11);
    assert_eq!(a, dir_bytes(&tmp.path().join("b")));
    let back = read_dataset(&tmp.path().join("a")).unwrap();
    let ds = generate_dataset(&env, &PolicyMixture::default(), 10, 200, 7).unwrap();
    assert_eq!(back.trajectories, ds.trajectories);
}

#[test]
fn pd_episodes_outscore_random_ones() {
    let env = EnvModel::point_mass_2d(RewardKind::Dense);
    let mean_reward = |tier, seed| {
        let ds = generate_dataset(&env, &PolicyMixture::only(tier), 10, 200, seed).unwrap();
        ds.trajectories.iter().map(|t| episode_reward(&env, t)).sum::<f64>() / 10.0
    };
    let seeds: Vec<u64> = (0..20).map(|s| 1000 * s).collect();
    let pd: Vec<f64> = seeds.iter().map(|&s| mean_reward(PolicyTier::Pd, s)).collect();
    let random: Vec<f64> = seeds.iter().map(|&s| mean_reward(PolicyTier::Random, s)).collect();
    assert!(pd.iter().zip(&random).all(|(p, r)| p > r));
    let (_, p) = common::mann_whitney(&pd, &random);
    assert!(p < 0.05, "p = {p}");
}

#[test]
fn short_window_start_is_uniform() {
    let traj = Trajectory::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], 1, 1, "t", 0).unwrap();
    let mut rng = seeded(17);
    let zeros = (0..10_000)
        .filter(|_| sample_window(&traj, 2, &mut rng).unwrap().start_index == 0)
        .count();
    assert!((zeros as f64 / 10_000.0 - 0.5).abs() <= 0.02);
}

fn traj_strategy() -> impl Strategy<Value = Trajectory> {
    (1usize..20, 1usize..5, 1usize..4).prop_flat_map(|(t, ds, da)| {
        (
            prop::collection::vec(-1e3f32..1e3, t * ds),
            prop::collection::vec(-1.0f32..=1.0, t * da),
        )
            .prop_map(move |(s, a)| Trajectory::new(s, a, ds, da, "t", 0).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn episode_bytes_round_trip(traj in traj_strategy()) {
        let bytes = encode_episode(&traj);
        let back = decode_episode(&bytes, Path::new("x"), "t", 0).unwrap();
        prop_assert_eq!(&back, &traj);
        prop_assert_eq!(encode_episode(&back), bytes);
    }

    #[test]
    fn truncation_is_an_error(traj in traj_strategy(), cut in 1usize..64) {
        let bytes = encode_episode(&traj);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_episode(&bytes[..keep], Path::new("x"), "t", 0).is_err());
    }

    #[test]
    fn normalization_round_trips(trajs in prop::collection::vec(traj_strategy(), 1..4), seed in any::<u64>()) {
        let (ds, da) = (trajs[0].state_dim(), trajs[0].action_dim());
        let trajs: Vec<Trajectory> = trajs.into_iter().filter(|t| t.state_dim() == ds && t.action_dim() == da).collect();
        let stats = NormStats::compute(&trajs).unwrap();
        let w = sample_window(&trajs[0], 1, &mut seeded(seed)).unwrap();
        let back = stats.denormalize(&stats.normalize(&w).unwrap()).unwrap();
        for (x, y) in back.states().iter().chain(back.actions()).zip(w.states().iter().chain(w.actions())) {
            prop_assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
        prop_assert!(stats.state_std.iter().chain(&stats.action_std).all(|s| *s >= 1e-6));
    }

    #[test]
    fn window_parity(traj in traj_strategy(), seed in any::<u64>()) {
        let w: Window = sample_window(&traj, traj.len(), &mut seeded(seed)).unwrap();
        prop_assert_eq!(w.start_index, 0);
        for t in 0..traj.len() {
            let s: Vec<f64> = traj.state(t).iter().map(|&v| f64::from(v)).collect();
            prop_assert_eq!(w.token(2 * t), &s[..]);
        }
    }
}
