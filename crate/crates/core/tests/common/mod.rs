#![allow(dead_code)]

use std::path::Path;

use currmask::learner::{MaskedPredictionNet, NetConfig};
use currmask::rng::seeded;
use currmask::runner::{gen_data, DataGenConfig, RunConfig};
use currmask::traj::{generate_dataset, Dataset, EnvModel, PolicyMixture, RewardKind};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided Mann-Whitney U test with the normal approximation and tie
/// correction. Returns `(U_a, p)`, where `U_a` counts pairs with `a < b`.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, usize)> = a.iter().map(|&v| (v, 0)).chain(b.iter().map(|&v| (v, 1))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        ranks[i..=j].iter_mut().for_each(|x| *x = r);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let r1: f64 = all.iter().zip(&ranks).filter(|(x, _)| x.1 == 0).map(|(_, r)| r).sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let u_a_less = n1 * n2 - u1;
    let mean = n1 * n2 / 2.0;
    let nn = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return (u_a_less, 1.0);
    }
    let z = (u1 - mean).abs() / var.sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z));
    (u_a_less, p.min(1.0))
}

/// Pearson chi-square statistic and degrees of freedom of a 2 x k
/// homogeneity table; empty columns are dropped.
pub fn chi_square_stat(a: &[u64], b: &[u64]) -> (f64, usize) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let (ea, eb) = (na * col / total, nb * col / total);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    (stat, cells.saturating_sub(1))
}

/// Upper tail of the chi-square distribution; 1 when there are no degrees
/// of freedom.
pub fn chi_square_p(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

/// Pearson chi-square homogeneity test on a 2 x k contingency table.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> f64 {
    let (stat, dof) = chi_square_stat(a, b);
    chi_square_p(stat, dof)
}

pub fn tiny_net(state_dim: usize, action_dim: usize, hidden: usize, seed: u64) -> MaskedPredictionNet {
    let cfg = NetConfig {
        hidden,
        heads: 2,
        enc_layers: 1,
        dec_layers: 1,
        ff_mult: 2,
        context_tokens: 8,
        ..NetConfig::desk(state_dim, action_dim)
    };
    MaskedPredictionNet::new(cfg, &mut seeded(seed)).unwrap()
}

pub fn point_mass(episodes: usize, len: usize, seed: u64) -> Dataset {
    let env = EnvModel::point_mass_2d(RewardKind::Dense);
    generate_dataset(&env, &PolicyMixture::default(), episodes, len, seed).unwrap()
}

/// Writes train and validation datasets under `root` and returns a small
/// but complete run config pointing at them.
pub fn small_run(root: &Path, train_episodes: usize, episode_len: usize) -> RunConfig {
    let gen = |dir: &str, episodes, seed| {
        let cfg = DataGenConfig {
            episodes,
            episode_len,
            seed,
            ..DataGenConfig::default()
        };
        gen_data(&cfg, &root.join(dir), false).unwrap();
    };
    gen("train", train_episodes, 1);
    gen("validation", 8, 10_000);
    let mut cfg = RunConfig::default();
    cfg.data.train_dir = root.join("train");
    cfg.data.validation_dir = root.join("validation");
    cfg.output_dir = root.join("run");
    cfg.steps = 200;
    cfg.checkpoint_every = 100;
    cfg.record_wallclock = false;
    cfg.net.hidden = 16;
    cfg.net.context_tokens = 16;
    cfg.train.batch_size = 2;
    cfg.train.lr = 1e-3;
    cfg.scheduler.interval = 50;
    cfg.scheduler.eval_samples = 2;
    cfg.scheduler.eval_scheme_subsample = Some(10);
    cfg
}
