//! Curriculum masked prediction over interleaved state-action token sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`traj`] trajectories, windows, normalization, the on-disk dataset
//!   container and two small simulated environments.
//! * [`masking`] masking schemes and the mask generators (block-wise,
//!   token-wise random, random-autoregressive, prompt and goal masks).
//! * [`scheduler`] the EXP3 curriculum over the masking pool plus the
//!   fixed baseline schedules.
//! * [`learner`] the learner abstraction, a closed-form synthetic learner
//!   and a bidirectional encoder-decoder masked prediction network.
//! * [`eval`] closed-loop skill prompting and goal-conditioned planning.
//! * [`runner`] configuration, the pretraining loop, checkpoints and reports.
//!
//! Batch-level work (per-window gradients, per-scheme target losses,
//! evaluation episodes) goes through [`par`], which uses rayon when the
//! `parallel` feature is on and plain iteration otherwise.

pub mod error;
pub mod eval;
pub mod learner;
pub mod masking;
pub mod par;
pub mod rng;
pub mod runner;
pub mod scheduler;
pub mod stats;
pub mod traj;

pub use error::{Error, Result};
