//! Auditory event prediction as an intrinsic reward for reinforcement learning.

pub mod error;
pub mod audio;
pub mod clustering;
pub mod envs;
pub mod harness;
pub mod intrinsic;
pub mod neural;
pub mod ppo;
pub mod seeding;

pub use error::{Error, Result};
