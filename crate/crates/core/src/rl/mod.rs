//! Environments, rollout storage, PPO and the training loop.

pub mod buffer;
pub mod env;
pub mod ppo;
pub mod sampler;
pub mod trainer;

pub use buffer::{RolloutBuffer, Transition};
pub use env::{
    decode_action, AnyEnv, BanditEnv, Environment, Episode, NvEnv, StepOutcome, TargetDomain,
    TargetEncoding, ToyEnv,
};
pub use ppo::{clipped_objective, ppo_update, ActorCritic, PpoParams, UpdateStats};
pub use sampler::TargetSampler;
pub use trainer::{greedy_episode, rollout, GreedyRun, Trainer, TrainerState, TrainingCurve};
