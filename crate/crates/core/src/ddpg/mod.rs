//! Deep deterministic policy gradient: replay, exploration noise and the update rules.

mod agent;
mod buffer;
mod noise;

pub use agent::{
    actor_objective_and_gradient, actor_update, critic_loss_and_gradient, critic_update, select_action,
    select_action_with, soft_update, td_targets, Action, ActionValue, AgentParams, Learner, UpdateLosses,
};
pub use buffer::{Minibatch, ReplayBuffer, Transition};
pub use noise::{NoiseKind, NoiseProcess, SigmaSchedule};
