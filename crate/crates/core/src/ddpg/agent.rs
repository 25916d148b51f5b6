use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::buffer::{concat_columns, Minibatch};
use super::noise::{gaussian, NoiseProcess, SigmaSchedule};
use crate::error::{Error, Result};
use crate::neuralnet::{Activation, Direction, Gradients, Method, Mlp, Optimizer};
use crate::scalar::Real;

/// Continuous command with every component in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Action<T> {
    u: Vec<T>,
}

impl<T: Real> Action<T> {
    /// Clamps each component into `[-1, 1]`.
    pub fn clamped(raw: impl IntoIterator<Item = T>) -> Self {
        Self {
            u: raw.into_iter().map(|v| v.max(-T::one()).min(T::one())).collect(),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.u
    }

    pub fn into_vec(self) -> Vec<T> {
        self.u
    }
}

/// A state-action value function with access to `∂Q/∂(state ‖ action)`.
pub trait ActionValue<T: Real> {
    /// Width of the `[state ‖ action]` input.
    fn input_dim(&self) -> usize;

    /// Q for each row of `inputs`, and the gradient of each Q with respect to its row.
    fn value_and_input_grad(&self, inputs: ArrayView2<T>) -> Result<(Array1<T>, Array2<T>)>;
}

impl<T: Real> ActionValue<T> for Mlp<T> {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn value_and_input_grad(&self, inputs: ArrayView2<T>) -> Result<(Array1<T>, Array2<T>)> {
        if self.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "critic output",
                expected: 1,
                actual: self.output_dim(),
            });
        }
        let cache = self.forward_cached(inputs)?;
        let q = cache.output().column(0).to_owned();
        let ones = Array2::from_elem((inputs.nrows(), 1), T::one());
        let grad = self.input_gradient_batch(&cache, ones.view())?;
        Ok((q, grad))
    }
}

/// Hyperparameters and the four networks of a DDPG agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    pub target_actor: Mlp<T>,
    pub target_critic: Mlp<T>,
    /// Discount factor of the TD target.
    pub gamma: T,
    /// Soft target-update coefficient.
    pub tau: T,
    pub sigma: SigmaSchedule,
}

impl<T: Real> AgentParams<T> {
    /// Fresh agent with `hidden`-wide ReLU layers, a tanh actor head and a linear critic head.
    /// Target networks start as exact copies.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        gamma: T,
        tau: T,
        sigma: SigmaSchedule,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(tau > T::zero() && tau <= T::one()) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
        }
        let actor_dims: Vec<usize> = std::iter::once(state_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(action_dim))
            .collect();
        let critic_dims: Vec<usize> = std::iter::once(state_dim + action_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let actor = Mlp::new_random(&actor_dims, Activation::Relu, Activation::Tanh, rng)?;
        let critic = Mlp::new_random(&critic_dims, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            gamma,
            tau,
            sigma,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }
}

/// Greedy action plus iid Gaussian noise of scale `sigma`, clamped to `[-1, 1]`.
pub fn select_action<T: Real>(actor: &Mlp<T>, x: &[T], sigma: T, rng: &mut impl Rng) -> Result<Action<T>> {
    let mu = actor.forward(x)?;
    if sigma == T::zero() {
        return Ok(Action::clamped(mu));
    }
    Ok(Action::clamped(mu.into_iter().map(|m| m + sigma * gaussian::<T>(rng))))
}

/// Like [`select_action`] but drawing the perturbation from a stateful noise process.
pub fn select_action_with<T: Real>(
    actor: &Mlp<T>,
    x: &[T],
    sigma: T,
    noise: &mut NoiseProcess<T>,
    rng: &mut impl Rng,
) -> Result<Action<T>> {
    let mu = actor.forward(x)?;
    if sigma == T::zero() {
        return Ok(Action::clamped(mu));
    }
    let eps = noise.sample(sigma, rng);
    Ok(Action::clamped(mu.into_iter().zip(eps).map(|(m, e)| m + e)))
}

/// `y_i = r_i` at terminal transitions, `r_i + γ·Q̂(x'_i, μ̂(x'_i))` otherwise.
pub fn td_targets<T: Real>(
    batch: &Minibatch<T>,
    target_actor: &Mlp<T>,
    target_critic: &Mlp<T>,
    gamma: T,
) -> Result<Array1<T>> {
    let next_actions = target_actor.forward_batch(batch.next_states.view())?;
    let inputs = concat_columns(&batch.next_states, &next_actions);
    let q_next = target_critic.forward_batch(inputs.view())?;
    Ok(Array1::from_iter(
        batch
            .rewards
            .iter()
            .zip(q_next.column(0))
            .zip(&batch.terminals)
            .map(|((&r, &q), &done)| if done { r } else { r + gamma * q }),
    ))
}

/// Critic loss `1/(2k)·Σ(y_i − Q(x_i, u_i))²` and its parameter gradient.
pub fn critic_loss_and_gradient<T: Real>(
    critic: &Mlp<T>,
    batch: &Minibatch<T>,
    targets: &Array1<T>,
) -> Result<(T, Gradients<T>)> {
    if targets.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            what: "td targets",
            expected: batch.len(),
            actual: targets.len(),
        });
    }
    let k = T::lit(batch.len() as f64);
    let inputs = batch.state_actions();
    let cache = critic.forward_cached(inputs.view())?;
    let q = cache.output().column(0);
    let residual = targets - &q;
    let loss = residual.mapv(|e| e * e).sum() / (T::lit(2.0) * k);
    let upstream = residual.mapv(|e| -e / k).insert_axis(Axis(1));
    let grads = critic.backward_batch(&cache, upstream.view(), false)?;
    Ok((loss, grads))
}

/// One descent step on the critic toward `targets`. Returns the loss before the step.
///
/// Uses the actions stored in the batch, not the actor's current output.
pub fn critic_update<T: Real>(
    critic: &mut Mlp<T>,
    batch: &Minibatch<T>,
    targets: &Array1<T>,
    opt: &mut Optimizer<T>,
) -> Result<T> {
    let (loss, grads) = critic_loss_and_gradient(critic, batch, targets)?;
    opt.apply(critic, &grads, Direction::Descent)?;
    Ok(loss)
}

/// Actor loss `−(1/k)·Σ Q(x_i, μ(x_i))` and the gradient of the *objective* `(1/k)·Σ Q`
/// with respect to the actor parameters, via `∇_u Q · ∇_θ μ`.
pub fn actor_objective_and_gradient<T: Real, C: ActionValue<T> + ?Sized>(
    actor: &Mlp<T>,
    critic: &C,
    states: ArrayView2<T>,
) -> Result<(T, Gradients<T>)> {
    let sd = states.ncols();
    let cache = actor.forward_cached(states)?;
    let actions = cache.output();
    if critic.input_dim() != sd + actions.ncols() {
        return Err(Error::DimensionMismatch {
            what: "critic input",
            expected: sd + actions.ncols(),
            actual: critic.input_dim(),
        });
    }
    let inputs = ndarray::concatenate(Axis(1), &[states, actions.view()]).expect("row counts agree");
    let (q, dq) = critic.value_and_input_grad(inputs.view())?;
    let k = T::lit(states.nrows() as f64);
    let loss = -q.sum() / k;
    let upstream = dq.slice(s![.., sd..]).mapv(|g| g / k);
    let grads = actor.backward_batch(&cache, upstream.view(), false)?;
    Ok((loss, grads))
}

/// One ascent step on the actor through the critic. The critic is only read.
/// Returns the loss before the step.
pub fn actor_update<T: Real, C: ActionValue<T> + ?Sized>(
    actor: &mut Mlp<T>,
    critic: &C,
    batch: &Minibatch<T>,
    opt: &mut Optimizer<T>,
) -> Result<T> {
    let (loss, grads) = actor_objective_and_gradient(actor, critic, batch.states.view())?;
    opt.apply(actor, &grads, Direction::Ascent)?;
    Ok(loss)
}

/// `target ← tau·online + (1 − tau)·target`, parameter by parameter.
pub fn soft_update<T: Real>(target: &mut Mlp<T>, online: &Mlp<T>, tau: T) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::invalid(format!(
            "soft update between different shapes {:?} and {:?}",
            target.dims(),
            online.dims()
        )));
    }
    if !(tau > T::zero() && tau <= T::one()) {
        return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    let keep = T::one() - tau;
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers()) {
        t.weights.zip_mut_with(&o.weights, |a, &b| *a = tau * b + keep * *a);
        t.bias.zip_mut_with(&o.bias, |a, &b| *a = tau * b + keep * *a);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateLosses<T> {
    pub critic: T,
    pub actor: T,
}

/// Agent networks together with their optimizers.
#[derive(Clone, Debug)]
pub struct Learner<T> {
    pub params: AgentParams<T>,
    pub actor_opt: Optimizer<T>,
    pub critic_opt: Optimizer<T>,
}

impl<T: Real> Learner<T> {
    pub fn new(params: AgentParams<T>, method: Method, actor_lr: T, critic_lr: T) -> Result<Self> {
        let actor_opt = Optimizer::new(method, actor_lr, &params.actor)?;
        let critic_opt = Optimizer::new(method, critic_lr, &params.critic)?;
        Ok(Self {
            params,
            actor_opt,
            critic_opt,
        })
    }

    /// Critic step, actor step, then both soft target updates.
    pub fn update(&mut self, batch: &Minibatch<T>) -> Result<UpdateLosses<T>> {
        let p = &mut self.params;
        let y = td_targets(batch, &p.target_actor, &p.target_critic, p.gamma)?;
        let critic = critic_update(&mut p.critic, batch, &y, &mut self.critic_opt)?;
        let actor = actor_update(&mut p.actor, &p.critic, batch, &mut self.actor_opt)?;
        soft_update(&mut p.target_critic, &p.critic, p.tau)?;
        soft_update(&mut p.target_actor, &p.actor, p.tau)?;
        Ok(UpdateLosses { critic, actor })
    }
}
