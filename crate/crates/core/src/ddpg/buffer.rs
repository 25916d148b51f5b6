use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One `(x, u, r, x', terminal)` tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    /// `true` when `next_state` is absorbing, so no bootstrap term applies.
    pub terminal: bool,
}

/// A sampled batch laid out as matrices, one transition per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Minibatch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
    pub terminals: Vec<bool>,
    /// Buffer slots the rows came from.
    pub indices: Vec<usize>,
}

impl<T: Real> Minibatch<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Packs transitions in the given order.
    pub fn from_transitions(items: &[Transition<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid("minibatch needs at least one transition"))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let k = items.len();
        let mut states = Array2::zeros((k, sd));
        let mut actions = Array2::zeros((k, ad));
        let mut next_states = Array2::zeros((k, sd));
        let mut rewards = Array1::zeros(k);
        let mut terminals = Vec::with_capacity(k);
        for (i, t) in items.iter().enumerate() {
            if t.state.len() != sd || t.next_state.len() != sd || t.action.len() != ad {
                return Err(Error::invalid("transitions in a minibatch must share dimensions"));
            }
            states.row_mut(i).assign(&ndarray::aview1(&t.state));
            actions.row_mut(i).assign(&ndarray::aview1(&t.action));
            next_states.row_mut(i).assign(&ndarray::aview1(&t.next_state));
            rewards[i] = t.reward;
            terminals.push(t.terminal);
        }
        Ok(Self {
            states,
            actions,
            rewards,
            next_states,
            terminals,
            indices: (0..k).collect(),
        })
    }

    /// `[state ‖ action]` rows, the critic's input layout.
    pub fn state_actions(&self) -> Array2<T> {
        concat_columns(&self.states, &self.actions)
    }
}

pub(crate) fn concat_columns<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).expect("row counts agree")
}

/// Fixed-capacity ring of transitions with flat column storage.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<T>,
    actions: Vec<T>,
    rewards: Vec<T>,
    next_states: Vec<T>,
    terminals: Vec<bool>,
    cursor: usize,
    len: usize,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            states: vec![T::zero(); capacity * state_dim],
            actions: vec![T::zero(); capacity * action_dim],
            rewards: vec![T::zero(); capacity],
            next_states: vec![T::zero(); capacity * state_dim],
            terminals: vec![false; capacity],
            cursor: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends `t`, overwriting the oldest entry once full.
    ///
    /// Panics if the transition's dimensions differ from the buffer's.
    pub fn push(&mut self, t: Transition<T>) {
        assert_eq!(t.state.len(), self.state_dim, "state width");
        assert_eq!(t.next_state.len(), self.state_dim, "next state width");
        assert_eq!(t.action.len(), self.action_dim, "action width");
        let i = self.cursor;
        let (sd, ad) = (self.state_dim, self.action_dim);
        self.states[i * sd..(i + 1) * sd].copy_from_slice(&t.state);
        self.next_states[i * sd..(i + 1) * sd].copy_from_slice(&t.next_state);
        self.actions[i * ad..(i + 1) * ad].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.terminals[i] = t.terminal;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    fn slot_of(&self, age_index: usize) -> usize {
        let oldest = if self.len < self.capacity { 0 } else { self.cursor };
        (oldest + age_index) % self.capacity
    }

    /// The `i`-th stored transition counting from the oldest.
    pub fn get(&self, i: usize) -> Option<Transition<T>> {
        (i < self.len).then(|| self.read_slot(self.slot_of(i)))
    }

    fn read_slot(&self, s: usize) -> Transition<T> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[s * sd..(s + 1) * sd].to_vec(),
            action: self.actions[s * ad..(s + 1) * ad].to_vec(),
            reward: self.rewards[s],
            next_state: self.next_states[s * sd..(s + 1) * sd].to_vec(),
            terminal: self.terminals[s],
        }
    }

    /// Draws `k` distinct stored transitions uniformly at random.
    pub fn sample(&self, k: usize, rng: &mut impl Rng) -> Result<Minibatch<T>> {
        if k > self.len {
            return Err(Error::InsufficientSamples {
                available: self.len,
                requested: k,
            });
        }
        if k == 0 {
            return Err(Error::invalid("minibatch size must be positive"));
        }
        let picks = index::sample(rng, self.len, k).into_vec();
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut states = Array2::zeros((k, sd));
        let mut actions = Array2::zeros((k, ad));
        let mut next_states = Array2::zeros((k, sd));
        let mut rewards = Array1::zeros(k);
        let mut terminals = Vec::with_capacity(k);
        // slots are valid indices directly: before wrap-around they are 0..len, after it every slot is live
        for (row, &s) in picks.iter().enumerate() {
            states
                .row_mut(row)
                .assign(&ndarray::aview1(&self.states[s * sd..(s + 1) * sd]));
            next_states
                .row_mut(row)
                .assign(&ndarray::aview1(&self.next_states[s * sd..(s + 1) * sd]));
            actions
                .row_mut(row)
                .assign(&ndarray::aview1(&self.actions[s * ad..(s + 1) * ad]));
            rewards[row] = self.rewards[s];
            terminals.push(self.terminals[s]);
        }
        Ok(Minibatch {
            states,
            actions,
            rewards,
            next_states,
            terminals,
            indices: picks,
        })
    }
}
