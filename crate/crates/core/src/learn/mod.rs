//! Tabular learners on product environments.
//!
//! [`differential_q_train`] runs one uninterrupted trajectory and maximises
//! the long-run average reward. [`discounted_q_train`] is plain Q-learning
//! with a per-step discount supplied by the environment; it drives the
//! [`HahnEnv`] and [`BozkurtEnv`] baselines.

mod differential;
mod discounted;

pub use differential::differential_q_train;
pub use discounted::{discounted_q_train, BozkurtEnv, HahnEnv};

use crate::product::{ProductAction, ProductEnv, ProductError, ProductPolicy, ProductState};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("invalid learner configuration: {0}")]
    BadConfig(String),
    #[error("zeta must lie in (0, 1), got {0}")]
    BadZeta(f64),
    #[error("discount must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error(transparent)]
    Product(#[from] ProductError),
}

/// One sampled transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvStep {
    pub next: usize,
    pub reward: f64,
    pub accepting: bool,
    /// Discount applied to the successor's value (1 for average reward).
    pub discount: f64,
    /// The episode ends here; the successor's value is not bootstrapped.
    pub terminal: bool,
}

/// A lazily explored environment with dense state ids.
pub trait Environment {
    fn start(&mut self) -> usize;
    fn action_count(&mut self, state: usize) -> Result<usize, LearnError>;
    fn step(&mut self, state: usize, action: usize, rng: &mut Rng) -> Result<EnvStep, LearnError>;
    /// Number of states discovered so far.
    fn state_count(&self) -> usize;
    fn product_state(&self, state: usize) -> Option<ProductState>;
    fn product_action(&self, state: usize, action: usize) -> Option<ProductAction>;
}

impl Environment for ProductEnv<'_> {
    fn start(&mut self) -> usize {
        0
    }

    fn action_count(&mut self, state: usize) -> Result<usize, LearnError> {
        Ok(self.actions_of(state)?.len())
    }

    fn step(&mut self, state: usize, action: usize, rng: &mut Rng) -> Result<EnvStep, LearnError> {
        let (next, o) = self.step_id(state, action, rng)?;
        Ok(EnvStep { next, reward: o.reward, accepting: o.accepting_edge, discount: 1.0, terminal: false })
    }

    fn state_count(&self) -> usize {
        self.num_discovered()
    }

    fn product_state(&self, state: usize) -> Option<ProductState> {
        (state < self.num_discovered()).then(|| self.state(state))
    }

    fn product_action(&self, state: usize, action: usize) -> Option<ProductAction> {
        self.known_actions(state).and_then(|a| a.get(action).copied())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub steps: u64,
    pub seed: u64,
    pub gamma: f64,
    pub zeta: f64,
    pub gamma_b: f64,
    pub episodic: bool,
    pub episode_length: u64,
    /// Step size decays as `alpha / (1 + t * alpha_decay)`; 0 keeps it constant.
    pub alpha_decay: f64,
    /// Number of samples kept in the average-reward trace.
    pub trace_points: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            alpha: 0.1,
            eta: 0.1,
            epsilon: 0.1,
            steps: 1_000_000,
            seed: 0,
            gamma: 0.99,
            zeta: 0.99,
            gamma_b: 0.99,
            episodic: false,
            episode_length: 1000,
            alpha_decay: 0.0,
            trace_points: 1000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::BadConfig(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.alpha_decay >= 0.0 && self.alpha_decay.is_finite()) {
            return bad(format!("alpha decay must be non-negative, got {}", self.alpha_decay));
        }
        if self.episodic && self.episode_length == 0 {
            return bad("episode length must be positive".into());
        }
        Ok(())
    }

    pub fn alpha_at(&self, t: u64) -> f64 {
        self.alpha / (1.0 + t as f64 * self.alpha_decay)
    }
}

/// Action values per discovered state, with visit counts and the
/// average-reward estimate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QTable {
    pub values: Vec<Vec<f64>>,
    pub visits: Vec<Vec<u64>>,
    pub r_bar: f64,
}

impl QTable {
    pub fn ensure(&mut self, state: usize, actions: usize) {
        if self.values.len() <= state {
            self.values.resize_with(state + 1, Vec::new);
            self.visits.resize_with(state + 1, Vec::new);
        }
        if self.values[state].len() < actions {
            self.values[state].resize(actions, 0.0);
            self.visits[state].resize(actions, 0);
        }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values.get(state).and_then(|v| v.get(action)).copied().unwrap_or(0.0)
    }

    pub fn max(&self, state: usize) -> f64 {
        self.values.get(state).and_then(|v| v.iter().copied().reduce(f64::max)).unwrap_or(0.0)
    }

    /// Highest-valued action; ties go to the lowest index.
    pub fn argmax(&self, state: usize) -> usize {
        let Some(v) = self.values.get(state) else { return 0 };
        let mut best = 0;
        for (a, &q) in v.iter().enumerate() {
            if q > v[best] {
                best = a;
            }
        }
        best
    }

    /// Visited pairs over the visit-count range.
    pub fn visit_summary(&self) -> (u64, u64, u64) {
        let all = self.visits.iter().flatten().copied();
        let unvisited = all.clone().filter(|&v| v == 0).count() as u64;
        let min = all.clone().min().unwrap_or(0);
        let max = all.max().unwrap_or(0);
        (unvisited, min, max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub state: ProductState,
    pub action: ProductAction,
    pub value: f64,
    pub visits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub greedy: ProductPolicy,
    /// `(step, r_bar)` samples.
    pub r_bar_trace: Vec<(u64, f64)>,
    pub r_bar: f64,
    pub q_final: Vec<QEntry>,
    pub steps_taken: u64,
    pub states_discovered: usize,
    /// Discovered state-action pairs never taken.
    pub unvisited_pairs: u64,
    /// Largest over smallest visit count among discovered pairs.
    pub visit_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Greedy positional policy on every discovered product state.
pub fn greedy_policy<E: Environment>(env: &E, q: &QTable) -> ProductPolicy {
    let entries = (0..env.state_count())
        .filter_map(|s| Some((env.product_state(s)?, env.product_action(s, q.argmax(s))?)))
        .collect();
    ProductPolicy { entries }
}

pub(crate) fn epsilon_greedy(q: &QTable, state: usize, actions: usize, epsilon: f64, rng: &mut Rng) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..actions)
    } else {
        q.argmax(state)
    }
}

pub(crate) fn finish<E: Environment>(
    env: &E,
    q: &QTable,
    trace: Vec<(u64, f64)>,
    steps: u64,
    started: std::time::Instant,
) -> TrainResult {
    let mut q_final = Vec::new();
    for s in 0..q.values.len() {
        let Some(x) = env.product_state(s) else { continue };
        for a in 0..q.values[s].len() {
            if let Some(action) = env.product_action(s, a) {
                q_final.push(QEntry { state: x, action, value: q.values[s][a], visits: q.visits[s][a] });
            }
        }
    }
    let (unvisited, min, max) = q.visit_summary();
    TrainResult {
        greedy: greedy_policy(env, q),
        r_bar_trace: trace,
        r_bar: q.r_bar,
        q_final,
        steps_taken: steps,
        states_discovered: env.state_count(),
        unvisited_pairs: unvisited,
        visit_ratio: (min > 0).then(|| max as f64 / min as f64),
        wall_time_s: Some(started.elapsed().as_secs_f64()),
    }
}
