use super::{epsilon_greedy, finish, Environment, LearnError, LearnerConfig, QTable, TrainResult};
use crate::rng::{stream, ENV_STREAM, POLICY_STREAM};
use std::time::Instant;

/// Differential Q-learning along a single trajectory of `cfg.steps` steps.
///
/// With `δ = r − r̄ + max Q(s′) − Q(s, a)` the visited pair moves by `α·δ` and
/// the average-reward estimate by `η·α·δ`.
pub fn differential_q_train<E: Environment>(env: &mut E, cfg: &LearnerConfig) -> Result<TrainResult, LearnError> {
    cfg.validate()?;
    if cfg.episodic {
        return Err(LearnError::BadConfig("episodic mode applies to the discounted learners only".into()));
    }
    let started = Instant::now();
    let mut env_rng = stream(cfg.seed, ENV_STREAM);
    let mut policy_rng = stream(cfg.seed, POLICY_STREAM);
    let mut q = QTable::default();
    let every = (cfg.steps / cfg.trace_points.max(1)).max(1);
    let mut trace = Vec::new();
    let mut s = env.start();
    let mut n = env.action_count(s)?;
    q.ensure(s, n);
    for t in 0..cfg.steps {
        let a = epsilon_greedy(&q, s, n, cfg.epsilon, &mut policy_rng);
        let step = env.step(s, a, &mut env_rng)?;
        let next = step.next;
        let n_next = env.action_count(next)?;
        q.ensure(next, n_next);
        let alpha = cfg.alpha_at(t);
        let delta = step.reward - q.r_bar + q.max(next) - q.values[s][a];
        q.values[s][a] += alpha * delta;
        q.r_bar += cfg.eta * alpha * delta;
        q.visits[s][a] += 1;
        if (t + 1) % every == 0 {
            trace.push((t + 1, q.r_bar));
        }
        s = next;
        n = n_next;
    }
    Ok(finish(env, &q, trace, cfg.steps, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::EnvStep;
    use crate::product::{ProductAction, ProductState};
    use crate::rng::Rng;

    /// Two states, two actions, every move pays `reward(s, a)`.
    struct Toy<F: Fn(usize, usize) -> f64>(F);

    impl<F: Fn(usize, usize) -> f64> Environment for Toy<F> {
        fn start(&mut self) -> usize {
            0
        }
        fn action_count(&mut self, _: usize) -> Result<usize, LearnError> {
            Ok(2)
        }
        fn step(&mut self, s: usize, a: usize, _: &mut Rng) -> Result<EnvStep, LearnError> {
            Ok(EnvStep { next: a, reward: (self.0)(s, a), accepting: false, discount: 1.0, terminal: false })
        }
        fn state_count(&self) -> usize {
            2
        }
        fn product_state(&self, _: usize) -> Option<ProductState> {
            None
        }
        fn product_action(&self, _: usize, _: usize) -> Option<ProductAction> {
            None
        }
    }

    #[test]
    fn constant_reward_rate_is_learned() {
        let cfg = LearnerConfig { steps: 200_000, ..Default::default() };
        let r = differential_q_train(&mut Toy(|_, _| 1.0), &cfg).unwrap();
        assert!((r.r_bar - 1.0).abs() < 1e-3);
        assert!(r.r_bar_trace.last().is_some_and(|p| (p.1 - 1.0).abs() < 1e-3));
    }

    #[test]
    fn trace_stays_within_reward_range() {
        let cfg = LearnerConfig { steps: 100_000, seed: 3, ..Default::default() };
        let r = differential_q_train(&mut Toy(|s, a| if s == 1 && a == 1 { 1.0 } else { -1.0 }), &cfg).unwrap();
        let burn = r.r_bar_trace.len() / 10;
        // constant step sizes leave some noise around the range
        assert!(r.r_bar_trace[burn..].iter().all(|p| p.1.is_finite() && (-1.05..=1.05).contains(&p.1)));
        // r_bar tracks the greedy rate, not the behaviour rate
        assert!((r.r_bar - 1.0).abs() < 0.05);
    }

    #[test]
    fn episodic_is_rejected() {
        let cfg = LearnerConfig { episodic: true, ..Default::default() };
        assert!(differential_q_train(&mut Toy(|_, _| 0.0), &cfg).is_err());
    }
}
