use super::{epsilon_greedy, finish, EnvStep, Environment, LearnError, LearnerConfig, QTable, TrainResult};
use crate::product::{ProductAction, ProductEnv, ProductState};
use crate::rng::{stream, Rng, ENV_STREAM, POLICY_STREAM};
use rand::Rng as _;
use std::time::Instant;

fn check_unit(x: f64, err: fn(f64) -> LearnError) -> Result<(), LearnError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(err(x))
    }
}

/// Reachability reduction: each accepting edge leads to an extra target
/// state with probability `1 − ζ`, paying 1 on the way in.
///
/// The target is id 0. In episodic mode reaching it ends the episode; in
/// continuing mode it is an absorbing zero-reward state.
pub struct HahnEnv<'a> {
    inner: ProductEnv<'a>,
    zeta: f64,
    episodic: bool,
}

impl<'a> HahnEnv<'a> {
    pub fn new(inner: ProductEnv<'a>, zeta: f64, episodic: bool) -> Result<Self, LearnError> {
        check_unit(zeta, LearnError::BadZeta)?;
        Ok(HahnEnv { inner, zeta, episodic })
    }

    pub fn inner(&self) -> &ProductEnv<'a> {
        &self.inner
    }
}

impl Environment for HahnEnv<'_> {
    fn start(&mut self) -> usize {
        1
    }

    fn action_count(&mut self, state: usize) -> Result<usize, LearnError> {
        if state == 0 {
            Ok(1)
        } else {
            self.inner.action_count(state - 1)
        }
    }

    fn step(&mut self, state: usize, action: usize, rng: &mut Rng) -> Result<EnvStep, LearnError> {
        if state == 0 {
            return Ok(EnvStep { next: 0, reward: 0.0, accepting: false, discount: 1.0, terminal: self.episodic });
        }
        let inner = self.inner.step(state - 1, action, rng)?;
        if inner.accepting && rng.gen::<f64>() >= self.zeta {
            return Ok(EnvStep { next: 0, reward: 1.0, accepting: true, discount: 1.0, terminal: self.episodic });
        }
        Ok(EnvStep { next: inner.next + 1, reward: 0.0, ..inner })
    }

    fn state_count(&self) -> usize {
        self.inner.state_count() + 1
    }

    fn product_state(&self, state: usize) -> Option<ProductState> {
        state.checked_sub(1).and_then(|s| self.inner.product_state(s))
    }

    fn product_action(&self, state: usize, action: usize) -> Option<ProductAction> {
        state.checked_sub(1).and_then(|s| self.inner.product_action(s, action))
    }
}

/// State-dependent discounting: accepting edges pay `1 − γ_B` and discount
/// by `γ_B`, all other edges pay 0 and discount by `γ`.
pub struct BozkurtEnv<'a> {
    inner: ProductEnv<'a>,
    gamma_b: f64,
    gamma: f64,
}

impl<'a> BozkurtEnv<'a> {
    pub fn new(inner: ProductEnv<'a>, gamma_b: f64, gamma: f64) -> Result<Self, LearnError> {
        check_unit(gamma_b, LearnError::BadGamma)?;
        check_unit(gamma, LearnError::BadGamma)?;
        Ok(BozkurtEnv { inner, gamma_b, gamma })
    }

    pub fn inner(&self) -> &ProductEnv<'a> {
        &self.inner
    }
}

impl Environment for BozkurtEnv<'_> {
    fn start(&mut self) -> usize {
        self.inner.start()
    }

    fn action_count(&mut self, state: usize) -> Result<usize, LearnError> {
        self.inner.action_count(state)
    }

    fn step(&mut self, state: usize, action: usize, rng: &mut Rng) -> Result<EnvStep, LearnError> {
        let s = self.inner.step(state, action, rng)?;
        Ok(if s.accepting {
            EnvStep { reward: 1.0 - self.gamma_b, discount: self.gamma_b, ..s }
        } else {
            EnvStep { reward: 0.0, discount: self.gamma, ..s }
        })
    }

    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    fn product_state(&self, state: usize) -> Option<ProductState> {
        self.inner.product_state(state)
    }

    fn product_action(&self, state: usize, action: usize) -> Option<ProductAction> {
        self.inner.product_action(state, action)
    }
}

/// Q-learning with the discount each step reports. The environment's own
/// discount of 1 is replaced by `cfg.gamma`.
///
/// In episodic mode the trajectory restarts after a terminal step or after
/// `cfg.episode_length` steps.
pub fn discounted_q_train<E: Environment>(env: &mut E, cfg: &LearnerConfig) -> Result<TrainResult, LearnError> {
    cfg.validate()?;
    check_unit(cfg.gamma, LearnError::BadGamma)?;
    let started = Instant::now();
    let mut env_rng = stream(cfg.seed, ENV_STREAM);
    let mut policy_rng = stream(cfg.seed, POLICY_STREAM);
    let mut q = QTable::default();
    let mut s = env.start();
    let mut n = env.action_count(s)?;
    q.ensure(s, n);
    let mut in_episode = 0u64;
    for t in 0..cfg.steps {
        let a = epsilon_greedy(&q, s, n, cfg.epsilon, &mut policy_rng);
        let step = env.step(s, a, &mut env_rng)?;
        let n_next = env.action_count(step.next)?;
        q.ensure(step.next, n_next);
        let gamma = if step.discount < 1.0 { step.discount } else { cfg.gamma };
        let target = if step.terminal { step.reward } else { step.reward + gamma * q.max(step.next) };
        q.values[s][a] += cfg.alpha_at(t) * (target - q.values[s][a]);
        q.visits[s][a] += 1;
        in_episode += 1;
        if cfg.episodic && (step.terminal || in_episode >= cfg.episode_length) {
            in_episode = 0;
            s = env.start();
            n = env.action_count(s)?;
        } else {
            s = step.next;
            n = n_next;
        }
    }
    Ok(finish(env, &q, Vec::new(), cfg.steps, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::parse_automaton;
    use crate::benchmarks;
    use crate::mdp::{Mdp, MdpBuilder};
    use crate::product::{build_explicit_product, Component, DEFAULT_PRODUCT_CAP};
    use crate::verify::policy_satisfaction_probability;

    fn loop_mdp(labelled: bool) -> Mdp {
        let b = MdpBuilder::new(1, &["a"]).action(0, "x", &[(0, 1.0)]);
        if labelled { b.label(0, &["a"]) } else { b }.build().unwrap()
    }

    struct Unit;

    impl Environment for Unit {
        fn start(&mut self) -> usize {
            0
        }
        fn action_count(&mut self, _: usize) -> Result<usize, LearnError> {
            Ok(1)
        }
        fn step(&mut self, _: usize, _: usize, _: &mut Rng) -> Result<EnvStep, LearnError> {
            Ok(EnvStep { next: 0, reward: 1.0, accepting: false, discount: 1.0, terminal: false })
        }
        fn state_count(&self) -> usize {
            1
        }
        fn product_state(&self, _: usize) -> Option<ProductState> {
            Some(ProductState { mdp_state: 0, machine_state: crate::machine::MachineState { automaton_state: 0, bit: 0 } })
        }
        fn product_action(&self, _: usize, _: usize) -> Option<ProductAction> {
            Some(ProductAction::Halt)
        }
    }

    #[test]
    fn geometric_value() {
        let cfg = LearnerConfig { gamma: 0.5, steps: 2000, ..Default::default() };
        let mut env = Unit;
        let r = discounted_q_train(&mut env, &cfg).unwrap();
        assert!((r.q_final[0].value - 2.0).abs() < 1e-3);
    }

    #[test]
    fn target_frequency_matches_zeta() {
        let mdp = loop_mdp(true);
        let aut = parse_automaton(benchmarks::GF_A).unwrap();
        let mut env = HahnEnv::new(ProductEnv::new(&mdp, Component::Automaton(&aut)).unwrap(), 0.9, false).unwrap();
        let mut rng = stream(7, ENV_STREAM);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            let s = env.step(1, 0, &mut rng).unwrap();
            assert!(s.accepting);
            hits += (s.next == 0) as u32;
        }
        assert!((hits as f64 / n as f64 - 0.1).abs() < 0.01);
    }

    #[test]
    fn rejecting_edge_never_hits_target() {
        let mdp = loop_mdp(false);
        let aut = parse_automaton(benchmarks::GF_A).unwrap();
        let mut env = HahnEnv::new(ProductEnv::new(&mdp, Component::Automaton(&aut)).unwrap(), 0.5, true).unwrap();
        let mut rng = stream(0, ENV_STREAM);
        assert!((0..1000).all(|_| env.step(1, 0, &mut rng).unwrap().next != 0));
    }

    #[test]
    fn parameter_bounds() {
        let mdp = loop_mdp(true);
        let aut = parse_automaton(benchmarks::GF_A).unwrap();
        let env = || ProductEnv::new(&mdp, Component::Automaton(&aut)).unwrap();
        assert!(matches!(HahnEnv::new(env(), 1.0, false), Err(LearnError::BadZeta(_))));
        assert!(matches!(BozkurtEnv::new(env(), 0.0, 0.9), Err(LearnError::BadGamma(_))));
        assert!(BozkurtEnv::new(env(), 0.995, 0.99999).is_ok());
    }

    #[test]
    fn state_dependent_discount() {
        let aut = parse_automaton(benchmarks::GF_A).unwrap();
        let mut rng = stream(0, ENV_STREAM);
        let yes = loop_mdp(true);
        let mut env = BozkurtEnv::new(ProductEnv::new(&yes, Component::Automaton(&aut)).unwrap(), 0.8, 0.95).unwrap();
        let s = env.step(0, 0, &mut rng).unwrap();
        assert!((s.reward - 0.2).abs() < 1e-15 && s.discount == 0.8);
        let no = loop_mdp(false);
        let mut env = BozkurtEnv::new(ProductEnv::new(&no, Component::Automaton(&aut)).unwrap(), 0.8, 0.95).unwrap();
        let s = env.step(0, 0, &mut rng).unwrap();
        assert!(s.reward == 0.0 && s.discount == 0.95);
    }

    #[test]
    fn unsatisfiable_spec_gives_zero() {
        let mdp = benchmarks::ring(3).unwrap();
        let aut = parse_automaton(
            "HOA: v1 States: 1 Start: 0 AP: 1 \"a\" acc-name: Buchi Acceptance: 1 Inf(0) --BODY-- State: 0 [t] 0 --END--",
        )
        .unwrap();
        let mut env = HahnEnv::new(ProductEnv::new(&mdp, Component::Automaton(&aut)).unwrap(), 0.9, true).unwrap();
        let cfg = LearnerConfig { steps: 20_000, episodic: true, episode_length: 50, ..Default::default() };
        let r = discounted_q_train(&mut env, &cfg).unwrap();
        let product = build_explicit_product(&mdp, Component::Automaton(&aut), DEFAULT_PRODUCT_CAP).unwrap();
        let (actions, _) = r.greedy.to_positional(&product);
        assert_eq!(policy_satisfaction_probability(&product, &actions, 1e-10).unwrap().value, 0.0);
    }
}
