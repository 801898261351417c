//! Explicit labeled MDPs, stationary policies and induced Markov chains.
//!
//! States and actions are dense indices. Each state owns an ordered list of
//! enabled [`Choice`]s; a choice refers to a global action name through
//! [`Mdp::action_name`]. Policies and learners address actions by their local
//! position in that list.
//!
//! Outcomes carry optional annotations (`reward`, `accepting`, `reset`). Plain
//! input models leave them at their defaults; explicit products fill them in,
//! so every structural analysis works on both.

use crate::alphabet::{Letter, MAX_APS};
use crate::rng::sample_index;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Row sums must match 1 within this tolerance. Rows are never renormalized.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("malformed model: {}", .0.join("; "))]
    MalformedModel(Vec<String>),
    #[error("action {action} is not enabled in state {state}")]
    ActionNotEnabled { state: usize, action: usize },
    #[error("policy does not match model: {0}")]
    PolicyMismatch(String),
    #[error("invalid model file: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub to: usize,
    pub prob: f64,
    pub reward: f64,
    pub accepting: bool,
    pub reset: bool,
}

impl Outcome {
    pub fn plain(to: usize, prob: f64) -> Self {
        Outcome { to, prob, reward: 0.0, accepting: false, reset: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub outcomes: Vec<Outcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    initial: usize,
    aps: Vec<String>,
    labels: Vec<Letter>,
    action_names: Vec<String>,
    choices: Vec<Vec<Choice>>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.choices.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn aps(&self) -> &[String] {
        &self.aps
    }

    pub fn label(&self, state: usize) -> Letter {
        self.labels[state]
    }

    pub fn choices(&self, state: usize) -> &[Choice] {
        &self.choices[state]
    }

    pub fn choice(&self, state: usize, action: usize) -> Result<&Choice, MdpError> {
        self.choices
            .get(state)
            .and_then(|cs| cs.get(action))
            .ok_or(MdpError::ActionNotEnabled { state, action })
    }

    pub fn num_actions(&self, state: usize) -> usize {
        self.choices[state].len()
    }

    pub fn action_name(&self, state: usize, action: usize) -> &str {
        &self.action_names[self.choices[state][action].action]
    }

    /// Local index of the action called `name` at `state`.
    pub fn action_index(&self, state: usize, name: &str) -> Option<usize> {
        self.choices
            .get(state)?
            .iter()
            .position(|c| self.action_names[c.action] == name)
    }

    /// Total number of enabled state-action pairs.
    pub fn num_choices(&self) -> usize {
        self.choices.iter().map(Vec::len).sum()
    }

    /// Successor lists of the underlying graph (edges with positive probability).
    pub fn successor_graph(&self) -> Vec<Vec<usize>> {
        self.choices
            .iter()
            .map(|cs| {
                let mut succ: Vec<usize> = cs
                    .iter()
                    .flat_map(|c| c.outcomes.iter().filter(|o| o.prob > 0.0).map(|o| o.to))
                    .collect();
                succ.sort_unstable();
                succ.dedup();
                succ
            })
            .collect()
    }

    /// Returns a copy with every outcome reward replaced by `f(from, choice, outcome)`.
    pub fn map_rewards(&self, mut f: impl FnMut(usize, &Choice, &Outcome) -> f64) -> Mdp {
        let mut out = self.clone();
        for (s, cs) in out.choices.iter_mut().enumerate() {
            for c in cs.iter_mut() {
                let snapshot = c.clone();
                for (o, orig) in c.outcomes.iter_mut().zip(&snapshot.outcomes) {
                    o.reward = f(s, &snapshot, orig);
                }
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Mdp, MdpError> {
        let raw: MdpFile = serde_json::from_str(text).map_err(|e| MdpError::Json(e.to_string()))?;
        validate_mdp(&raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("mdp serializes")
    }

    pub fn to_file(&self) -> MdpFile {
        let annotated = self
            .choices
            .iter()
            .flatten()
            .flat_map(|c| &c.outcomes)
            .any(|o| o.reward != 0.0 || o.accepting || o.reset);
        let mut transitions = Vec::with_capacity(self.num_choices());
        for (s, cs) in self.choices.iter().enumerate() {
            for c in cs {
                transitions.push(TransitionEntry {
                    from: s,
                    action: self.action_names[c.action].clone(),
                    to: c.outcomes.iter().map(|o| (o.to, o.prob)).collect(),
                    reward: annotated.then(|| c.outcomes.iter().map(|o| o.reward).collect()),
                    accepting: annotated.then(|| c.outcomes.iter().map(|o| o.accepting).collect()),
                    reset: annotated.then(|| c.outcomes.iter().map(|o| o.reset).collect()),
                });
            }
        }
        MdpFile {
            states: self.num_states(),
            initial: self.initial,
            aps: self.aps.clone(),
            labels: self.labels.iter().map(|l| l.names(&self.aps)).collect(),
            transitions,
        }
    }
}

/// On-disk MDP description. Unknown keys are rejected.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub states: usize,
    pub initial: usize,
    pub aps: Vec<String>,
    pub labels: Vec<Vec<String>>,
    pub transitions: Vec<TransitionEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: usize,
    pub action: String,
    pub to: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepting: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset: Option<Vec<bool>>,
}

/// Checks every structural invariant and reports all violations at once.
pub fn validate_mdp(raw: &MdpFile) -> Result<Mdp, MdpError> {
    let n = raw.states;
    let mut errs = Vec::new();
    if n == 0 {
        errs.push("model has no states".to_string());
    }
    if raw.initial >= n.max(1) {
        errs.push(format!("initial state {} out of range", raw.initial));
    }
    if raw.aps.len() > MAX_APS {
        errs.push(format!("{} atomic propositions exceed the limit of {MAX_APS}", raw.aps.len()));
    }
    if raw.labels.len() != n {
        errs.push(format!("expected {n} label sets, found {}", raw.labels.len()));
    }
    let mut labels = vec![Letter::EMPTY; n];
    for (s, names) in raw.labels.iter().enumerate().take(n) {
        match Letter::from_names(names, &raw.aps) {
            Ok(l) => labels[s] = l,
            Err(name) => errs.push(format!("state {s} is labeled with undeclared proposition {name:?}")),
        }
    }

    let mut action_ids: HashMap<&str, usize> = HashMap::new();
    let mut action_names = Vec::new();
    let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); n];
    let mut declared = vec![false; n];
    for (i, t) in raw.transitions.iter().enumerate() {
        if let Some(d) = declared.get_mut(t.from) {
            *d = true;
        }
        let before = errs.len();
        if t.from >= n {
            errs.push(format!("transition {i}: source {} out of range", t.from));
        }
        if t.to.is_empty() {
            errs.push(format!("transition {i}: empty distribution"));
        }
        let mut sum = 0.0;
        for &(to, p) in &t.to {
            if to >= n {
                errs.push(format!("transition {i}: successor {to} out of range"));
            }
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("transition {i}: probability {p} outside [0, 1]"));
            }
            sum += p;
        }
        if !t.to.is_empty() && (sum - 1.0).abs() > PROB_TOLERANCE {
            errs.push(format!(
                "transition {i} (state {}, action {:?}): probabilities sum to {sum}",
                t.from, t.action
            ));
        }
        let len = t.to.len();
        if t.reward.as_ref().is_some_and(|r| r.len() != len)
            || t.accepting.as_ref().is_some_and(|r| r.len() != len)
            || t.reset.as_ref().is_some_and(|r| r.len() != len)
        {
            errs.push(format!("transition {i}: annotation lengths differ from successor list"));
        }
        if errs.len() > before {
            continue;
        }
        let next_id = action_names.len();
        let id = *action_ids.entry(t.action.as_str()).or_insert_with(|| {
            action_names.push(t.action.clone());
            next_id
        });
        if choices[t.from].iter().any(|c| c.action == id) {
            errs.push(format!("transition {i}: duplicate action {:?} in state {}", t.action, t.from));
            continue;
        }
        let outcomes = t
            .to
            .iter()
            .enumerate()
            .map(|(k, &(to, prob))| Outcome {
                to,
                prob,
                reward: t.reward.as_ref().map_or(0.0, |r| r[k]),
                accepting: t.accepting.as_ref().is_some_and(|r| r[k]),
                reset: t.reset.as_ref().is_some_and(|r| r[k]),
            })
            .collect();
        choices[t.from].push(Choice { action: id, outcomes });
    }
    for (s, cs) in choices.iter().enumerate() {
        if cs.is_empty() && !declared[s] {
            errs.push(format!("state {s} has no enabled action"));
        }
    }
    if !errs.is_empty() {
        return Err(MdpError::MalformedModel(errs));
    }
    Ok(Mdp { initial: raw.initial, aps: raw.aps.clone(), labels, action_names, choices })
}

/// Incremental construction of an [`Mdp`]; `build` runs full validation.
#[derive(Clone, Debug, Default)]
pub struct MdpBuilder {
    raw: MdpFile,
}

impl MdpBuilder {
    pub fn new(states: usize, aps: &[&str]) -> Self {
        MdpBuilder {
            raw: MdpFile {
                states,
                initial: 0,
                aps: aps.iter().map(|s| s.to_string()).collect(),
                labels: vec![Vec::new(); states],
                transitions: Vec::new(),
            },
        }
    }

    pub fn initial(mut self, s: usize) -> Self {
        self.raw.initial = s;
        self
    }

    pub fn label(mut self, s: usize, props: &[&str]) -> Self {
        if let Some(l) = self.raw.labels.get_mut(s) {
            *l = props.iter().map(|p| p.to_string()).collect();
        }
        self
    }

    pub fn action(mut self, from: usize, name: &str, to: &[(usize, f64)]) -> Self {
        self.raw.transitions.push(TransitionEntry {
            from,
            action: name.to_string(),
            to: to.to_vec(),
            reward: None,
            accepting: None,
            reset: None,
        });
        self
    }

    /// Adds an action whose outcomes carry reward/acceptance annotations.
    pub fn annotated(&mut self, from: usize, name: String, outcomes: &[Outcome]) {
        self.raw.transitions.push(TransitionEntry {
            from,
            action: name,
            to: outcomes.iter().map(|o| (o.to, o.prob)).collect(),
            reward: Some(outcomes.iter().map(|o| o.reward).collect()),
            accepting: Some(outcomes.iter().map(|o| o.accepting).collect()),
            reset: Some(outcomes.iter().map(|o| o.reset).collect()),
        });
    }

    pub fn set_aps(&mut self, aps: Vec<String>) {
        self.raw.aps = aps;
    }

    pub fn set_labels(&mut self, labels: Vec<Vec<String>>) {
        self.raw.labels = labels;
    }

    pub fn build(self) -> Result<Mdp, MdpError> {
        validate_mdp(&self.raw)
    }
}

/// Draws a successor of `(state, action)`; `action` is the local choice index.
pub fn sample_transition<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<usize, MdpError> {
    let choice = mdp.choice(state, action)?;
    let k = sample_index(rng, choice.outcomes.iter().map(|o| o.prob));
    Ok(choice.outcomes[k].to)
}

/// A memoryless randomized policy: one distribution over local actions per state.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPolicy {
    pub choice: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn pure(mdp: &Mdp, actions: &[usize]) -> Self {
        let choice = actions
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                let mut d = vec![0.0; mdp.num_actions(s).max(a + 1)];
                d[a] = 1.0;
                d
            })
            .collect();
        StationaryPolicy { choice }
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<(), MdpError> {
        if self.choice.len() != mdp.num_states() {
            return Err(MdpError::PolicyMismatch(format!(
                "policy covers {} states, model has {}",
                self.choice.len(),
                mdp.num_states()
            )));
        }
        for (s, d) in self.choice.iter().enumerate() {
            if d.len() > mdp.num_actions(s) && d[mdp.num_actions(s)..].iter().any(|&p| p != 0.0) {
                return Err(MdpError::PolicyMismatch(format!("state {s}: mass on a disabled action")));
            }
            if d.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(MdpError::PolicyMismatch(format!("state {s}: probability outside [0, 1]")));
            }
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > PROB_TOLERANCE {
                return Err(MdpError::PolicyMismatch(format!("state {s}: distribution sums to {sum}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainEdge {
    pub to: usize,
    pub prob: f64,
    pub reward: f64,
    pub accepting: bool,
    pub reset: bool,
}

/// Markov chain induced by a stationary policy. Rows are kept unmerged so
/// per-edge annotations survive.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    pub rows: Vec<Vec<ChainEdge>>,
}

impl MarkovChain {
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row_sum(&self, s: usize) -> f64 {
        self.rows[s].iter().map(|e| e.prob).sum()
    }

    pub fn is_row_stochastic(&self) -> bool {
        (0..self.num_states()).all(|s| (self.row_sum(s) - 1.0).abs() <= PROB_TOLERANCE)
    }

    /// Expected one-step reward from `s`.
    pub fn expected_reward(&self, s: usize) -> f64 {
        self.rows[s].iter().map(|e| e.prob * e.reward).sum()
    }

    pub fn successor_graph(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v: Vec<usize> = r.iter().filter(|e| e.prob > 0.0).map(|e| e.to).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }
}

pub fn induce_chain(mdp: &Mdp, policy: &StationaryPolicy) -> Result<MarkovChain, MdpError> {
    policy.validate(mdp)?;
    let rows = (0..mdp.num_states())
        .map(|s| {
            let mut row = Vec::new();
            for (a, &pa) in policy.choice[s].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for o in &mdp.choices(s)[a].outcomes {
                    row.push(ChainEdge {
                        to: o.to,
                        prob: pa * o.prob,
                        reward: o.reward,
                        accepting: o.accepting,
                        reset: o.reset,
                    });
                }
            }
            row
        })
        .collect();
    Ok(MarkovChain { rows })
}

/// Chain of a positional policy given as one local action index per state.
pub fn induce_positional(mdp: &Mdp, actions: &[usize]) -> Result<MarkovChain, MdpError> {
    if actions.len() != mdp.num_states() {
        return Err(MdpError::PolicyMismatch(format!(
            "policy covers {} states, model has {}",
            actions.len(),
            mdp.num_states()
        )));
    }
    let rows = actions
        .iter()
        .enumerate()
        .map(|(s, &a)| {
            let c = mdp.choice(s, a).map_err(|_| MdpError::PolicyMismatch(format!("state {s}: action {a} not enabled")))?;
            Ok(c.outcomes
                .iter()
                .map(|o| ChainEdge { to: o.to, prob: o.prob, reward: o.reward, accepting: o.accepting, reset: o.reset })
                .collect())
        })
        .collect::<Result<_, MdpError>>()?;
    Ok(MarkovChain { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Two states, each with a deterministic `stay` and `go` action.
    fn two_state() -> Mdp {
        MdpBuilder::new(2, &["a"])
            .label(1, &["a"])
            .action(0, "stay", &[(0, 1.0)])
            .action(0, "go", &[(1, 1.0)])
            .action(1, "stay", &[(1, 1.0)])
            .action(1, "go", &[(0, 1.0)])
            .build()
            .unwrap()
    }

    #[test]
    fn two_state_model_is_valid() {
        let m = two_state();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_actions(0), 2);
        assert_eq!(m.num_actions(1), 2);
        assert!(m.label(1).holds(0));
        assert!(!m.label(0).holds(0));
    }

    #[test]
    fn single_self_loop_is_valid() {
        let m = MdpBuilder::new(1, &[]).action(0, "loop", &[(0, 1.0)]).build().unwrap();
        assert_eq!(m.num_choices(), 1);
    }

    #[test]
    fn short_row_is_rejected() {
        let err = MdpBuilder::new(2, &[])
            .action(0, "x", &[(0, 0.5), (1, 0.4)])
            .action(1, "x", &[(1, 1.0)])
            .build()
            .unwrap_err();
        assert!(matches!(err, MdpError::MalformedModel(ref v) if v.len() == 1 && v[0].contains("sum to 0.9")));
    }

    #[test]
    fn every_violation_is_listed() {
        let err = MdpBuilder::new(3, &["a"])
            .initial(5)
            .label(0, &["zz"])
            .action(0, "x", &[(7, 1.0)])
            .action(1, "x", &[(1, 1.5)])
            .build()
            .unwrap_err();
        let MdpError::MalformedModel(v) = err else { panic!() };
        let text = v.join("\n");
        assert!(text.contains("initial state 5"));
        assert!(text.contains("undeclared proposition"));
        assert!(text.contains("successor 7 out of range"));
        assert!(text.contains("outside [0, 1]"));
        assert!(text.contains("state 2 has no enabled action"));
    }

    #[test]
    fn unknown_json_keys_are_rejected() {
        let text = r#"{"states":1,"initial":0,"aps":[],"labels":[[]],"transitions":[],"extra":1}"#;
        assert!(matches!(Mdp::from_json(text), Err(MdpError::Json(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = two_state();
        assert_eq!(Mdp::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn deterministic_edge_ignores_seed() {
        let m = two_state();
        for seed in 0..20 {
            let mut r = rng::stream(seed, 0);
            assert_eq!(sample_transition(&m, 0, 1, &mut r).unwrap(), 1);
        }
    }

    #[test]
    fn uniform_edge_frequency() {
        let m = MdpBuilder::new(2, &[])
            .action(0, "flip", &[(0, 0.5), (1, 0.5)])
            .action(1, "flip", &[(0, 0.5), (1, 0.5)])
            .build()
            .unwrap();
        let mut r = rng::stream(0, 0);
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_transition(&m, 0, 0, &mut r).unwrap() == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn disabled_action_is_an_error() {
        let m = two_state();
        let mut r = rng::stream(0, 0);
        assert_eq!(
            sample_transition(&m, 0, 2, &mut r),
            Err(MdpError::ActionNotEnabled { state: 0, action: 2 })
        );
    }

    #[test]
    fn pure_policy_gives_deterministic_chain() {
        let m = two_state();
        let chain = induce_chain(&m, &StationaryPolicy::pure(&m, &[1, 0])).unwrap();
        assert_eq!(chain.rows[0].len(), 1);
        assert_eq!(chain.rows[0][0].to, 1);
        assert_eq!(chain.rows[1][0].to, 1);
        assert!(chain.is_row_stochastic());
    }

    #[test]
    fn staying_on_not_a_makes_it_absorbing() {
        let m = two_state();
        let chain = induce_positional(&m, &[0, 1]).unwrap();
        assert_eq!(chain.successor_graph()[0], vec![0]);
    }

    #[test]
    fn mixed_policy_splits_mass() {
        let m = two_state();
        let p = StationaryPolicy { choice: vec![vec![0.5, 0.5], vec![0.5, 0.5]] };
        let chain = induce_chain(&m, &p).unwrap();
        let probs: Vec<f64> = chain.rows[0].iter().map(|e| e.prob).collect();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn policy_with_disabled_mass_is_rejected() {
        let m = two_state();
        let p = StationaryPolicy { choice: vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0]] };
        assert!(matches!(induce_chain(&m, &p), Err(MdpError::PolicyMismatch(_))));
    }
}
