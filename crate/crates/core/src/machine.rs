//! Reward machines built on top of a Büchi automaton.
//!
//! [`ResetRewardMachine`] adds an `ε` reset from every state to the initial
//! state. [`LexicographicRewardMachine`] runs the automaton on two layers
//! selected by a bit: layer 0 pays the external reward, layer 1 pays a
//! penalised version of it until an accepting transition sends the agent
//! back. Both are driven through [`RewardMachine`].

use crate::alphabet::Letter;
use crate::automaton::{coaccessible_states, BuchiAutomaton};
use crate::rng::sample_index;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error("reset reward must be negative, got {0}")]
    NonNegativeC(f64),
    #[error("flip probability must lie in (0, 1), got {0}")]
    BadBeta(f64),
    #[error("c1 = {c1} violates c1 + {max} < {min}")]
    BadC1 { c1: f64, min: f64, max: f64 },
    #[error("c2 must be negative, got {0}")]
    BadC2(f64),
    #[error("bad beta schedule: {0}")]
    BadSchedule(String),
    #[error("automaton state {to} is not a successor of {from} on {letter:?}")]
    IllegalSuccessor { from: usize, letter: Letter, to: usize },
    #[error("{kind:?} is not available in machine state {state:?}")]
    IllegalEpsilon { kind: Epsilon, state: MachineState },
    #[error("invalid reward file: {0}")]
    RewardFile(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MachineState {
    pub automaton_state: usize,
    pub bit: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Epsilon {
    /// Reset machine: back to the initial automaton state.
    Reset,
    /// Lexicographic machine: reset the automaton state, keep the bit.
    ResetAutomaton,
    /// Lexicographic machine: clear the bit, keep the automaton state.
    ResetBit,
}

impl Epsilon {
    /// Whether the transition restarts the automaton run.
    pub fn resets_automaton(self) -> bool {
        !matches!(self, Epsilon::ResetBit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MachineOutcome {
    pub next: MachineState,
    pub prob: f64,
    pub reward: f64,
    pub accepting: bool,
    /// The automaton run was restarted (ε, ε1 or a hard reset).
    pub reset: bool,
}

/// At most two branches: the bit may or may not flip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branches {
    items: [MachineOutcome; 2],
    len: usize,
}

impl Branches {
    fn one(o: MachineOutcome) -> Self {
        Branches { items: [o, o], len: 1 }
    }

    fn two(a: MachineOutcome, b: MachineOutcome) -> Self {
        Branches { items: [a, b], len: 2 }
    }

    pub fn as_slice(&self) -> &[MachineOutcome] {
        &self.items[..self.len]
    }
}

/// Input consumed by [`machine_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MachineInput {
    Letter { letter: Letter, successor: usize, edge: (usize, usize) },
    Epsilon(Epsilon),
}

/// External reward `ρ(s, s')`; unlisted pairs pay `default`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExternalReward {
    table: HashMap<(usize, usize), f64>,
    default: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardFile {
    #[serde(default)]
    default: f64,
    rewards: Vec<RewardEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardEntry {
    from: usize,
    to: usize,
    reward: f64,
}

impl ExternalReward {
    pub fn new(entries: impl IntoIterator<Item = ((usize, usize), f64)>) -> Self {
        ExternalReward { table: entries.into_iter().collect(), default: 0.0 }
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.table.get(&(s, t)).copied().unwrap_or(self.default)
    }

    /// Smallest value over the listed entries and the default.
    pub fn min(&self) -> f64 {
        self.table.values().copied().fold(self.default, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.table.values().copied().fold(self.default, f64::max)
    }

    /// `{"default": 0.0, "rewards": [{"from": 1, "to": 1, "reward": 1.0}]}`
    pub fn from_json(text: &str) -> Result<Self, MachineError> {
        let f: RewardFile = serde_json::from_str(text).map_err(|e| MachineError::RewardFile(e.to_string()))?;
        if !f.default.is_finite() || f.rewards.iter().any(|e| !e.reward.is_finite()) {
            return Err(MachineError::RewardFile("rewards must be finite".into()));
        }
        Ok(ExternalReward {
            table: f.rewards.into_iter().map(|e| ((e.from, e.to), e.reward)).collect(),
            default: f.default,
        })
    }

    pub fn to_json(&self) -> String {
        let mut rewards: Vec<RewardEntry> =
            self.table.iter().map(|(&(from, to), &reward)| RewardEntry { from, to, reward }).collect();
        rewards.sort_by_key(|e| (e.from, e.to));
        serde_json::to_string_pretty(&RewardFile { default: self.default, rewards }).expect("rewards serialize")
    }
}

/// `β(i) = β / (1 + i / scale)^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<(), MachineError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(MachineError::BadSchedule(format!("scale {} must be positive", self.scale)));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(MachineError::BadSchedule(format!(
                "exponent {} does not give a nonincreasing sequence tending to 0",
                self.exponent
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResetRewardMachine {
    base: BuchiAutomaton,
    c: f64,
    hard_resets: bool,
    coaccessible: Vec<bool>,
}

impl ResetRewardMachine {
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn hard_resets(&self) -> bool {
        self.hard_resets
    }

    pub fn coaccessible(&self) -> &[bool] {
        &self.coaccessible
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexicographicRewardMachine {
    base: BuchiAutomaton,
    beta: f64,
    c1: f64,
    c2: f64,
    rho: ExternalReward,
    schedule: Option<BetaSchedule>,
}

impl LexicographicRewardMachine {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn external_reward(&self) -> &ExternalReward {
        &self.rho
    }

    pub fn schedule(&self) -> Option<BetaSchedule> {
        self.schedule
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardMachine {
    Reset(ResetRewardMachine),
    Lexicographic(LexicographicRewardMachine),
}

pub fn build_reset_machine(aut: BuchiAutomaton, c: f64, hard_resets: bool) -> Result<RewardMachine, MachineError> {
    if !(c < 0.0) || !c.is_finite() {
        return Err(MachineError::NonNegativeC(c));
    }
    let coaccessible = coaccessible_states(&aut);
    Ok(RewardMachine::Reset(ResetRewardMachine { base: aut, c, hard_resets, coaccessible }))
}

pub fn build_lexicographic_machine(
    aut: BuchiAutomaton,
    rho: ExternalReward,
    beta: f64,
    c1: f64,
    c2: f64,
    schedule: Option<BetaSchedule>,
) -> Result<RewardMachine, MachineError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(MachineError::BadBeta(beta));
    }
    let (min, max) = (rho.min(), rho.max());
    if !(c1 + max < min) {
        return Err(MachineError::BadC1 { c1, min, max });
    }
    if !(c2 < 0.0) || !c2.is_finite() {
        return Err(MachineError::BadC2(c2));
    }
    if let Some(s) = &schedule {
        s.validate()?;
    }
    Ok(RewardMachine::Lexicographic(LexicographicRewardMachine { base: aut, beta, c1, c2, rho, schedule }))
}

/// Flip probability in effect at training step `step`.
pub fn schedule_beta(machine: &LexicographicRewardMachine, step: u64) -> f64 {
    match machine.schedule {
        None => machine.beta,
        Some(s) => machine.beta / (1.0 + step as f64 / s.scale).powf(s.exponent),
    }
}

impl RewardMachine {
    pub fn automaton(&self) -> &BuchiAutomaton {
        match self {
            RewardMachine::Reset(m) => &m.base,
            RewardMachine::Lexicographic(m) => &m.base,
        }
    }

    pub fn initial(&self) -> MachineState {
        MachineState { automaton_state: self.automaton().initial(), bit: 0 }
    }

    pub fn num_states(&self) -> usize {
        match self {
            RewardMachine::Reset(m) => m.base.num_states(),
            RewardMachine::Lexicographic(m) => 2 * m.base.num_states(),
        }
    }

    /// Machine states in a fixed order: automaton state major, bit minor.
    pub fn states(&self) -> Vec<MachineState> {
        let bits: &[u8] = match self {
            RewardMachine::Reset(_) => &[0],
            RewardMachine::Lexicographic(_) => &[0, 1],
        };
        (0..self.automaton().num_states())
            .flat_map(|q| bits.iter().map(move |&bit| MachineState { automaton_state: q, bit }))
            .collect()
    }

    /// Whether outcome probabilities depend on the step index.
    pub fn is_time_varying(&self) -> bool {
        matches!(self, RewardMachine::Lexicographic(m) if m.schedule.is_some())
    }

    /// Legal ε-inputs at `u`, in canonical order.
    pub fn epsilons(&self, u: MachineState) -> Vec<Epsilon> {
        match self {
            RewardMachine::Reset(_) => vec![Epsilon::Reset],
            RewardMachine::Lexicographic(m) => {
                let mut v = Vec::with_capacity(2);
                if u.automaton_state != m.base.initial() {
                    v.push(Epsilon::ResetAutomaton);
                }
                if u.bit == 1 {
                    v.push(Epsilon::ResetBit);
                }
                v
            }
        }
    }

    pub fn epsilon_outcome(&self, u: MachineState, kind: Epsilon) -> Result<MachineOutcome, MachineError> {
        if !self.epsilons(u).contains(&kind) {
            return Err(MachineError::IllegalEpsilon { kind, state: u });
        }
        let q0 = self.automaton().initial();
        let (next, reward) = match (self, kind) {
            (RewardMachine::Reset(m), _) => (MachineState { automaton_state: q0, bit: 0 }, m.c),
            (RewardMachine::Lexicographic(m), Epsilon::ResetAutomaton) => {
                (MachineState { automaton_state: q0, bit: u.bit }, m.c2)
            }
            (RewardMachine::Lexicographic(m), _) => (MachineState { automaton_state: u.automaton_state, bit: 0 }, m.c2),
        };
        Ok(MachineOutcome { next, prob: 1.0, reward, accepting: false, reset: kind.resets_automaton() })
    }

    /// Distribution over next machine states after reading `letter` and
    /// committing to automaton successor `succ`, on MDP edge `(s, s')`.
    pub fn letter_outcomes(
        &self,
        u: MachineState,
        letter: Letter,
        succ: usize,
        edge: (usize, usize),
        step: u64,
    ) -> Result<Branches, MachineError> {
        let q = u.automaton_state;
        let aut = self.automaton();
        let Some(e) = aut.successors(q, letter).iter().find(|e| e.to == succ) else {
            return Err(MachineError::IllegalSuccessor { from: q, letter, to: succ });
        };
        let acc = e.accepting;
        match self {
            RewardMachine::Reset(m) => {
                if m.hard_resets && !m.coaccessible[succ] {
                    return Ok(Branches::one(MachineOutcome {
                        next: MachineState { automaton_state: aut.initial(), bit: 0 },
                        prob: 1.0,
                        reward: m.c,
                        accepting: false,
                        reset: true,
                    }));
                }
                Ok(Branches::one(MachineOutcome {
                    next: MachineState { automaton_state: succ, bit: 0 },
                    prob: 1.0,
                    reward: if acc { 1.0 } else { 0.0 },
                    accepting: acc,
                    reset: false,
                }))
            }
            RewardMachine::Lexicographic(m) => {
                let rho = m.rho.get(edge.0, edge.1);
                let at = |bit: u8, prob: f64, reward: f64| MachineOutcome {
                    next: MachineState { automaton_state: succ, bit },
                    prob,
                    reward,
                    accepting: acc,
                    reset: false,
                };
                if u.bit == 0 {
                    let beta = schedule_beta(m, step);
                    Ok(Branches::two(at(0, 1.0 - beta, rho), at(1, beta, rho)))
                } else {
                    Ok(Branches::one(at(if acc { 0 } else { 1 }, 1.0, m.c1 + rho)))
                }
            }
        }
    }
}

/// Advances the machine by one input, sampling the bit flip if any.
pub fn machine_step<R: rand::Rng + ?Sized>(
    machine: &RewardMachine,
    state: MachineState,
    input: MachineInput,
    rng: &mut R,
    step: u64,
) -> Result<(MachineState, f64), MachineError> {
    match input {
        MachineInput::Epsilon(kind) => machine.epsilon_outcome(state, kind).map(|o| (o.next, o.reward)),
        MachineInput::Letter { letter, successor, edge } => {
            let b = machine.letter_outcomes(state, letter, successor, edge, step)?;
            let outs = b.as_slice();
            let o = if outs.len() == 1 { outs[0] } else { outs[sample_index(rng, outs.iter().map(|o| o.prob))] };
            Ok((o.next, o.reward))
        }
    }
}

/// One row of the machine's transition table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub from: MachineState,
    /// Letter as a list of true propositions, or the ε kind.
    pub input: String,
    pub to: MachineState,
    pub prob: f64,
    /// Fixed part of the reward.
    pub reward: f64,
    /// Whether `ρ(s, s')` is added on top of `reward`.
    pub plus_external: bool,
    pub accepting: bool,
    pub reset: bool,
}

/// Full transition/reward table, for inspection and golden tests.
pub fn machine_table(machine: &RewardMachine) -> Vec<TableRow> {
    let aut = machine.automaton();
    let lex = matches!(machine, RewardMachine::Lexicographic(_));
    let mut rows = Vec::new();
    for u in machine.states() {
        for l in 0..aut.alphabet_size() {
            let letter = Letter(l as u32);
            for e in aut.successors(u.automaton_state, letter) {
                let b = machine.letter_outcomes(u, letter, e.to, (usize::MAX, usize::MAX), 0).expect("listed successor");
                for o in b.as_slice() {
                    let reward = if lex { if u.bit == 1 { o.reward - external_default(machine) } else { 0.0 } } else { o.reward };
                    rows.push(TableRow {
                        from: u,
                        input: letter.display(aut.aps()).to_string(),
                        to: o.next,
                        prob: o.prob,
                        reward,
                        plus_external: lex,
                        accepting: o.accepting,
                        reset: o.reset,
                    });
                }
            }
        }
        for kind in machine.epsilons(u) {
            let o = machine.epsilon_outcome(u, kind).expect("listed epsilon");
            rows.push(TableRow {
                from: u,
                input: serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                to: o.next,
                prob: o.prob,
                reward: o.reward,
                plus_external: false,
                accepting: false,
                reset: o.reset,
            });
        }
    }
    rows
}

fn external_default(machine: &RewardMachine) -> f64 {
    match machine {
        RewardMachine::Lexicographic(m) => m.rho.default,
        RewardMachine::Reset(_) => 0.0,
    }
}
