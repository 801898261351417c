//! Products of an [`Mdp`] with a Büchi automaton or a reward machine.
//!
//! The same successor function drives the lazily explored [`ProductEnv`]
//! used for learning and the BFS in [`build_explicit_product`].

use crate::alphabet::Letter;
use crate::automaton::BuchiAutomaton;
use crate::machine::{Epsilon, MachineError, MachineState, RewardMachine};
use crate::mdp::{Mdp, MdpBuilder, Outcome};
use crate::rng::{sample_index, Rng};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

pub const DEFAULT_PRODUCT_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProductError {
    #[error("product exceeds {cap} states")]
    ProductTooLarge { cap: usize },
    #[error("action {action:?} is not available in {state:?}")]
    IllegalAction { state: ProductState, action: ProductAction },
    #[error("product state {0:?} has no available action")]
    DeadEnd(ProductState),
    #[error("automaton and model disagree on propositions: {0}")]
    ApMismatch(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductState {
    pub mdp_state: usize,
    pub machine_state: MachineState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductAction {
    /// MDP action (local index) together with the automaton successor.
    Move { action: usize, successor: usize },
    Epsilon(Epsilon),
    /// Self-loop offered where a plain automaton product has no move.
    Halt,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: ProductState,
    pub reward: f64,
    pub accepting_edge: bool,
    pub reset: bool,
}

/// What the MDP is composed with.
#[derive(Clone, Copy, Debug)]
pub enum Component<'a> {
    Automaton(&'a BuchiAutomaton),
    Machine(&'a RewardMachine),
}

/// How an outcome's probability depends on the flip probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flip {
    None,
    Stay,
    Flip,
}

#[derive(Clone, Copy, Debug)]
struct RawOutcome {
    next: ProductState,
    mdp_prob: f64,
    flip: Flip,
    reward: f64,
    accepting: bool,
    reset: bool,
}

impl<'a> Component<'a> {
    pub fn automaton(&self) -> &'a BuchiAutomaton {
        match self {
            Component::Automaton(a) => a,
            Component::Machine(m) => m.automaton(),
        }
    }

    fn initial(&self, mdp: &Mdp) -> ProductState {
        let machine_state = match self {
            Component::Automaton(a) => MachineState { automaton_state: a.initial(), bit: 0 },
            Component::Machine(m) => m.initial(),
        };
        ProductState { mdp_state: mdp.initial(), machine_state }
    }

    fn beta(&self, step: u64) -> f64 {
        match self {
            Component::Machine(RewardMachine::Lexicographic(m)) => crate::machine::schedule_beta(m, step),
            _ => 0.0,
        }
    }

    fn actions(&self, mdp: &Mdp, labels: &[Letter], x: ProductState) -> Result<Vec<ProductAction>, ProductError> {
        let letter = labels[x.mdp_state];
        let succ = self.automaton().successors(x.machine_state.automaton_state, letter);
        let mut acts = Vec::with_capacity(mdp.num_actions(x.mdp_state) * succ.len() + 1);
        for a in 0..mdp.num_actions(x.mdp_state) {
            for e in succ {
                acts.push(ProductAction::Move { action: a, successor: e.to });
            }
        }
        match self {
            Component::Automaton(_) => {
                if acts.is_empty() {
                    acts.push(ProductAction::Halt);
                }
            }
            Component::Machine(m) => {
                acts.extend(m.epsilons(x.machine_state).into_iter().map(ProductAction::Epsilon));
                if acts.is_empty() {
                    return Err(ProductError::DeadEnd(x));
                }
            }
        }
        Ok(acts)
    }

    /// Outcomes in canonical order: MDP successor major, bit branch minor.
    fn outcomes(
        &self,
        mdp: &Mdp,
        labels: &[Letter],
        x: ProductState,
        action: ProductAction,
    ) -> Result<Vec<RawOutcome>, ProductError> {
        let s = x.mdp_state;
        let u = x.machine_state;
        match action {
            ProductAction::Halt => Ok(vec![RawOutcome {
                next: x,
                mdp_prob: 1.0,
                flip: Flip::None,
                reward: 0.0,
                accepting: false,
                reset: false,
            }]),
            ProductAction::Epsilon(kind) => {
                let Component::Machine(m) = self else {
                    return Err(ProductError::IllegalAction { state: x, action });
                };
                let o = m.epsilon_outcome(u, kind)?;
                Ok(vec![RawOutcome {
                    next: ProductState { mdp_state: s, machine_state: o.next },
                    mdp_prob: 1.0,
                    flip: Flip::None,
                    reward: o.reward,
                    accepting: false,
                    reset: o.reset,
                }])
            }
            ProductAction::Move { action: a, successor } => {
                let letter = labels[s];
                let choice = mdp.choice(s, a).map_err(|_| ProductError::IllegalAction { state: x, action })?;
                let mut out = Vec::with_capacity(choice.outcomes.len() * 2);
                match self {
                    Component::Automaton(aut) => {
                        let Some(e) = aut.successors(u.automaton_state, letter).iter().find(|e| e.to == successor)
                        else {
                            return Err(ProductError::IllegalAction { state: x, action });
                        };
                        for o in &choice.outcomes {
                            out.push(RawOutcome {
                                next: ProductState {
                                    mdp_state: o.to,
                                    machine_state: MachineState { automaton_state: successor, bit: 0 },
                                },
                                mdp_prob: o.prob,
                                flip: Flip::None,
                                reward: 0.0,
                                accepting: e.accepting,
                                reset: false,
                            });
                        }
                    }
                    Component::Machine(m) => {
                        for o in &choice.outcomes {
                            let b = m.letter_outcomes(u, letter, successor, (s, o.to), 0)?;
                            let branches = b.as_slice();
                            for (k, mo) in branches.iter().enumerate() {
                                let flip = match (branches.len(), k) {
                                    (1, _) => Flip::None,
                                    (_, 0) => Flip::Stay,
                                    _ => Flip::Flip,
                                };
                                out.push(RawOutcome {
                                    next: ProductState { mdp_state: o.to, machine_state: mo.next },
                                    mdp_prob: o.prob,
                                    flip,
                                    reward: mo.reward,
                                    accepting: mo.accepting,
                                    reset: mo.reset,
                                });
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

fn prob(o: &RawOutcome, beta: f64) -> f64 {
    match o.flip {
        Flip::None => o.mdp_prob,
        Flip::Stay => o.mdp_prob * (1.0 - beta),
        Flip::Flip => o.mdp_prob * beta,
    }
}

/// Re-expresses every MDP label over the automaton's propositions, which
/// must all be declared by the model.
pub fn automaton_labels(mdp: &Mdp, aut: &BuchiAutomaton) -> Result<Vec<Letter>, ProductError> {
    let positions = aut
        .aps()
        .iter()
        .map(|ap| {
            mdp.aps()
                .iter()
                .position(|m| m == ap)
                .ok_or_else(|| ProductError::ApMismatch(format!("proposition {ap:?} is not declared by the model")))
        })
        .collect::<Result<Vec<usize>, _>>()?;
    Ok((0..mdp.num_states())
        .map(|s| {
            let l = mdp.label(s);
            positions
                .iter()
                .enumerate()
                .filter(|(_, &m)| l.holds(m))
                .fold(Letter::EMPTY, |acc, (i, _)| acc.with(i))
        })
        .collect())
}

#[derive(Clone, Copy, Debug)]
struct Cached {
    next: usize,
    raw: RawOutcome,
}

/// Lazily explored product used as a learning environment.
///
/// States are interned in discovery order; ids are stable for the lifetime
/// of the environment.
pub struct ProductEnv<'a> {
    mdp: &'a Mdp,
    component: Component<'a>,
    labels: Vec<Letter>,
    states: Vec<ProductState>,
    index: HashMap<ProductState, usize>,
    actions: Vec<Option<Vec<ProductAction>>>,
    outcomes: Vec<Vec<Option<Vec<Cached>>>>,
    step: u64,
}

impl<'a> ProductEnv<'a> {
    pub fn new(mdp: &'a Mdp, component: Component<'a>) -> Result<Self, ProductError> {
        let labels = automaton_labels(mdp, component.automaton())?;
        let mut env = ProductEnv {
            mdp,
            component,
            labels,
            states: Vec::new(),
            index: HashMap::new(),
            actions: Vec::new(),
            outcomes: Vec::new(),
            step: 0,
        };
        let init = component.initial(mdp);
        env.intern(init);
        Ok(env)
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.mdp
    }

    pub fn component(&self) -> Component<'a> {
        self.component
    }

    pub fn initial(&self) -> ProductState {
        self.states[0]
    }

    pub fn num_discovered(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, id: usize) -> ProductState {
        self.states[id]
    }

    pub fn id_of(&self, x: ProductState) -> Option<usize> {
        self.index.get(&x).copied()
    }

    /// Steps taken so far; drives the flip-probability schedule.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn intern(&mut self, x: ProductState) -> usize {
        if let Some(&id) = self.index.get(&x) {
            return id;
        }
        let id = self.states.len();
        self.states.push(x);
        self.index.insert(x, id);
        self.actions.push(None);
        self.outcomes.push(Vec::new());
        id
    }

    pub fn product_actions(&self, x: ProductState) -> Result<Vec<ProductAction>, ProductError> {
        self.component.actions(self.mdp, &self.labels, x)
    }

    /// Actions of interned state `id` (cached).
    pub fn actions_of(&mut self, id: usize) -> Result<&[ProductAction], ProductError> {
        if self.actions[id].is_none() {
            let acts = self.component.actions(self.mdp, &self.labels, self.states[id])?;
            self.outcomes[id] = vec![None; acts.len()];
            self.actions[id] = Some(acts);
        }
        Ok(self.actions[id].as_deref().unwrap())
    }

    /// Actions of `id` if they have been computed already.
    pub fn known_actions(&self, id: usize) -> Option<&[ProductAction]> {
        self.actions.get(id).and_then(|a| a.as_deref())
    }

    fn cached(&mut self, id: usize, a: usize) -> Result<&[Cached], ProductError> {
        let n = self.actions_of(id)?.len();
        if a >= n {
            let action = ProductAction::Halt;
            return Err(ProductError::IllegalAction { state: self.states[id], action });
        }
        if self.outcomes[id][a].is_none() {
            let action = self.actions[id].as_ref().unwrap()[a];
            let raw = self.component.outcomes(self.mdp, &self.labels, self.states[id], action)?;
            let list = raw.into_iter().map(|r| Cached { next: self.intern(r.next), raw: r }).collect();
            self.outcomes[id][a] = Some(list);
        }
        Ok(self.outcomes[id][a].as_deref().unwrap())
    }

    /// Samples one step from interned state `id` using local action `a`.
    pub fn step_id(&mut self, id: usize, a: usize, rng: &mut Rng) -> Result<(usize, StepOutcome), ProductError> {
        let beta = self.component.beta(self.step);
        self.step += 1;
        let list = self.cached(id, a)?;
        let k = if list.len() == 1 { 0 } else { sample_index(rng, list.iter().map(|c| prob(&c.raw, beta))) };
        let c = list[k];
        Ok((
            c.next,
            StepOutcome { next: c.raw.next, reward: c.raw.reward, accepting_edge: c.raw.accepting, reset: c.raw.reset },
        ))
    }

    /// Samples one step from `state` under `action`.
    pub fn product_step(
        &mut self,
        state: ProductState,
        action: ProductAction,
        rng: &mut Rng,
    ) -> Result<StepOutcome, ProductError> {
        let id = self.intern(state);
        let a = self
            .actions_of(id)?
            .iter()
            .position(|&b| b == action)
            .ok_or(ProductError::IllegalAction { state, action })?;
        self.step_id(id, a, rng).map(|r| r.1)
    }
}

/// A fully materialised product, annotated with rewards, accepting marks and
/// reset marks, plus the map back to product states and actions.
#[derive(Clone, Debug)]
pub struct ExplicitProduct {
    pub mdp: Mdp,
    pub states: Vec<ProductState>,
    pub actions: Vec<Vec<ProductAction>>,
    pub index: HashMap<ProductState, usize>,
}

impl ExplicitProduct {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn action_index(&self, s: usize, action: ProductAction) -> Option<usize> {
        self.actions[s].iter().position(|&a| a == action)
    }
}

fn action_name(mdp: &Mdp, s: usize, a: ProductAction) -> String {
    match a {
        ProductAction::Move { action, successor } => format!("{}/{}", mdp.action_name(s, action), successor),
        ProductAction::Epsilon(Epsilon::Reset) => "reset".into(),
        ProductAction::Epsilon(Epsilon::ResetAutomaton) => "reset-automaton".into(),
        ProductAction::Epsilon(Epsilon::ResetBit) => "reset-bit".into(),
        ProductAction::Halt => "halt".into(),
    }
}

/// Breadth-first materialisation of the reachable product.
///
/// Flip probabilities use the machine's base `β` (schedule index 0).
pub fn build_explicit_product(mdp: &Mdp, component: Component<'_>, cap: usize) -> Result<ExplicitProduct, ProductError> {
    let labels = automaton_labels(mdp, component.automaton())?;
    let beta = component.beta(0);
    let init = component.initial(mdp);
    let mut states = vec![init];
    let mut index = HashMap::from([(init, 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    let mut actions: Vec<Vec<ProductAction>> = Vec::new();
    let mut rows: Vec<Vec<(String, Vec<Outcome>)>> = Vec::new();
    while let Some(id) = queue.pop_front() {
        let x = states[id];
        let acts = component.actions(mdp, &labels, x)?;
        let mut row = Vec::with_capacity(acts.len());
        for &a in &acts {
            let mut outs = Vec::new();
            for r in component.outcomes(mdp, &labels, x, a)? {
                let p = prob(&r, beta);
                if p <= 0.0 {
                    continue;
                }
                let to = match index.get(&r.next) {
                    Some(&t) => t,
                    None => {
                        if states.len() >= cap {
                            return Err(ProductError::ProductTooLarge { cap });
                        }
                        let t = states.len();
                        states.push(r.next);
                        index.insert(r.next, t);
                        queue.push_back(t);
                        t
                    }
                };
                outs.push(Outcome { to, prob: p, reward: r.reward, accepting: r.accepting, reset: r.reset });
            }
            row.push((action_name(mdp, x.mdp_state, a), outs));
        }
        actions.push(acts);
        rows.push(row);
    }
    let n = states.len();
    let mut b = MdpBuilder::new(n, &[]);
    b.set_aps(mdp.aps().to_vec());
    b.set_labels(states.iter().map(|x| mdp.label(x.mdp_state).names(mdp.aps())).collect());
    for (s, row) in rows.into_iter().enumerate() {
        for (name, outs) in row {
            b.annotated(s, name, &outs);
        }
    }
    let product = b.build().expect("product rows inherit validated distributions");
    Ok(ExplicitProduct { mdp: product, states, actions, index })
}

/// A positional policy on product states. States without an entry fall back
/// to their lowest-index action.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductPolicy {
    pub entries: Vec<(ProductState, ProductAction)>,
}

impl ProductPolicy {
    pub fn get(&self, x: ProductState) -> Option<ProductAction> {
        self.entries.iter().find(|e| e.0 == x).map(|e| e.1)
    }

    /// Local action index per explicit state, and how many states fell back
    /// to the default.
    pub fn to_positional(&self, product: &ExplicitProduct) -> (Vec<usize>, usize) {
        let lookup: HashMap<ProductState, ProductAction> = self.entries.iter().copied().collect();
        let mut missing = 0;
        let actions = (0..product.num_states())
            .map(|s| match lookup.get(&product.states[s]).and_then(|&a| product.action_index(s, a)) {
                Some(i) => i,
                None => {
                    missing += 1;
                    0
                }
            })
            .collect();
        (actions, missing)
    }

    /// Reads a positional policy back from explicit action indices.
    pub fn from_positional(product: &ExplicitProduct, actions: &[usize]) -> Self {
        ProductPolicy {
            entries: actions.iter().enumerate().map(|(s, &a)| (product.states[s], product.actions[s][a])).collect(),
        }
    }
}
