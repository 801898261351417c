//! Exact evaluation on explicit models: maximal reachability, satisfaction
//! probabilities, and long-run average rewards of positional policies.

use crate::automaton::BuchiAutomaton;
use crate::graph;
use crate::machine::ExternalReward;
use crate::mdp::{induce_positional, MarkovChain, Mdp, MdpError};
use crate::mec::mec_decomposition;
use crate::product::{build_explicit_product, Component, ExplicitProduct, ProductAction, ProductError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: u64 = 10_000_000;
/// Below this many unknowns linear systems are solved directly.
pub const DIRECT_SOLVE_LIMIT: usize = 1000;
/// Brute-force enumeration refuses more candidate policies than this.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error("policy does not match model: {0}")]
    PolicyMismatch(String),
    #[error("{count} positional policies exceed the enumeration limit {limit}")]
    TooManyPolicies { count: u128, limit: u64 },
}

impl From<MdpError> for VerifyError {
    fn from(e: MdpError) -> Self {
        VerifyError::PolicyMismatch(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    OptimalSat,
    PolicySat,
    PolicyGain,
    Reach,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub value: f64,
    pub residual: f64,
    pub kind: ResultKind,
}

/// States from which `target` is reached with probability 1 under some policy.
fn prob1_max(mdp: &Mdp, target: &[bool]) -> Vec<bool> {
    let n = mdp.num_states();
    let mut u = vec![true; n];
    loop {
        let mut r = target.to_vec();
        loop {
            let mut grew = false;
            for s in 0..n {
                if r[s] || !u[s] {
                    continue;
                }
                let ok = mdp.choices(s).iter().any(|c| {
                    let live = c.outcomes.iter().filter(|o| o.prob > 0.0);
                    live.clone().all(|o| u[o.to]) && live.clone().any(|o| r[o.to])
                });
                if ok {
                    r[s] = true;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if r == u {
            return u;
        }
        u = r;
    }
}

/// Maximal reachability probability of `target` from every state.
pub fn max_reach_vector(mdp: &Mdp, target: &[bool], tol: f64) -> (Vec<f64>, f64) {
    let n = mdp.num_states();
    let sources: Vec<usize> = (0..n).filter(|&s| target[s]).collect();
    let can = graph::backward_reachable(&mdp.successor_graph(), sources);
    let one = prob1_max(mdp, target);
    let mut x: Vec<f64> = (0..n).map(|s| if one[s] { 1.0 } else { 0.0 }).collect();
    let open: Vec<usize> = (0..n).filter(|&s| can[s] && !one[s]).collect();
    let mut residual = 0.0;
    for _ in 0..MAX_ITERATIONS {
        residual = 0.0f64;
        for &s in &open {
            let best = mdp
                .choices(s)
                .iter()
                .map(|c| c.outcomes.iter().map(|o| o.prob * x[o.to]).sum::<f64>())
                .fold(0.0, f64::max);
            residual = residual.max((best - x[s]).abs());
            x[s] = best;
        }
        if residual < tol {
            break;
        }
    }
    (x, residual)
}

pub fn max_reach_probability(mdp: &Mdp, target: &[bool], tol: f64) -> VerificationResult {
    let (x, residual) = max_reach_vector(mdp, target, tol);
    VerificationResult { value: x[mdp.initial()].clamp(0.0, 1.0), residual, kind: ResultKind::Reach }
}

/// States of end components that contain an accepting, non-reset edge.
pub fn accepting_mec_states(mdp: &Mdp) -> Vec<bool> {
    let dec = mec_decomposition(mdp);
    let mut accepting = vec![false; dec.components.len()];
    for (i, c) in dec.components.iter().enumerate() {
        accepting[i] = c.states.iter().zip(&c.actions).any(|(&s, acts)| {
            acts.iter().any(|&a| mdp.choices(s)[a].outcomes.iter().any(|o| o.prob > 0.0 && o.accepting && !o.reset))
        });
    }
    (0..mdp.num_states()).map(|s| dec.membership[s].is_some_and(|c| accepting[c])).collect()
}

/// Maximal probability of satisfying the automaton's acceptance condition.
pub fn optimal_satisfaction_probability(
    mdp: &Mdp,
    aut: &BuchiAutomaton,
    cap: usize,
    tol: f64,
) -> Result<VerificationResult, VerifyError> {
    let product = build_explicit_product(mdp, Component::Automaton(aut), cap)?;
    let target = accepting_mec_states(&product.mdp);
    let r = max_reach_probability(&product.mdp, &target, tol);
    Ok(VerificationResult { kind: ResultKind::OptimalSat, ..r })
}

/// Bottom strongly connected components of a chain restricted to the part
/// reachable from `start`.
struct Bottoms {
    reach: Vec<bool>,
    components: Vec<Vec<usize>>,
    of: Vec<Option<usize>>,
}

fn bottoms(chain: &MarkovChain, start: usize) -> Bottoms {
    let g = chain.successor_graph();
    let reach = graph::forward_reachable(&g, [start]);
    let (comps, comp_of) = graph::scc(&g, &reach);
    let mut components = Vec::new();
    let mut of = vec![None; chain.num_states()];
    for comp in comps {
        let id = comp_of[comp[0]];
        if comp.iter().all(|&s| g[s].iter().all(|&t| comp_of[t] == id)) {
            for &s in &comp {
                of[s] = Some(components.len());
            }
            components.push(comp);
        }
    }
    Bottoms { reach, components, of }
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    a.lu().solve(&b)
}

/// Expected value of the bottom component eventually entered from `start`,
/// given a value per component.
fn absorb(chain: &MarkovChain, bt: &Bottoms, values: &[f64], start: usize, tol: f64) -> (f64, f64) {
    if let Some(c) = bt.of[start] {
        return (values[c], 0.0);
    }
    let transient: Vec<usize> = (0..chain.num_states()).filter(|&s| bt.reach[s] && bt.of[s].is_none()).collect();
    let mut pos = vec![usize::MAX; chain.num_states()];
    for (i, &s) in transient.iter().enumerate() {
        pos[s] = i;
    }
    let k = transient.len();
    let rhs: Vec<f64> = transient
        .iter()
        .map(|&s| chain.rows[s].iter().filter_map(|e| bt.of[e.to].map(|c| e.prob * values[c])).sum())
        .collect();
    let residual_of = |x: &[f64]| {
        transient
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let px: f64 = chain.rows[s].iter().filter(|e| pos[e.to] != usize::MAX).map(|e| e.prob * x[pos[e.to]]).sum();
                (x[i] - px - rhs[i]).abs()
            })
            .fold(0.0, f64::max)
    };
    if k < DIRECT_SOLVE_LIMIT {
        let mut a = DMatrix::<f64>::identity(k, k);
        for (i, &s) in transient.iter().enumerate() {
            for e in &chain.rows[s] {
                if pos[e.to] != usize::MAX {
                    a[(i, pos[e.to])] -= e.prob;
                }
            }
        }
        if let Some(x) = solve_dense(a, DVector::from_vec(rhs.clone())) {
            let x: Vec<f64> = x.iter().copied().collect();
            let r = residual_of(&x);
            return (x[pos[start]], r);
        }
    }
    let mut x = vec![0.0; k];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        residual = 0.0f64;
        for (i, &s) in transient.iter().enumerate() {
            let v: f64 = chain.rows[s]
                .iter()
                .filter(|e| pos[e.to] != usize::MAX)
                .map(|e| e.prob * x[pos[e.to]])
                .sum::<f64>()
                + rhs[i];
            residual = residual.max((v - x[i]).abs());
            x[i] = v;
        }
        if residual < tol {
            break;
        }
    }
    (x[pos[start]], residual)
}

/// Stationary distribution of a closed component, in the order of `comp`.
pub fn stationary_distribution(chain: &MarkovChain, comp: &[usize], tol: f64) -> (Vec<f64>, f64) {
    let k = comp.len();
    if k == 1 {
        return (vec![1.0], 0.0);
    }
    let mut pos = std::collections::HashMap::with_capacity(k);
    for (i, &s) in comp.iter().enumerate() {
        pos.insert(s, i);
    }
    let step = |pi: &[f64]| {
        let mut next = vec![0.0; k];
        for (i, &s) in comp.iter().enumerate() {
            for e in &chain.rows[s] {
                next[pos[&e.to]] += pi[i] * e.prob;
            }
        }
        next
    };
    let residual_of = |pi: &[f64]| step(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if k < DIRECT_SOLVE_LIMIT {
        // (P^T - I) pi = 0, last row replaced by sum(pi) = 1
        let mut a = DMatrix::<f64>::zeros(k, k);
        for (i, &s) in comp.iter().enumerate() {
            a[(i, i)] -= 1.0;
            for e in &chain.rows[s] {
                a[(pos[&e.to], i)] += e.prob;
            }
        }
        for j in 0..k {
            a[(k - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(k);
        b[k - 1] = 1.0;
        if let Some(pi) = solve_dense(a, b) {
            let pi: Vec<f64> = pi.iter().copied().collect();
            let r = residual_of(&pi);
            return (pi, r);
        }
    }
    // lazy chain: same stationary distribution, aperiodic
    let mut pi = vec![1.0 / k as f64; k];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let moved = step(&pi);
        let next: Vec<f64> = pi.iter().zip(&moved).map(|(a, b)| 0.5 * (a + b)).collect();
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if residual < tol {
            break;
        }
    }
    (pi, residual)
}

/// Probability that the chain from `start` ends in a bottom component that
/// sees an accepting edge and no automaton reset.
pub fn chain_satisfaction(chain: &MarkovChain, start: usize, tol: f64) -> (f64, f64) {
    let bt = bottoms(chain, start);
    let values: Vec<f64> = bt
        .components
        .iter()
        .map(|comp| {
            let edges = comp.iter().flat_map(|&s| chain.rows[s].iter().filter(|e| e.prob > 0.0));
            let acc = edges.clone().any(|e| e.accepting);
            let reset = edges.clone().any(|e| e.reset);
            if acc && !reset {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let (v, r) = absorb(chain, &bt, &values, start, tol);
    (v.clamp(0.0, 1.0), r)
}

/// Long-run ratio of two per-state expected quantities, per bottom component,
/// averaged over where the chain from `start` ends up.
pub fn chain_gain_ratio(chain: &MarkovChain, start: usize, num: &[f64], den: &[f64], tol: f64) -> (f64, f64) {
    let bt = bottoms(chain, start);
    let mut worst = 0.0f64;
    let values: Vec<f64> = bt
        .components
        .iter()
        .map(|comp| {
            let (pi, r) = stationary_distribution(chain, comp, tol);
            worst = worst.max(r);
            let n: f64 = comp.iter().zip(&pi).map(|(&s, p)| p * num[s]).sum();
            let d: f64 = comp.iter().zip(&pi).map(|(&s, p)| p * den[s]).sum();
            if d > 0.0 {
                n / d
            } else {
                0.0
            }
        })
        .collect();
    let (v, r) = absorb(chain, &bt, &values, start, tol);
    (v, worst.max(r))
}

/// Average reward of `chain` started in `start`.
pub fn chain_gain(chain: &MarkovChain, start: usize, tol: f64) -> (f64, f64) {
    let num: Vec<f64> = (0..chain.num_states()).map(|s| chain.expected_reward(s)).collect();
    let den = vec![1.0; chain.num_states()];
    chain_gain_ratio(chain, start, &num, &den, tol)
}

pub fn policy_satisfaction_probability(
    product: &ExplicitProduct,
    actions: &[usize],
    tol: f64,
) -> Result<VerificationResult, VerifyError> {
    let chain = induce_positional(&product.mdp, actions)?;
    let (value, residual) = chain_satisfaction(&chain, product.mdp.initial(), tol);
    Ok(VerificationResult { value, residual, kind: ResultKind::PolicySat })
}

/// Average of the annotated rewards under a positional policy.
pub fn policy_average_reward(mdp: &Mdp, actions: &[usize], tol: f64) -> Result<VerificationResult, VerifyError> {
    policy_average_reward_from(mdp, actions, mdp.initial(), tol)
}

pub fn policy_average_reward_from(
    mdp: &Mdp,
    actions: &[usize],
    start: usize,
    tol: f64,
) -> Result<VerificationResult, VerifyError> {
    let chain = induce_positional(mdp, actions)?;
    let (value, residual) = chain_gain(&chain, start, tol);
    Ok(VerificationResult { value, residual, kind: ResultKind::PolicyGain })
}

/// External average reward per MDP step; ε-steps cost no MDP time.
pub fn policy_external_gain(
    product: &ExplicitProduct,
    actions: &[usize],
    rho: &ExternalReward,
    tol: f64,
) -> Result<VerificationResult, VerifyError> {
    let chain = induce_positional(&product.mdp, actions)?;
    let n = product.num_states();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for s in 0..n {
        if let ProductAction::Move { .. } = product.actions[s][actions[s]] {
            den[s] = 1.0;
            let from = product.states[s].mdp_state;
            num[s] = chain.rows[s].iter().map(|e| e.prob * rho.get(from, product.states[e.to].mdp_state)).sum();
        }
    }
    let (value, residual) = chain_gain_ratio(&chain, product.mdp.initial(), &num, &den, tol);
    Ok(VerificationResult { value, residual, kind: ResultKind::PolicyGain })
}

/// Long-run frequency of accepting edges.
pub fn policy_acceptance_rate(
    product: &ExplicitProduct,
    actions: &[usize],
    tol: f64,
) -> Result<VerificationResult, VerifyError> {
    let chain = induce_positional(&product.mdp, actions)?;
    let num: Vec<f64> = chain.rows.iter().map(|r| r.iter().filter(|e| e.accepting).map(|e| e.prob).sum()).collect();
    let den = vec![1.0; product.num_states()];
    let (value, residual) = chain_gain_ratio(&chain, product.mdp.initial(), &num, &den, tol);
    Ok(VerificationResult { value, residual, kind: ResultKind::PolicyGain })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub best_gain: f64,
    /// Every positional policy whose gain is within `tol` of the best.
    pub optimal: Vec<Vec<usize>>,
    pub evaluated: u64,
}

/// Exhaustive search over positional policies for the best average reward
/// from the initial state.
pub fn enumerate_optimal_policies(mdp: &Mdp, limit: u64, tol: f64) -> Result<Enumeration, VerifyError> {
    let n = mdp.num_states();
    let count = (0..n).fold(1u128, |acc, s| acc.saturating_mul(mdp.num_actions(s) as u128));
    if count > limit as u128 {
        return Err(VerifyError::TooManyPolicies { count, limit });
    }
    let mut policy = vec![0usize; n];
    let mut gains: Vec<(f64, Vec<usize>)> = Vec::with_capacity(count as usize);
    loop {
        let g = policy_average_reward(mdp, &policy, DEFAULT_TOLERANCE)?.value;
        gains.push((g, policy.clone()));
        let mut i = 0;
        loop {
            if i == n {
                let best = gains.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
                let evaluated = gains.len() as u64;
                let optimal = gains.into_iter().filter(|g| g.0 >= best - tol).map(|g| g.1).collect();
                return Ok(Enumeration { best_gain: best, optimal, evaluated });
            }
            policy[i] += 1;
            if policy[i] < mdp.num_actions(i) {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
    }
}
