use super::{AutomatonError, BuchiAutomaton};
use crate::alphabet::Letter;
use crate::graph;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecClass {
    pub absolute_liveness: bool,
    pub stable: bool,
    pub fairness: bool,
}

/// States from which some accepting transition is reachable.
pub fn coaccessible_states(aut: &BuchiAutomaton) -> Vec<bool> {
    let sources: Vec<usize> = aut.transitions().filter(|t| t.3).map(|t| t.0).collect();
    graph::backward_reachable(&aut.state_graph(), sources)
}

/// `L(p) ⊆ L(q)` for a deterministic automaton.
///
/// Explores pairs `(x, y)` where `y` may be a rejecting sink standing for a
/// missing transition on the `q` side. Containment fails iff some reachable
/// cycle avoids accepting `q`-edges but uses an accepting `p`-edge.
pub fn det_language_containment(aut: &BuchiAutomaton, p: usize, q: usize) -> Result<bool, AutomatonError> {
    if !aut.is_deterministic() {
        return Err(AutomatonError::NotDeterministic);
    }
    let n = aut.num_states();
    if p >= n || q >= n {
        return Err(AutomatonError::Invalid(format!("state pair ({p}, {q}) out of range")));
    }
    if p == q {
        return Ok(true);
    }
    let sink = n;
    let id = |x: usize, y: usize| x * (n + 1) + y;
    let nodes = n * (n + 1);
    // (target, p accepting, q accepting)
    let mut edges: Vec<Vec<(usize, bool, bool)>> = vec![Vec::new(); nodes];
    for x in 0..n {
        for y in 0..=n {
            for l in 0..aut.alphabet_size() {
                let letter = Letter(l as u32);
                let Some(ex) = aut.successors(x, letter).first() else { continue };
                let (ty, qa) = match (y < sink).then(|| aut.successors(y, letter).first()).flatten() {
                    Some(ey) => (ey.to, ey.accepting),
                    None => (sink, false),
                };
                edges[id(x, y)].push((id(ex.to, ty), ex.accepting, qa));
            }
        }
    }
    let full: Vec<Vec<usize>> = edges.iter().map(|es| es.iter().map(|e| e.0).collect()).collect();
    let reach = graph::forward_reachable(&full, [id(p, q)]);
    let quiet: Vec<Vec<usize>> = edges.iter().map(|es| es.iter().filter(|e| !e.2).map(|e| e.0).collect()).collect();
    let (_, comp) = graph::scc(&quiet, &reach);
    for v in 0..nodes {
        if !reach[v] {
            continue;
        }
        if edges[v].iter().any(|&(w, pa, qa)| pa && !qa && reach[w] && comp[w] == comp[v]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Absolute liveness, stability and fairness of a deterministic automaton.
///
/// Absolute liveness additionally requires a non-empty language.
pub fn classify_specification(aut: &BuchiAutomaton) -> Result<SpecClass, AutomatonError> {
    if !aut.is_deterministic() {
        return Err(AutomatonError::NotDeterministic);
    }
    let reach = aut.reachable();
    let init = aut.initial();
    let mut contains_all = true;
    let mut contained_in = true;
    for s in (0..aut.num_states()).filter(|&s| reach[s]) {
        contains_all &= det_language_containment(aut, init, s)?;
        contained_in &= det_language_containment(aut, s, init)?;
    }
    let absolute_liveness = contains_all && !is_empty(aut);
    Ok(SpecClass { absolute_liveness, stable: contained_in, fairness: absolute_liveness && contained_in })
}

/// No accepting transition lies on a reachable cycle.
fn is_empty(aut: &BuchiAutomaton) -> bool {
    let g = aut.state_graph();
    let reach = aut.reachable();
    let (_, comp) = graph::scc(&g, &reach);
    !aut.transitions().any(|(q, _, to, acc)| acc && reach[q] && comp[q] == comp[to])
}
