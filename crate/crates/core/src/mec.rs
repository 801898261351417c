//! End components and the communicating / weakly communicating tests.

use crate::graph;
use crate::mdp::Mdp;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EndComponent {
    /// Sorted member states.
    pub states: Vec<usize>,
    /// Retained local actions, parallel to `states`.
    pub actions: Vec<Vec<usize>>,
}

impl EndComponent {
    pub fn contains(&self, s: usize) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    pub fn retained(&self, s: usize) -> &[usize] {
        match self.states.binary_search(&s) {
            Ok(i) => &self.actions[i],
            Err(_) => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MecDecomposition {
    pub components: Vec<EndComponent>,
    pub membership: Vec<Option<usize>>,
}

impl MecDecomposition {
    /// States that belong to some end component.
    pub fn covered(&self) -> Vec<bool> {
        self.membership.iter().map(Option::is_some).collect()
    }
}

/// Standard fixpoint: repeatedly split into SCCs over the surviving actions,
/// drop actions that can leave their SCC, drop states without actions.
pub fn mec_decomposition(mdp: &Mdp) -> MecDecomposition {
    let n = mdp.num_states();
    let mut alive_state = vec![true; n];
    let mut alive_action: Vec<Vec<bool>> = (0..n).map(|s| vec![true; mdp.num_actions(s)]).collect();

    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                if !alive_state[s] {
                    return Vec::new();
                }
                let mut v: Vec<usize> = mdp
                    .choices(s)
                    .iter()
                    .zip(&alive_action[s])
                    .filter(|(_, &alive)| alive)
                    .flat_map(|(c, _)| c.outcomes.iter().filter(|o| o.prob > 0.0).map(|o| o.to))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let (_, comp_of) = graph::scc(&adj, &alive_state);

        let mut changed = false;
        for s in 0..n {
            if !alive_state[s] {
                continue;
            }
            for (a, c) in mdp.choices(s).iter().enumerate() {
                if alive_action[s][a]
                    && c.outcomes
                        .iter()
                        .any(|o| o.prob > 0.0 && (!alive_state[o.to] || comp_of[o.to] != comp_of[s]))
                {
                    alive_action[s][a] = false;
                    changed = true;
                }
            }
            if !alive_action[s].iter().any(|&b| b) {
                alive_state[s] = false;
                changed = true;
            }
        }
        if !changed {
            let mut components: Vec<EndComponent> = Vec::new();
            let mut by_comp: std::collections::BTreeMap<usize, usize> = Default::default();
            let mut membership = vec![None; n];
            for s in 0..n {
                if !alive_state[s] {
                    continue;
                }
                let idx = *by_comp.entry(comp_of[s]).or_insert_with(|| {
                    components.push(EndComponent { states: Vec::new(), actions: Vec::new() });
                    components.len() - 1
                });
                components[idx].states.push(s);
                components[idx]
                    .actions
                    .push((0..mdp.num_actions(s)).filter(|&a| alive_action[s][a]).collect());
                membership[s] = Some(idx);
            }
            return MecDecomposition { components, membership };
        }
    }
}

/// The underlying graph is strongly connected (one MEC spanning everything).
pub fn is_communicating(mdp: &Mdp) -> bool {
    graph::is_strongly_connected(&mdp.successor_graph())
}

/// All states lying in some end component are mutually reachable.
///
/// States outside every end component are transient under every stationary
/// policy, so this pairwise reachability check is an algorithmic reading of
/// the usual "one closed communicating class plus transient states" definition.
pub fn is_weakly_communicating(mdp: &Mdp) -> bool {
    let dec = mec_decomposition(mdp);
    let recurrent: Vec<usize> = (0..mdp.num_states()).filter(|&s| dec.membership[s].is_some()).collect();
    let Some(&first) = recurrent.first() else {
        return true;
    };
    let adj = mdp.successor_graph();
    let fwd = graph::forward_reachable(&adj, [first]);
    let bwd = graph::backward_reachable(&adj, [first]);
    recurrent.iter().all(|&s| fwd[s] && bwd[s])
}
