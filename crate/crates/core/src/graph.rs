//! Small directed-graph toolkit over adjacency lists.

use std::collections::VecDeque;

/// Strongly connected components of the subgraph induced by `alive`.
///
/// Iterative Tarjan; components come out in reverse topological order
/// (sinks first). Returns `(components, component_of)` where dead nodes map
/// to `usize::MAX`.
pub fn scc(adj: &[Vec<usize>], alive: &[bool]) -> (Vec<Vec<usize>>, Vec<usize>) {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0;
    // (node, next edge position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if !alive[root] || index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if !alive[w] {
                    continue;
                }
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let id = comps.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp_of[w] = id;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    (comps, comp_of)
}

/// Nodes reachable from `sources` (inclusive).
pub fn forward_reachable(adj: &[Vec<usize>], sources: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    for s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

pub fn reverse(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (v, succ) in adj.iter().enumerate() {
        for &w in succ {
            rev[w].push(v);
        }
    }
    rev
}

/// Nodes from which some node of `targets` is reachable (inclusive).
pub fn backward_reachable(adj: &[Vec<usize>], targets: impl IntoIterator<Item = usize>) -> Vec<bool> {
    forward_reachable(&reverse(adj), targets)
}

/// True iff the whole graph is one strongly connected component.
pub fn is_strongly_connected(adj: &[Vec<usize>]) -> bool {
    if adj.is_empty() {
        return true;
    }
    forward_reachable(adj, [0]).iter().all(|&b| b) && backward_reachable(adj, [0]).iter().all(|&b| b)
}
