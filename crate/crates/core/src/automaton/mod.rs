//! Büchi automata with transition-based acceptance over `2^AP`.

mod analysis;
mod hoa;

pub use analysis::{classify_specification, coaccessible_states, det_language_containment, SpecClass};
pub use hoa::parse_automaton;

use crate::alphabet::{alphabet_size, Letter, MAX_APS};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutomatonError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("invalid automaton: {0}")]
    Invalid(String),
    #[error("automaton is not deterministic")]
    NotDeterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub to: usize,
    pub accepting: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuchiAutomaton {
    aps: Vec<String>,
    initial: usize,
    /// `delta[q][letter]`, successors sorted by target.
    delta: Vec<Vec<Vec<Edge>>>,
}

impl BuchiAutomaton {
    /// Builds an automaton from explicit `(from, letter, to, accepting)` triples.
    ///
    /// Duplicate triples are merged; a triple is accepting if any copy is.
    pub fn new(
        aps: Vec<String>,
        states: usize,
        initial: usize,
        edges: impl IntoIterator<Item = (usize, Letter, usize, bool)>,
    ) -> Result<Self, AutomatonError> {
        if aps.len() > MAX_APS {
            return Err(AutomatonError::Invalid(format!("{} propositions exceed {MAX_APS}", aps.len())));
        }
        if states == 0 || initial >= states {
            return Err(AutomatonError::Invalid(format!("initial state {initial} out of range")));
        }
        let sigma = alphabet_size(aps.len());
        let mut delta = vec![vec![Vec::<Edge>::new(); sigma]; states];
        for (q, l, to, acc) in edges {
            if q >= states || to >= states {
                return Err(AutomatonError::Invalid(format!("edge {q} -> {to} out of range")));
            }
            if l.index() >= sigma {
                return Err(AutomatonError::Invalid(format!("letter {} outside alphabet", l.0)));
            }
            let cell = &mut delta[q][l.index()];
            match cell.iter_mut().find(|e| e.to == to) {
                Some(e) => e.accepting |= acc,
                None => cell.push(Edge { to, accepting: acc }),
            }
        }
        for row in &mut delta {
            for cell in row {
                cell.sort();
            }
        }
        Ok(BuchiAutomaton { aps, initial, delta })
    }

    pub fn aps(&self) -> &[String] {
        &self.aps
    }

    pub fn num_states(&self) -> usize {
        self.delta.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn alphabet_size(&self) -> usize {
        alphabet_size(self.aps.len())
    }

    pub fn successors(&self, q: usize, letter: Letter) -> &[Edge] {
        &self.delta[q][letter.index()]
    }

    pub fn is_accepting(&self, q: usize, letter: Letter, to: usize) -> bool {
        self.successors(q, letter).iter().any(|e| e.to == to && e.accepting)
    }

    pub fn is_deterministic(&self) -> bool {
        self.delta.iter().flatten().all(|cell| cell.len() <= 1)
    }

    /// All transitions as `(from, letter, to, accepting)`.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, Letter, usize, bool)> + '_ {
        self.delta.iter().enumerate().flat_map(|(q, row)| {
            row.iter()
                .enumerate()
                .flat_map(move |(l, cell)| cell.iter().map(move |e| (q, Letter(l as u32), e.to, e.accepting)))
        })
    }

    /// Graph over states ignoring letters.
    pub fn state_graph(&self) -> Vec<Vec<usize>> {
        self.delta
            .iter()
            .map(|row| {
                let mut v: Vec<usize> = row.iter().flatten().map(|e| e.to).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }

    /// States reachable from the initial state.
    pub fn reachable(&self) -> Vec<bool> {
        crate::graph::forward_reachable(&self.state_graph(), [self.initial])
    }

    /// Re-parents the automaton at a different initial state.
    pub fn with_initial(&self, initial: usize) -> Self {
        BuchiAutomaton { initial, ..self.clone() }
    }

    /// Serializes into the accepted HOA subset, one edge per letter.
    pub fn to_hoa(&self, name: &str) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "HOA: v1");
        let _ = writeln!(out, "name: \"{name}\"");
        let _ = writeln!(out, "States: {}", self.num_states());
        let _ = writeln!(out, "Start: {}", self.initial);
        let aps: Vec<String> = self.aps.iter().map(|a| format!("\"{a}\"")).collect();
        let _ = writeln!(out, "AP: {} {}", self.aps.len(), aps.join(" "));
        let _ = writeln!(out, "acc-name: Buchi");
        let _ = writeln!(out, "Acceptance: 1 Inf(0)");
        let _ = writeln!(out, "properties: trans-labels explicit-labels trans-acc");
        let _ = writeln!(out, "--BODY--");
        for (q, row) in self.delta.iter().enumerate() {
            let _ = writeln!(out, "State: {q}");
            for (l, cell) in row.iter().enumerate() {
                for e in cell {
                    let lit: Vec<String> = (0..self.aps.len())
                        .map(|i| if Letter(l as u32).holds(i) { i.to_string() } else { format!("!{i}") })
                        .collect();
                    let label = if lit.is_empty() { "t".to_string() } else { lit.join("&") };
                    let mark = if e.accepting { " {0}" } else { "" };
                    let _ = writeln!(out, "[{label}] {}{mark}", e.to);
                }
            }
        }
        let _ = writeln!(out, "--END--");
        out
    }
}
