//! Desk-scale benchmark models and the automata shipped with them.

use crate::automaton::{parse_automaton, BuchiAutomaton};
use crate::machine::ExternalReward;
use crate::mdp::{Mdp, MdpBuilder};
use crate::mec::is_communicating;
use thiserror::Error;

/// `FG a`, the usual two-state limit-deterministic automaton.
pub const FG_A: &str = r#"HOA: v1
name: "FG a"
States: 2
Start: 0
AP: 1 "a"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc
--BODY--
State: 0
[t] 0
[0] 1
State: 1
[0] 1 {0}
--END--
"#;

/// `FG a | FG !a`: guess which sink to settle in.
pub const FG_A_OR_FG_NOT_A: &str = r#"HOA: v1
name: "FG a | FG !a"
States: 3
Start: 0
AP: 1 "a"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc
--BODY--
State: 0
[t] 0
[0] 1
[!0] 2
State: 1
[0] 1 {0}
State: 2
[!0] 2 {0}
--END--
"#;

pub const GF_A: &str = r#"HOA: v1
name: "GF a"
States: 1
Start: 0
AP: 1 "a"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc deterministic
--BODY--
State: 0
[0] 0 {0}
[!0] 0
--END--
"#;

pub const F_GOAL: &str = r#"HOA: v1
name: "F goal"
States: 2
Start: 0
AP: 1 "goal"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc deterministic
--BODY--
State: 0
[!0] 0
[0] 1
State: 1
[t] 1 {0}
--END--
"#;

pub const GF_A_AND_GF_B: &str = r#"HOA: v1
name: "GF a & GF b"
States: 2
Start: 0
AP: 2 "a" "b"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc deterministic
--BODY--
State: 0
[0] 1
[!0] 0
State: 1
[1] 0 {0}
[!1] 1
--END--
"#;

/// Visit `a`, `b`, `c`, `d` in order, forever.
pub const TOUR: &str = r#"HOA: v1
name: "GF(a & F(b & F(c & F d)))"
States: 4
Start: 0
AP: 4 "a" "b" "c" "d"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc deterministic
--BODY--
State: 0
[0] 1
[!0] 0
State: 1
[1] 2
[!1] 1
State: 2
[2] 3
[!2] 2
State: 3
[3] 0 {0}
[!3] 3
--END--
"#;

/// `GF a & GF b` with an extra accepting edge into a dead state. The extra
/// edge does not change the language but lets a reset machine harvest
/// reward without ever satisfying the objective.
pub const DECOY: &str = r#"HOA: v1
name: "GF a & GF b with a dead accepting edge"
States: 3
Start: 0
AP: 2 "a" "b"
acc-name: Buchi
Acceptance: 1 Inf(0)
properties: trans-labels explicit-labels trans-acc
--BODY--
State: 0
[0] 1
[!0] 0
[1] 2 {0}
State: 1
[1] 0 {0}
[!1] 1
State: 2
--END--
"#;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("bad generator parameters: {0}")]
    BadParams(String),
    #[error("generated model {0} is not communicating")]
    GenerationNotCommunicating(String),
}

/// A model with its specification and, where relevant, an external reward.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: String,
    pub mdp: Mdp,
    pub automaton: String,
    pub rewards: Option<ExternalReward>,
}

impl Benchmark {
    pub fn automaton(&self) -> BuchiAutomaton {
        parse_automaton(&self.automaton).expect("bundled automaton parses")
    }
}

/// Two states, `a` only in state 1; every move between and within states is
/// its own deterministic action.
pub fn two_state_fga() -> Mdp {
    MdpBuilder::new(2, &["a"])
        .label(1, &["a"])
        .action(0, "stay", &[(0, 1.0)])
        .action(0, "go", &[(1, 1.0)])
        .action(1, "stay", &[(1, 1.0)])
        .action(1, "go", &[(0, 1.0)])
        .build()
        .expect("static model")
}

/// Same shape as [`two_state_fga`]; paired with `FG a | FG !a`.
pub fn multichain_example() -> Mdp {
    two_state_fga()
}

/// State 0 is labeled `a`, state 1 is not; the self-loop on 1 pays `+1`.
pub fn infmem() -> Mdp {
    MdpBuilder::new(2, &["a"])
        .label(0, &["a"])
        .action(0, "stay", &[(0, 1.0)])
        .action(0, "go", &[(1, 1.0)])
        .action(1, "stay", &[(1, 1.0)])
        .action(1, "go", &[(0, 1.0)])
        .build()
        .expect("static model")
}

pub fn infmem_reward() -> ExternalReward {
    ExternalReward::new([((1, 1), 1.0)])
}

/// `n x m` grid with moves N/E/S/W. A move goes the intended way with
/// probability `1 - slip`, otherwise uniformly in one of the other three
/// directions; bumping into a wall stays put. Corners carry `a`, `b`, `c`,
/// `d` clockwise from the initial cell (0, 0); the far corner also carries
/// `goal`.
pub fn grid(n: usize, m: usize, slip: f64) -> Result<Mdp, GeneratorError> {
    if n == 0 || m == 0 || n * m < 2 {
        return Err(GeneratorError::BadParams(format!("grid {n}x{m} needs at least two cells")));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(GeneratorError::BadParams(format!("slip {slip} outside [0, 1)")));
    }
    let id = |r: usize, c: usize| r * m + c;
    let mut b = MdpBuilder::new(n * m, &["a", "b", "c", "d", "goal"]);
    b = b
        .label(id(0, 0), &["a"])
        .label(id(0, m - 1), &["b"])
        .label(id(n - 1, m - 1), &["c", "goal"])
        .label(id(n - 1, 0), &["d"]);
    let dirs: [(&str, isize, isize); 4] = [("N", -1, 0), ("E", 0, 1), ("S", 1, 0), ("W", 0, -1)];
    for r in 0..n {
        for c in 0..m {
            let target = |dr: isize, dc: isize| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= n as isize || nc >= m as isize {
                    id(r, c)
                } else {
                    id(nr as usize, nc as usize)
                }
            };
            for (k, &(name, dr, dc)) in dirs.iter().enumerate() {
                let mut dist: Vec<(usize, f64)> = Vec::new();
                let mut add = |to: usize, p: f64| {
                    if p == 0.0 {
                        return;
                    }
                    match dist.iter_mut().find(|e| e.0 == to) {
                        Some(e) => e.1 += p,
                        None => dist.push((to, p)),
                    }
                };
                add(target(dr, dc), 1.0 - slip);
                for (j, &(_, odr, odc)) in dirs.iter().enumerate() {
                    if j != k {
                        add(target(odr, odc), slip / 3.0);
                    }
                }
                b = b.action(id(r, c), name, &dist);
            }
        }
    }
    let mdp = b.build().map_err(|e| GeneratorError::BadParams(e.to_string()))?;
    ensure_communicating(mdp, &format!("grid({n},{m},{slip})"))
}

/// `k` states on a directed cycle with `next` and `stay`; state 0 carries `a`.
pub fn ring(k: usize) -> Result<Mdp, GeneratorError> {
    if k == 0 {
        return Err(GeneratorError::BadParams("ring needs at least one state".into()));
    }
    let mut b = MdpBuilder::new(k, &["a"]).label(0, &["a"]);
    for s in 0..k {
        b = b.action(s, "next", &[((s + 1) % k, 1.0)]).action(s, "stay", &[(s, 1.0)]);
    }
    let mdp = b.build().map_err(|e| GeneratorError::BadParams(e.to_string()))?;
    ensure_communicating(mdp, &format!("ring({k})"))
}

/// Three states `A -> M -> B`, with `B` able to stay or return to `A`.
/// `A` carries `a`, `B` carries `b`.
pub fn decoy_ring() -> Mdp {
    MdpBuilder::new(3, &["a", "b"])
        .label(0, &["a"])
        .label(2, &["b"])
        .action(0, "go", &[(1, 1.0)])
        .action(1, "go", &[(2, 1.0)])
        .action(2, "go", &[(0, 1.0)])
        .action(2, "stay", &[(2, 1.0)])
        .build()
        .expect("static model")
}

/// A transient lead-in `0 -> 1` feeding a `k`-ring; weakly communicating
/// but not communicating.
pub fn lead_in_ring(k: usize) -> Mdp {
    let n = k + 2;
    let mut b = MdpBuilder::new(n, &["a"]).label(2, &["a"]);
    b = b.action(0, "go", &[(1, 1.0)]).action(1, "go", &[(2, 0.5), (2 + 1 % k, 0.5)]);
    for i in 0..k {
        let s = 2 + i;
        b = b.action(s, "next", &[(2 + (i + 1) % k, 1.0)]).action(s, "stay", &[(s, 1.0)]);
    }
    b.build().expect("static model")
}

fn ensure_communicating(mdp: Mdp, name: &str) -> Result<Mdp, GeneratorError> {
    if is_communicating(&mdp) {
        Ok(mdp)
    } else {
        Err(GeneratorError::GenerationNotCommunicating(name.to_string()))
    }
}

/// Parses `name` or `name(p1,p2,...)`.
fn split_id(id: &str) -> Result<(&str, Vec<&str>), GeneratorError> {
    let id = id.trim();
    match id.split_once('(') {
        None => Ok((id, Vec::new())),
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| GeneratorError::BadParams(format!("unbalanced parentheses in {id:?}")))?;
            Ok((name.trim(), inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()))
        }
    }
}

fn num<T: std::str::FromStr>(p: &[&str], i: usize, default: T) -> Result<T, GeneratorError> {
    match p.get(i) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| GeneratorError::BadParams(format!("cannot parse {s:?}"))),
    }
}

/// Builds a benchmark from a generator id such as `grid(4,4,0.1)`.
///
/// The generators are deterministic, so no seed is involved.
pub fn generate_benchmark(id: &str) -> Result<Benchmark, GeneratorError> {
    let (name, p) = split_id(id)?;
    let bench = |mdp: Mdp, aut: &str, rewards: Option<ExternalReward>| Benchmark {
        name: id.trim().to_string(),
        mdp,
        automaton: aut.to_string(),
        rewards,
    };
    match name {
        "two-state-fga" => Ok(bench(two_state_fga(), FG_A, None)),
        "multichain-example" => Ok(bench(multichain_example(), FG_A_OR_FG_NOT_A, None)),
        "infmem" => Ok(bench(infmem(), GF_A, Some(infmem_reward()))),
        "grid" => {
            let (n, m, slip) = (num(&p, 0, 4usize)?, num(&p, 1, 4usize)?, num(&p, 2, 0.0f64)?);
            Ok(bench(grid(n, m, slip)?, F_GOAL, None))
        }
        "ring" => Ok(bench(ring(num(&p, 0, 5usize)?)?, GF_A, None)),
        _ => Err(GeneratorError::UnknownGenerator(id.to_string())),
    }
}

/// Communicating benchmarks paired with absolute-liveness automata.
pub fn bundled() -> Vec<Benchmark> {
    let named = |name: &str, mdp: Mdp, aut: &str, rewards: Option<ExternalReward>| Benchmark {
        name: name.to_string(),
        mdp,
        automaton: aut.to_string(),
        rewards,
    };
    vec![
        named("two-state-fga", two_state_fga(), FG_A, None),
        named("multichain-example", multichain_example(), FG_A_OR_FG_NOT_A, None),
        named("infmem", infmem(), GF_A, Some(infmem_reward())),
        named("grid(4,4,0.1)", grid(4, 4, 0.1).expect("valid"), F_GOAL, None),
        named("grid4x4-tour", grid(4, 4, 0.0).expect("valid"), TOUR, None),
        named("grid(3,3,0.2)-gfab", grid(3, 3, 0.2).expect("valid"), GF_A_AND_GF_B, None),
        named("ring(5)", ring(5).expect("valid"), GF_A, None),
    ]
}
