//! Shared fixtures for the throughput benchmarks.

use omega_avg_rl::experiment::{build_machine, resolve_benchmark, MachineKind, Params};
use omega_avg_rl::{Benchmark, RewardMachine};

pub struct Fixture {
    pub bench: Benchmark,
    pub params: Params,
    pub machine: RewardMachine,
}

/// Benchmark `name` with the machine `kind` at default parameters.
pub fn fixture(name: &str, kind: MachineKind) -> Fixture {
    let bench = resolve_benchmark(name).expect("known benchmark");
    let params = match kind {
        MachineKind::Lexicographic => Params { machine: kind, c: 100.0, ..Params::default() },
        _ => Params { machine: kind, ..Params::default() },
    };
    let machine = build_machine(&bench.automaton(), bench.rewards.as_ref(), &params, params.beta).expect("valid machine");
    Fixture { bench, params, machine }
}

pub const NAMES: [&str; 3] = ["infmem", "grid(3,3,0.2)-gfab", "grid4x4-tour"];
