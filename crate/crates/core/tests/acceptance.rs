//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use omega_avg_rl::automaton::{classify_specification, det_language_containment, BuchiAutomaton};
use omega_avg_rl::benchmarks::{self, bundled, decoy_ring, infmem, infmem_reward, two_state_fga};
use omega_avg_rl::experiment::{
    resolve_benchmark, run_experiment, run_sweep, write_csv, MachineKind, Method, Params, SweepRanges, SweepSpec,
};
use omega_avg_rl::machine::{build_lexicographic_machine, build_reset_machine};
use omega_avg_rl::mdp::{ChainEdge, MarkovChain, Mdp};
use omega_avg_rl::product::{build_explicit_product, Component, ExplicitProduct, DEFAULT_PRODUCT_CAP};
use omega_avg_rl::verify::{
    chain_gain, enumerate_optimal_policies, optimal_satisfaction_probability, policy_external_gain,
    policy_satisfaction_probability, BRUTE_FORCE_LIMIT,
};
use omega_avg_rl::{rng, Letter};
use rand::Rng;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

/// Exact evaluation up to solver round-off.
fn is_one(v: f64) -> bool {
    (v - 1.0).abs() < 1e-9
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Transitive closure by repeated squaring of the adjacency relation.
fn strongly_connected_by_closure(mdp: &Mdp) -> bool {
    let n = mdp.num_states();
    let mut r = vec![vec![false; n]; n];
    for s in 0..n {
        r[s][s] = true;
        for c in mdp.choices(s) {
            for o in c.outcomes.iter().filter(|o| o.prob > 0.0) {
                r[s][o.to] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r.iter().all(|row| row.iter().all(|&b| b))
}

fn a1() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    for b in bundled() {
        let aut = b.automaton();
        let reset = build_reset_machine(aut.clone(), -1.0, false).unwrap();
        let rho = b.rewards.clone().unwrap_or_default();
        let c1 = rho.min() - rho.max() - 1.0;
        let lex = build_lexicographic_machine(aut.clone(), rho, 0.05, c1, -1.0, None).unwrap();
        for m in [&reset, &lex] {
            let p = build_explicit_product(&b.mdp, Component::Machine(m), DEFAULT_PRODUCT_CAP).unwrap();
            if !strongly_connected_by_closure(&p.mdp) || !omega_avg_rl::is_communicating(&p.mdp) {
                return outcome(false, format!("{} product is not communicating", b.name));
            }
            checked += 1;
        }
    }
    let mc = benchmarks::multichain_example();
    let aut = omega_avg_rl::parse_automaton(benchmarks::FG_A_OR_FG_NOT_A).unwrap();
    let plain = build_explicit_product(&mc, Component::Automaton(&aut), DEFAULT_PRODUCT_CAP).unwrap();
    let plain_ok = !strongly_connected_by_closure(&plain.mdp) && !omega_avg_rl::is_communicating(&plain.mdp);
    let elapsed = started.elapsed();
    outcome(
        plain_ok && checked >= 12 && elapsed < Duration::from_secs(5),
        format!("{checked} machine products communicating, plain multichain product not: {plain_ok}, {elapsed:.2?}"),
    )
}

fn a2() -> Outcome {
    let started = Instant::now();
    let mut values = Vec::new();
    for b in bundled() {
        let v = optimal_satisfaction_probability(&b.mdp, &b.automaton(), DEFAULT_PRODUCT_CAP, 1e-10).unwrap().value;
        if v.abs() > 1e-6 && (v - 1.0).abs() > 1e-6 {
            return outcome(false, format!("{}: {v}", b.name));
        }
        values.push(format!("{}={}", b.name, v.round()));
    }
    let elapsed = started.elapsed();
    outcome(elapsed < Duration::from_secs(10), format!("{} ({elapsed:.2?})", values.join(" ")))
}

fn a3() -> Outcome {
    let started = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["two-state-fga", "multichain-example", "grid(4,4,0.1)"] {
        let b = resolve_benchmark(name).unwrap();
        let p = Params { steps: 1_000_000, ..Params::default() };
        let wins = (0..5).map(|seed| run_experiment(&b, Method::DiffQ, &p, seed).unwrap().row.sat_prob).filter(|&v| is_one(v)).count();
        pass &= wins >= 4;
        parts.push(format!("{name} {wins}/5"));
    }
    let elapsed = started.elapsed();
    outcome(pass && elapsed < Duration::from_secs(600), format!("{} ({elapsed:.2?})", parts.join(", ")))
}

fn reset_product(mdp: &Mdp, aut: &BuchiAutomaton, c: f64) -> ExplicitProduct {
    let m = build_reset_machine(aut.clone(), c, false).unwrap();
    build_explicit_product(mdp, Component::Machine(&m), DEFAULT_PRODUCT_CAP).unwrap()
}

fn a4() -> Outcome {
    let mdp = two_state_fga();
    let aut = omega_avg_rl::parse_automaton(benchmarks::FG_A).unwrap();
    let n = reset_product(&mdp, &aut, -1.0).num_states();
    let c = -(n as f64 + 1.0);
    let product = reset_product(&mdp, &aut, c);
    let e = enumerate_optimal_policies(&product.mdp, BRUTE_FORCE_LIMIT, 1e-9).unwrap();
    let all_sat = e
        .optimal
        .iter()
        .all(|pol| (policy_satisfaction_probability(&product, pol, 1e-12).unwrap().value - 1.0).abs() < 1e-9);

    let decoy = omega_avg_rl::parse_automaton(benchmarks::DECOY).unwrap();
    let dp = reset_product(&decoy_ring(), &decoy, -1e-3);
    let de = enumerate_optimal_policies(&dp.mdp, BRUTE_FORCE_LIMIT, 1e-9).unwrap();
    let worst = de
        .optimal
        .iter()
        .map(|pol| policy_satisfaction_probability(&dp, pol, 1e-12).unwrap().value)
        .fold(1.0, f64::min);
    outcome(
        n <= 12 && all_sat && worst < 1.0,
        format!(
            "two-state-fga: {n} states, c={c}, {} of {} policies optimal, all sat 1: {all_sat}; decoy at c=-1e-3: gain {:.6}, optimal policy with sat {worst}",
            e.optimal.len(),
            e.evaluated,
            de.best_gain
        ),
    )
}

/// Chain of the policy on infmem that loops `k` times on the rewarded
/// self-loop, then visits `a` and comes back.
fn k_cycle_chain(k: usize) -> MarkovChain {
    let mdp = infmem();
    let rho = infmem_reward();
    let mdp_state = |pos: usize| if pos == 0 { 0 } else { 1 };
    let rows = (0..k + 2)
        .map(|pos| {
            let next = (pos + 1) % (k + 2);
            let (s, t) = (mdp_state(pos), mdp_state(next));
            assert!(mdp.choices(s).iter().any(|c| c.outcomes.iter().any(|o| o.to == t && o.prob == 1.0)));
            vec![ChainEdge { to: next, prob: 1.0, reward: rho.get(s, t), accepting: s == 0, reset: false }]
        })
        .collect();
    MarkovChain { rows }
}

fn a5() -> Outcome {
    let started = Instant::now();
    let b = resolve_benchmark("infmem").unwrap();
    let p = Params { machine: MachineKind::Lexicographic, beta: 0.05, c: 100.0, steps: 2_000_000, ..Params::default() };
    let mut wins = 0;
    let mut gains = Vec::new();
    for seed in 0..5 {
        let e = run_experiment(&b, Method::DiffQ, &p, seed).unwrap();
        let g = e.row.avg_reward.unwrap();
        gains.push(format!("{g:.6}"));
        wins += (is_one(e.row.sat_prob) && g >= 0.99) as usize;
    }
    let formula = [1usize, 2, 10].iter().all(|&k| {
        let (g, _) = chain_gain(&k_cycle_chain(k), 0, 1e-12);
        (g - k as f64 / (k as f64 + 2.0)).abs() < 1e-9
    });
    // exact optimum of the product at beta = 0.01 with a penalty past the threshold
    let rho = infmem_reward();
    let beta = 0.01;
    let c1 = rho.min() - rho.max() - 1.0;
    let c2 = 10.0 * (c1 / beta - (1.0 - beta) / beta * rho.max());
    let m = build_lexicographic_machine(b.automaton(), rho.clone(), beta, c1, c2, None).unwrap();
    let product = build_explicit_product(&b.mdp, Component::Machine(&m), DEFAULT_PRODUCT_CAP).unwrap();
    let e = enumerate_optimal_policies(&product.mdp, BRUTE_FORCE_LIMIT, 1e-9).unwrap();
    let mut worst_gain = f64::INFINITY;
    let mut all_sat = true;
    for pol in &e.optimal {
        let v = policy_satisfaction_probability(&product, pol, 1e-12).unwrap().value;
        all_sat &= is_one(v);
        worst_gain = worst_gain.min(policy_external_gain(&product, pol, &rho, 1e-12).unwrap().value);
    }
    outcome(
        wins >= 4 && formula && all_sat && worst_gain >= 0.95,
        format!(
            "learned {wins}/5 (gains {}), k/(k+2) formula: {formula}, optimum at beta=0.01: sat 1 {all_sat}, gain {worst_gain:.4} ({:.2?})",
            gains.join(" "),
            started.elapsed()
        ),
    )
}

fn automaton(aps: &[&str], n: usize, edges: &[(usize, u32, usize, bool)]) -> BuchiAutomaton {
    BuchiAutomaton::new(
        aps.iter().map(|s| s.to_string()).collect(),
        n,
        0,
        edges.iter().map(|&(q, l, t, a)| (q, Letter(l), t, a)),
    )
    .unwrap()
}

/// Pairs of states, `None` standing for a missing transition.
type Pair = (Option<usize>, Option<usize>);

fn advance(aut: &BuchiAutomaton, x: Option<usize>, l: u32) -> (Option<usize>, bool) {
    match x.and_then(|x| aut.successors(x, Letter(l)).first()) {
        Some(e) => (Some(e.to), e.accepting),
        None => (None, false),
    }
}

/// Some lasso `v^ω` with `|v| <= max_len` read from `pair` is accepted from
/// the first state and rejected from the second.
fn bad_cycle_from(aut: &BuchiAutomaton, pair: Pair, letters: u32, max_len: u32) -> bool {
    for len in 1..=max_len {
        for code in 0..letters.pow(len) {
            let word: Vec<u32> = (0..len).map(|i| code / letters.pow(i) % letters).collect();
            let mut seen: Vec<Pair> = vec![pair];
            let mut marks: Vec<(bool, bool)> = Vec::new();
            let mut cur = pair;
            loop {
                let (mut acc_p, mut acc_q) = (false, false);
                for &l in &word {
                    let (x, ap) = advance(aut, cur.0, l);
                    let (y, aq) = advance(aut, cur.1, l);
                    acc_p |= ap;
                    acc_q |= aq;
                    cur = (x, y);
                }
                marks.push((acc_p, acc_q));
                if cur.0.is_none() {
                    break;
                }
                if let Some(i) = seen.iter().position(|&s| s == cur) {
                    let periodic = &marks[i..];
                    if periodic.iter().any(|m| m.0) && !periodic.iter().any(|m| m.1) {
                        return true;
                    }
                    break;
                }
                seen.push(cur);
            }
        }
    }
    false
}

fn lasso_contains(aut: &BuchiAutomaton, p: usize, q: usize, letters: u32, bad: &dyn Fn(Pair) -> bool) -> bool {
    let mut seen = vec![(Some(p), Some(q))];
    let mut i = 0;
    while i < seen.len() {
        let cur = seen[i];
        i += 1;
        if bad(cur) {
            return false;
        }
        for l in 0..letters {
            let next = (advance(aut, cur.0, l).0, advance(aut, cur.1, l).0);
            if next.0.is_some() && !seen.contains(&next) {
                seen.push(next);
            }
        }
    }
    true
}

fn a6() -> Outcome {
    let f_a = automaton(&["a"], 2, &[(0, 0, 0, false), (0, 1, 1, false), (1, 0, 1, true), (1, 1, 1, true)]);
    let mut a_or_fb = vec![];
    let mut ga_or_gfb = vec![];
    for l in 0..4u32 {
        let (a, b) = (l & 1 == 1, l & 2 == 2);
        a_or_fb.push((0, l, if a || b { 1 } else { 2 }, false));
        a_or_fb.push((1, l, 1, true));
        a_or_fb.push((2, l, if b { 1 } else { 2 }, false));
        ga_or_gfb.push((0, l, if a { 0 } else { 1 }, a || b));
        ga_or_gfb.push((1, l, 1, b));
    }
    let gf_a = automaton(&["a"], 1, &[(0, 0, 0, false), (0, 1, 0, true)]);
    let c_fa = classify_specification(&f_a).unwrap();
    let c_aofb = classify_specification(&automaton(&["a", "b"], 3, &a_or_fb)).unwrap();
    let c_gfa = classify_specification(&gf_a).unwrap();
    let c_gagfb = classify_specification(&automaton(&["a", "b"], 2, &ga_or_gfb)).unwrap();
    let classes = c_fa.absolute_liveness && !c_fa.stable && !c_aofb.absolute_liveness && c_gfa.fairness && c_gagfb.stable;

    let mut rng = rng::stream(6, rng::SAMPLING_STREAM);
    let mut mismatches = 0;
    let mut pairs = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let mut edges = Vec::new();
        for q in 0..n {
            for l in 0..2u32 {
                if rng.gen_bool(0.85) {
                    edges.push((q, l, rng.gen_range(0..n), rng.gen_bool(0.3)));
                }
            }
        }
        let aut = automaton(&["a"], n, &edges);
        let mut bad = std::collections::HashMap::new();
        for x in 0..n {
            for y in (0..n).map(Some).chain([None]) {
                bad.insert((Some(x), y), bad_cycle_from(&aut, (Some(x), y), 2, 10));
            }
        }
        for p in 0..n {
            for q in 0..n {
                let oracle = lasso_contains(&aut, p, q, 2, &|s| bad[&s]);
                pairs += 1;
                if oracle != det_language_containment(&aut, p, q).unwrap() {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        classes && mismatches == 0,
        format!("F a {c_fa:?}, a|F b AL={}, GF a fairness={}, G a|GF b stable={}; containment agrees with lasso oracle on {}/{pairs} pairs of 100 automata",
            c_aofb.absolute_liveness, c_gfa.fairness, c_gagfb.stable, pairs - mismatches),
    )
}

fn a7() -> Outcome {
    let started = Instant::now();
    let mut maxima = Vec::new();
    for method in Method::ALL {
        let spec = SweepSpec {
            benchmark: "multichain-example".into(),
            method,
            ranges: SweepRanges::default(),
            samples: 50,
            master_seed: 2024,
            base: Params { steps: 1_000_000, ..Params::default() },
        };
        let rows = run_sweep(&spec, omega_avg_rl::experiment::threads_from_env()).unwrap();
        let best = rows.iter().map(|r| r.sat_prob).fold(0.0, f64::max);
        let ones = rows.iter().filter(|r| is_one(r.sat_prob)).count();
        maxima.push((method, best, ones));
    }
    let pass = is_one(maxima[0].1) && maxima[1].1 < 1e-9 && maxima[2].1 < 1e-9;
    let elapsed = started.elapsed();
    let text: Vec<String> = maxima.iter().map(|(m, b, o)| format!("{m} max {b} ({o}/50 at 1)")).collect();
    outcome(pass && elapsed < Duration::from_secs(1800), format!("{} ({elapsed:.2?})", text.join(", ")))
}

fn a8() -> Outcome {
    let json = |name: &str, p: &Params| {
        let b = resolve_benchmark(name).unwrap();
        serde_json::to_string(&run_experiment(&b, Method::DiffQ, p, 17).unwrap().without_wall_time()).unwrap()
    };
    let reset = Params { steps: 100_000, ..Params::default() };
    let lex = Params { machine: MachineKind::Lexicographic, c: 100.0, steps: 100_000, ..Params::default() };
    let same_json = json("grid(4,4,0.1)", &reset) == json("grid(4,4,0.1)", &reset) && json("infmem", &lex) == json("infmem", &lex);
    let csv = |method: Method, threads: usize| {
        let spec = SweepSpec {
            benchmark: "multichain-example".into(),
            method,
            ranges: SweepRanges::default(),
            samples: 8,
            master_seed: 99,
            base: Params { steps: 50_000, ..Params::default() },
        };
        let mut out = Vec::new();
        write_csv(&mut out, &run_sweep(&spec, Some(threads)).unwrap(), Some(99), true).unwrap();
        out
    };
    let same_csv = Method::ALL.iter().all(|&m| csv(m, 1) == csv(m, 4));
    outcome(same_json && same_csv, format!("result JSON identical: {same_json}, sweep CSV identical across 1 and 4 threads: {same_csv}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] =
        [("A1", a1), ("A2", a2), ("A3", a3), ("A4", a4), ("A5", a5), ("A6", a6), ("A7", a7), ("A8", a8)];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{name} {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
