use omega_avg_rl::benchmarks::{self, bundled, decoy_ring};
use omega_avg_rl::machine::build_reset_machine;
use omega_avg_rl::mdp::{induce_positional, MarkovChain, Mdp, MdpBuilder, Outcome};
use omega_avg_rl::product::{build_explicit_product, Component, ExplicitProduct, DEFAULT_PRODUCT_CAP};
use omega_avg_rl::verify::{
    enumerate_optimal_policies, optimal_satisfaction_probability, policy_average_reward,
    policy_average_reward_from, policy_satisfaction_probability, DEFAULT_TOLERANCE,
};
use omega_avg_rl::{parse_automaton, rng, BuchiAutomaton};
use rand::Rng;

/// Random model with `n` states, up to three actions each and rewards in
/// [-1, 1]. With `anchor` every action reaches state 0 with positive
/// probability, which makes every positional chain unichain.
fn random_mdp(r: &mut impl Rng, n: usize, anchor: bool) -> Mdp {
    let mut b = MdpBuilder::new(n, &[]);
    for s in 0..n {
        for a in 0..r.gen_range(1..=3) {
            let k = r.gen_range(1..=3);
            let mut targets: Vec<usize> = (0..k).map(|_| r.gen_range(0..n)).collect();
            if anchor {
                targets.push(0);
            }
            let weights: Vec<f64> = targets.iter().map(|_| r.gen_range(1..=4) as f64).collect();
            let total: f64 = weights.iter().sum();
            let outs: Vec<Outcome> = targets
                .iter()
                .zip(&weights)
                .map(|(&to, w)| Outcome { reward: r.gen_range(-4..=4) as f64 / 4.0, ..Outcome::plain(to, w / total) })
                .collect();
            b.annotated(s, format!("a{a}"), &outs);
        }
    }
    b.build().unwrap()
}

fn random_policy(r: &mut impl Rng, mdp: &Mdp) -> Vec<usize> {
    (0..mdp.num_states()).map(|s| r.gen_range(0..mdp.num_actions(s))).collect()
}

/// `(1/T) Σ_{t<T} E[r_t]` by pushing the state distribution forward.
fn cesaro_average(chain: &MarkovChain, start: usize, horizon: usize) -> f64 {
    let n = chain.num_states();
    let mut dist = vec![0.0; n];
    dist[start] = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for e in &chain.rows[s] {
                total += dist[s] * e.prob * e.reward;
                next[e.to] += dist[s] * e.prob;
            }
        }
        dist = next;
    }
    total / horizon as f64
}

fn closure(chain: &MarkovChain) -> Vec<Vec<bool>> {
    let n = chain.num_states();
    let mut r = vec![vec![false; n]; n];
    for s in 0..n {
        r[s][s] = true;
        for e in chain.rows[s].iter().filter(|e| e.prob > 0.0) {
            r[s][e.to] = true;
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
    r
}

/// Bounds on the satisfaction probability after `horizon` steps of
/// distribution iteration: mass already inside good bottom components, and
/// that plus the mass not yet absorbed anywhere.
fn sat_bounds(chain: &MarkovChain, start: usize, horizon: usize) -> (f64, f64) {
    let n = chain.num_states();
    let r = closure(chain);
    let bottom: Vec<bool> = (0..n).map(|s| (0..n).all(|t| !r[s][t] || r[t][s])).collect();
    let good: Vec<bool> = (0..n)
        .map(|s| {
            if !bottom[s] {
                return false;
            }
            let edges = || (0..n).filter(|&t| r[s][t] && r[t][s]).flat_map(|t| chain.rows[t].iter().filter(|e| e.prob > 0.0));
            edges().any(|e| e.accepting) && !edges().any(|e| e.reset)
        })
        .collect();
    let mut dist = vec![0.0; n];
    dist[start] = 1.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for e in &chain.rows[s] {
                next[e.to] += dist[s] * e.prob;
            }
        }
        dist = next;
    }
    let lower: f64 = (0..n).filter(|&s| good[s]).map(|s| dist[s]).sum();
    let transient: f64 = (0..n).filter(|&s| !bottom[s]).map(|s| dist[s]).sum();
    (lower, lower + transient)
}

fn reset_product(mdp: &Mdp, aut: &BuchiAutomaton, c: f64) -> ExplicitProduct {
    let m = build_reset_machine(aut.clone(), c, false).unwrap();
    build_explicit_product(mdp, Component::Machine(&m), DEFAULT_PRODUCT_CAP).unwrap()
}

#[test]
fn gain_matches_cesaro_average() {
    let mut r = rng::stream(11, rng::SAMPLING_STREAM);
    for _ in 0..60 {
        let n = r.gen_range(1..=6);
        let mdp = random_mdp(&mut r, n, false);
        let pol = random_policy(&mut r, &mdp);
        let chain = induce_positional(&mdp, &pol).unwrap();
        let exact = policy_average_reward(&mdp, &pol, DEFAULT_TOLERANCE).unwrap().value;
        let approx = cesaro_average(&chain, mdp.initial(), 200_000);
        assert!((exact - approx).abs() < 1e-3, "gain {exact} vs Cesàro {approx}");
    }
}

#[test]
fn unichain_gain_ignores_start_state() {
    let mut r = rng::stream(12, rng::SAMPLING_STREAM);
    for _ in 0..60 {
        let n = r.gen_range(2..=8);
        let mdp = random_mdp(&mut r, n, true);
        let pol = random_policy(&mut r, &mdp);
        let g0 = policy_average_reward_from(&mdp, &pol, 0, DEFAULT_TOLERANCE).unwrap().value;
        for s in 1..n {
            let g = policy_average_reward_from(&mdp, &pol, s, DEFAULT_TOLERANCE).unwrap().value;
            assert!((g - g0).abs() < 1e-9, "start {s}: {g} vs {g0}");
        }
    }
}

#[test]
fn satisfaction_matches_distribution_iteration() {
    let mut r = rng::stream(13, rng::SAMPLING_STREAM);
    let mut cases: Vec<ExplicitProduct> = Vec::new();
    for b in bundled().iter().filter(|b| b.mdp.num_states() <= 9) {
        let aut = b.automaton();
        cases.push(reset_product(&b.mdp, &aut, -1.0));
        cases.push(build_explicit_product(&b.mdp, Component::Automaton(&aut), DEFAULT_PRODUCT_CAP).unwrap());
    }
    let decoy = parse_automaton(benchmarks::DECOY).unwrap();
    cases.push(build_explicit_product(&decoy_ring(), Component::Automaton(&decoy), DEFAULT_PRODUCT_CAP).unwrap());
    for p in &cases {
        for _ in 0..40 {
            let pol = random_policy(&mut r, &p.mdp);
            let chain = induce_positional(&p.mdp, &pol).unwrap();
            let v = policy_satisfaction_probability(p, &pol, 1e-12).unwrap().value;
            let (lo, hi) = sat_bounds(&chain, p.mdp.initial(), 50_000);
            assert!(hi - lo < 1e-6, "unabsorbed {} of {}", hi - lo, p.num_states());
            assert!(v > lo - 1e-9 && v < hi + 1e-9, "sat {v} outside [{lo}, {hi}]");
        }
    }
}

/// With a reset penalty below minus the product size, every gain-optimal
/// positional policy satisfies the specification almost surely.
#[test]
fn large_penalties_make_optimal_policies_satisfying() {
    let mut checked = 0;
    for b in bundled() {
        let aut = b.automaton();
        let n = reset_product(&b.mdp, &aut, -1.0).num_states();
        let p = reset_product(&b.mdp, &aut, -(n as f64 + 1.0));
        let Ok(e) = enumerate_optimal_policies(&p.mdp, 1 << 18, 1e-9) else { continue };
        for pol in &e.optimal {
            let v = policy_satisfaction_probability(&p, pol, 1e-12).unwrap().value;
            assert!((v - 1.0).abs() < 1e-9, "{}: optimal policy with sat {v}", b.name);
        }
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn decoy_needs_a_large_penalty() {
    let aut = parse_automaton(benchmarks::DECOY).unwrap();
    let mdp = decoy_ring();
    assert!((optimal_satisfaction_probability(&mdp, &aut, DEFAULT_PRODUCT_CAP, DEFAULT_TOLERANCE).unwrap().value - 1.0).abs() < 1e-9);
    let n = reset_product(&mdp, &aut, -1.0).num_states();
    let p = reset_product(&mdp, &aut, -(n as f64 + 1.0));
    let e = enumerate_optimal_policies(&p.mdp, 1 << 20, 1e-9).unwrap();
    assert!(!e.optimal.is_empty());
    for pol in &e.optimal {
        assert!((policy_satisfaction_probability(&p, pol, 1e-12).unwrap().value - 1.0).abs() < 1e-9);
    }
    let small = reset_product(&mdp, &aut, -1e-3);
    let e = enumerate_optimal_policies(&small.mdp, 1 << 20, 1e-9).unwrap();
    assert!(e.optimal.iter().all(|pol| policy_satisfaction_probability(&small, pol, 1e-12).unwrap().value < 1e-9));
}
