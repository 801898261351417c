//! Single training runs with exact evaluation, log-uniform hyperparameter
//! sweeps, and CSV output.

use crate::automaton::{AutomatonError, BuchiAutomaton};
use crate::benchmarks::{bundled, generate_benchmark, Benchmark, GeneratorError};
use crate::learn::{differential_q_train, discounted_q_train, BozkurtEnv, HahnEnv, LearnError, LearnerConfig, TrainResult};
use crate::machine::{build_lexicographic_machine, build_reset_machine, ExternalReward, MachineError, RewardMachine};
use crate::product::{
    build_explicit_product, Component, ExplicitProduct, ProductEnv, ProductError, ProductPolicy, DEFAULT_PRODUCT_CAP,
};
use crate::rng::{derive_seed, stream, SAMPLING_STREAM};
use crate::verify::{
    policy_average_reward, policy_external_gain, policy_satisfaction_probability, VerificationResult, VerifyError,
    DEFAULT_TOLERANCE,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use thiserror::Error;

pub const CSV_HEADER: [&str; 18] = [
    "benchmark",
    "method",
    "alpha",
    "eta",
    "epsilon",
    "c",
    "beta",
    "c1",
    "c2",
    "zeta",
    "gamma_b",
    "gamma",
    "steps",
    "seed",
    "wall_time_s",
    "sat_prob",
    "avg_reward",
    "product_states",
];

/// Flip probability used when scoring a lexicographic policy's external
/// gain: the learned positional policy evaluated as the flip probability
/// vanishes.
pub const BETA_EVAL: f64 = 1e-6;

pub const THREADS_VAR: &str = "OMEGA_AVG_RL_THREADS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("log-uniform range needs 0 < a <= b, got D({0}, {1})")]
    BadRange(f64, f64),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DiffQ,
    HahnQ,
    BozkurtQ,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DiffQ, Method::HahnQ, Method::BozkurtQ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DiffQ => "diff-q",
            Method::HahnQ => "hahn-q",
            Method::BozkurtQ => "bozkurt-q",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MachineKind {
    Reset,
    ResetHard,
    Lexicographic,
}

impl MachineKind {
    pub fn name(self) -> &'static str {
        match self {
            MachineKind::Reset => "reset",
            MachineKind::ResetHard => "reset-hard",
            MachineKind::Lexicographic => "lexicographic",
        }
    }
}

impl FromStr for MachineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [MachineKind::Reset, MachineKind::ResetHard, MachineKind::Lexicographic]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown machine {s:?}"))
    }
}

/// Everything that configures one run apart from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub machine: MachineKind,
    pub alpha: f64,
    pub eta: f64,
    pub epsilon: f64,
    /// Reset penalty of the reset machine. The lexicographic machine uses
    /// `-|c|` as its ε penalty unless `c2` is given.
    pub c: f64,
    pub beta: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub zeta: f64,
    pub gamma_b: f64,
    pub gamma: f64,
    pub steps: u64,
    pub episodic: bool,
    pub episode_length: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            machine: MachineKind::Reset,
            alpha: 0.1,
            eta: 0.1,
            epsilon: 0.1,
            c: -1.0,
            beta: 0.05,
            c1: None,
            c2: None,
            zeta: 0.99,
            gamma_b: 0.99,
            gamma: 0.99,
            steps: 1_000_000,
            episodic: false,
            episode_length: 1000,
        }
    }
}

impl Params {
    pub fn learner(&self, seed: u64) -> LearnerConfig {
        LearnerConfig {
            alpha: self.alpha,
            eta: self.eta,
            epsilon: self.epsilon,
            steps: self.steps,
            seed,
            gamma: self.gamma,
            zeta: self.zeta,
            gamma_b: self.gamma_b,
            episodic: self.episodic,
            episode_length: self.episode_length,
            ..LearnerConfig::default()
        }
    }

    pub fn c1_for(&self, rho: &ExternalReward) -> f64 {
        self.c1.unwrap_or(rho.min() - rho.max() - 1.0)
    }

    pub fn c2_value(&self) -> f64 {
        self.c2.unwrap_or(-self.c.abs())
    }
}

/// Builds the reward machine `params` asks for, with flip probability `beta`.
pub fn build_machine(
    aut: &BuchiAutomaton,
    rewards: Option<&ExternalReward>,
    params: &Params,
    beta: f64,
) -> Result<RewardMachine, MachineError> {
    match params.machine {
        MachineKind::Reset => build_reset_machine(aut.clone(), params.c, false),
        MachineKind::ResetHard => build_reset_machine(aut.clone(), params.c, true),
        MachineKind::Lexicographic => {
            let rho = rewards.cloned().unwrap_or_default();
            let c1 = params.c1_for(&rho);
            build_lexicographic_machine(aut.clone(), rho, beta, c1, params.c2_value(), None)
        }
    }
}

/// One CSV row. Parameters a method does not use are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub benchmark: String,
    pub method: Method,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub zeta: Option<f64>,
    pub gamma_b: Option<f64>,
    pub gamma: Option<f64>,
    pub steps: u64,
    pub seed: u64,
    pub wall_time_s: Option<f64>,
    pub sat_prob: f64,
    pub avg_reward: Option<f64>,
    pub product_states: usize,
}

/// A finished run: training output plus its exact evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub row: ExperimentRow,
    pub params: Params,
    pub train: TrainResult,
    pub satisfaction: VerificationResult,
    pub gain: Option<VerificationResult>,
}

impl Experiment {
    /// Drops timing so repeated runs serialise identically.
    pub fn without_wall_time(mut self) -> Self {
        self.row.wall_time_s = None;
        self.train.wall_time_s = None;
        self
    }
}

/// Looks a benchmark up among the bundled ones, then among generator ids.
pub fn resolve_benchmark(name: &str) -> Result<Benchmark, GeneratorError> {
    match bundled().into_iter().find(|b| b.name == name) {
        Some(b) => Ok(b),
        None => generate_benchmark(name),
    }
}

/// Explicit product the greedy policy of `method` is evaluated on.
pub fn evaluation_product(bench: &Benchmark, method: Method, params: &Params) -> Result<ExplicitProduct, ExperimentError> {
    let aut = bench.automaton();
    let product = match method {
        Method::DiffQ => {
            let machine = build_machine(&aut, bench.rewards.as_ref(), params, BETA_EVAL)?;
            build_explicit_product(&bench.mdp, Component::Machine(&machine), DEFAULT_PRODUCT_CAP)?
        }
        Method::HahnQ | Method::BozkurtQ => build_explicit_product(&bench.mdp, Component::Automaton(&aut), DEFAULT_PRODUCT_CAP)?,
    };
    Ok(product)
}

/// Exact satisfaction probability and, for diff-q, gain of `policy`.
///
/// Product states the policy does not cover take their first action.
pub fn evaluate_policy(
    bench: &Benchmark,
    method: Method,
    params: &Params,
    product: &ExplicitProduct,
    policy: &ProductPolicy,
) -> Result<(VerificationResult, Option<VerificationResult>), ExperimentError> {
    let (actions, _) = policy.to_positional(product);
    let satisfaction = policy_satisfaction_probability(product, &actions, DEFAULT_TOLERANCE)?;
    let gain = match (method, params.machine) {
        (Method::DiffQ, MachineKind::Lexicographic) => {
            let rho = bench.rewards.clone().unwrap_or_default();
            Some(policy_external_gain(product, &actions, &rho, DEFAULT_TOLERANCE)?)
        }
        (Method::DiffQ, _) => Some(policy_average_reward(&product.mdp, &actions, DEFAULT_TOLERANCE)?),
        _ => None,
    };
    Ok((satisfaction, gain))
}

/// Trains one learner and evaluates its greedy policy exactly.
pub fn run_experiment(bench: &Benchmark, method: Method, params: &Params, seed: u64) -> Result<Experiment, ExperimentError> {
    let aut = bench.automaton();
    let cfg = params.learner(seed);
    let mdp = &bench.mdp;
    let train = match method {
        Method::DiffQ => {
            let machine = build_machine(&aut, bench.rewards.as_ref(), params, params.beta)?;
            differential_q_train(&mut ProductEnv::new(mdp, Component::Machine(&machine))?, &cfg)?
        }
        Method::HahnQ => {
            let env = ProductEnv::new(mdp, Component::Automaton(&aut))?;
            discounted_q_train(&mut HahnEnv::new(env, params.zeta, params.episodic)?, &cfg)?
        }
        Method::BozkurtQ => {
            let env = ProductEnv::new(mdp, Component::Automaton(&aut))?;
            discounted_q_train(&mut BozkurtEnv::new(env, params.gamma_b, params.gamma)?, &cfg)?
        }
    };
    let product = evaluation_product(bench, method, params)?;
    let (satisfaction, gain) = evaluate_policy(bench, method, params, &product, &train.greedy)?;
    let row = row_for(bench, method, params, seed, &train, satisfaction.value, gain.map(|g| g.value), product.num_states());
    Ok(Experiment { row, params: params.clone(), train, satisfaction, gain })
}

#[allow(clippy::too_many_arguments)]
fn row_for(
    bench: &Benchmark,
    method: Method,
    p: &Params,
    seed: u64,
    train: &TrainResult,
    sat_prob: f64,
    avg_reward: Option<f64>,
    product_states: usize,
) -> ExperimentRow {
    let diff = method == Method::DiffQ;
    let lex = diff && p.machine == MachineKind::Lexicographic;
    let rho = bench.rewards.clone().unwrap_or_default();
    ExperimentRow {
        benchmark: bench.name.clone(),
        method,
        alpha: Some(p.alpha),
        eta: diff.then_some(p.eta),
        epsilon: Some(p.epsilon),
        c: diff.then_some(p.c),
        beta: lex.then_some(p.beta),
        c1: lex.then(|| p.c1_for(&rho)),
        c2: lex.then(|| p.c2_value()),
        zeta: (method == Method::HahnQ).then_some(p.zeta),
        gamma_b: (method == Method::BozkurtQ).then_some(p.gamma_b),
        gamma: (!diff).then_some(p.gamma),
        steps: p.steps,
        seed,
        wall_time_s: train.wall_time_s,
        sat_prob,
        avg_reward,
        product_states,
    }
}

/// Log-uniform distribution on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogUniform {
    pub lo: f64,
    pub hi: f64,
}

impl LogUniform {
    pub const fn new(lo: f64, hi: f64) -> Self {
        LogUniform { lo, hi }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite() {
            Ok(())
        } else {
            Err(ExperimentError::BadRange(self.lo, self.hi))
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        if self.lo == self.hi {
            return self.lo;
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (a + u * (b - a)).exp().clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRanges {
    pub alpha: LogUniform,
    pub epsilon: LogUniform,
    /// Magnitude of the reset penalty.
    pub c: LogUniform,
    pub eta: LogUniform,
    pub zeta: LogUniform,
    pub gamma_b: LogUniform,
    pub gamma: LogUniform,
}

impl Default for SweepRanges {
    fn default() -> Self {
        SweepRanges {
            alpha: LogUniform::new(0.01, 0.5),
            epsilon: LogUniform::new(0.01, 1.0),
            c: LogUniform::new(1.0, 200.0),
            eta: LogUniform::new(0.01, 0.5),
            zeta: LogUniform::new(0.5, 0.995),
            gamma_b: LogUniform::new(0.5, 0.995),
            gamma: LogUniform::new(0.99, 0.99999),
        }
    }
}

impl SweepRanges {
    fn all(&self) -> [LogUniform; 7] {
        [self.alpha, self.epsilon, self.c, self.eta, self.zeta, self.gamma_b, self.gamma]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub benchmark: String,
    pub method: Method,
    pub ranges: SweepRanges,
    pub samples: usize,
    pub master_seed: u64,
    /// Values for everything not sampled, including steps and machine kind.
    pub base: Params,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for r in self.ranges.all() {
            r.validate()?;
        }
        if self.samples == 0 {
            return Err(LearnError::BadConfig("a sweep needs at least one sample".into()).into());
        }
        Ok(())
    }
}

/// Parameters and training seed of sample `index`.
///
/// All seven parameters are drawn in a fixed order whatever the method, so
/// a sample does not depend on which of them the method reads.
pub fn sample_hyperparameters(spec: &SweepSpec, index: u64) -> Result<(Params, u64), ExperimentError> {
    spec.validate()?;
    let seed = derive_seed(spec.master_seed, index);
    let mut rng = stream(seed, SAMPLING_STREAM);
    let r = &spec.ranges;
    let alpha = r.alpha.sample(&mut rng);
    let epsilon = r.epsilon.sample(&mut rng);
    let c = r.c.sample(&mut rng);
    let eta = r.eta.sample(&mut rng);
    let zeta = r.zeta.sample(&mut rng);
    let gamma_b = r.gamma_b.sample(&mut rng);
    let gamma = r.gamma.sample(&mut rng);
    let params = Params { alpha, epsilon, c: -c, eta, zeta, gamma_b, gamma, ..spec.base.clone() };
    Ok((params, seed))
}

/// Worker count from the environment, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}

/// Runs every sample of a sweep; rows come back in sample order.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<ExperimentRow>, ExperimentError> {
    spec.validate()?;
    let bench = resolve_benchmark(&spec.benchmark)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    pool.install(|| {
        (0..spec.samples as u64)
            .into_par_iter()
            .map(|i| {
                let (params, seed) = sample_hyperparameters(spec, i)?;
                Ok(run_experiment(&bench, spec.method, &params, seed)?.row)
            })
            .collect()
    })
}

/// Rounds to nine significant digits and prints the shortest form.
pub fn format_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn cell(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Writes a metadata comment line, the header, and one line per row.
pub fn write_csv<W: Write>(
    mut out: W,
    rows: &[ExperimentRow],
    master_seed: Option<u64>,
    omit_wall_time: bool,
) -> Result<(), ExperimentError> {
    let seed = master_seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
    writeln!(out, "# {} {} master_seed={}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"), seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let wall = if omit_wall_time { None } else { r.wall_time_s };
        w.write_record([
            r.benchmark.clone(),
            r.method.to_string(),
            cell(r.alpha),
            cell(r.eta),
            cell(r.epsilon),
            cell(r.c),
            cell(r.beta),
            cell(r.c1),
            cell(r.c2),
            cell(r.zeta),
            cell(r.gamma_b),
            cell(r.gamma),
            r.steps.to_string(),
            r.seed.to_string(),
            cell(wall),
            format_float(r.sat_prob),
            cell(r.avg_reward),
            r.product_states.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(samples: usize) -> SweepSpec {
        SweepSpec {
            benchmark: "two-state-fga".into(),
            method: Method::DiffQ,
            ranges: SweepRanges::default(),
            samples,
            master_seed: 11,
            base: Params { steps: 2000, ..Params::default() },
        }
    }

    #[test]
    fn log_uniform_draws() {
        let d = LogUniform::new(0.01, 0.5);
        let mut rng = stream(5, SAMPLING_STREAM);
        let mut xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| (0.01..=0.5).contains(&x)));
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        let expect = (0.01f64 * 0.5).sqrt();
        assert!((median.ln() - expect.ln()).abs() < 0.1 * expect.ln().abs());
    }

    #[test]
    fn degenerate_and_bad_ranges() {
        let mut rng = stream(0, SAMPLING_STREAM);
        assert_eq!(LogUniform::new(0.3, 0.3).sample(&mut rng), 0.3);
        assert!(matches!(LogUniform::new(0.0, 1.0).validate(), Err(ExperimentError::BadRange(..))));
        let mut s = spec(1);
        s.ranges.alpha = LogUniform::new(-1.0, 0.5);
        assert!(sample_hyperparameters(&s, 0).is_err());
    }

    #[test]
    fn samples_are_deterministic_per_index() {
        let s = spec(3);
        assert_eq!(sample_hyperparameters(&s, 2).unwrap(), sample_hyperparameters(&s, 2).unwrap());
        assert_ne!(sample_hyperparameters(&s, 1).unwrap(), sample_hyperparameters(&s, 2).unwrap());
        assert!(sample_hyperparameters(&s, 0).unwrap().0.c <= -1.0);
    }

    #[test]
    fn single_sample_sweep_equals_experiment() {
        let s = spec(1);
        let rows = run_sweep(&s, Some(1)).unwrap();
        let (p, seed) = sample_hyperparameters(&s, 0).unwrap();
        let one = run_experiment(&resolve_benchmark("two-state-fga").unwrap(), Method::DiffQ, &p, seed).unwrap();
        let strip = |r: &ExperimentRow| ExperimentRow { wall_time_s: None, ..r.clone() };
        assert_eq!(rows.len(), 1);
        assert_eq!(strip(&rows[0]), strip(&one.row));
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333");
        assert_eq!(format_float(-200.0), "-200");
        assert_eq!(format_float(123456789012.0), "123456789000");
        assert_eq!(format_float(0.0), "0");
    }

    #[test]
    fn csv_layout() {
        let s = spec(2);
        let rows = run_sweep(&s, Some(2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows, Some(11), true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# ") && lines[0].contains("master_seed=11"));
        assert_eq!(lines[1], CSV_HEADER.join(","));
        assert_eq!(lines.len(), 4);
        let cells: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(cells.len(), 18);
        // diff-q leaves the baseline columns and wall time empty
        assert_eq!((cells[9], cells[10], cells[11], cells[14]), ("", "", "", ""));
    }

    #[test]
    fn method_and_machine_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("reset-hard".parse::<MachineKind>().unwrap(), MachineKind::ResetHard);
        assert!("td".parse::<Method>().is_err());
    }
}
