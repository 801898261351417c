//! Average-reward reinforcement learning for absolute-liveness ω-regular
//! objectives.
//!
//! An [`Mdp`] is composed with a [`RewardMachine`] built from a Büchi
//! automaton. Differential Q-learning on the resulting continuing
//! environment yields positional product policies, which the exact
//! verifier evaluates on the explicit product.

pub mod alphabet;
pub mod automaton;
pub mod benchmarks;
pub mod experiment;
pub mod graph;
pub mod learn;
pub mod machine;
pub mod mdp;
pub mod mec;
pub mod product;
pub mod rng;
pub mod verify;

pub use alphabet::Letter;
pub use automaton::{
    classify_specification, coaccessible_states, det_language_containment, parse_automaton, AutomatonError,
    BuchiAutomaton, SpecClass,
};
pub use machine::{
    build_lexicographic_machine, build_reset_machine, machine_step, schedule_beta, BetaSchedule, Epsilon,
    ExternalReward, MachineError, MachineInput, MachineState, RewardMachine,
};
pub use mdp::{induce_chain, sample_transition, validate_mdp, MarkovChain, Mdp, MdpBuilder, MdpError, StationaryPolicy};
pub use mec::{is_communicating, is_weakly_communicating, mec_decomposition, MecDecomposition};
pub use product::{
    build_explicit_product, Component, ExplicitProduct, ProductAction, ProductEnv, ProductError, ProductState,
    ProductPolicy, StepOutcome,
};
pub use benchmarks::{bundled, generate_benchmark, Benchmark, GeneratorError};
pub use experiment::{
    evaluate_policy, evaluation_product, run_experiment, run_sweep, sample_hyperparameters, write_csv, Experiment, ExperimentError, ExperimentRow,
    MachineKind, Method, Params, SweepSpec,
};
pub use learn::{
    differential_q_train, discounted_q_train, greedy_policy, BozkurtEnv, Environment, HahnEnv, LearnError,
    LearnerConfig, QTable, TrainResult,
};
pub use verify::{
    max_reach_probability, optimal_satisfaction_probability, policy_average_reward, policy_external_gain,
    policy_satisfaction_probability, VerificationResult, VerifyError,
};
