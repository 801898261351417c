use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use omega_avg_rl::experiment::{
    build_machine, evaluate_policy, evaluation_product, resolve_benchmark, run_experiment, run_sweep,
    threads_from_env, write_csv, Experiment, LogUniform, MachineKind, Method, Params, SweepRanges, SweepSpec,
};
use omega_avg_rl::machine::{machine_table, ExternalReward};
use omega_avg_rl::{classify_specification, parse_automaton, AutomatonError, Benchmark, Mdp};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "omega-avg-rl", version, about = "Average-reward learning for omega-regular objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated or bundled benchmark to disk.
    Gen(GenArgs),
    /// Classify a deterministic automaton.
    Check {
        automaton: PathBuf,
    },
    /// Train one learner and evaluate its greedy policy.
    Learn(LearnArgs),
    /// Evaluate the policy stored in a result file.
    Verify(VerifyArgs),
    /// Run a log-uniform hyperparameter sweep and write CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator id such as `grid(4,4,0.1)` or a bundled benchmark name.
    id: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the reward machine's transition table.
    #[arg(long)]
    emit_machine: bool,
    #[command(flatten)]
    machine: MachineArgs,
}

#[derive(Args, Clone)]
struct Source {
    /// Bundled benchmark name or generator id.
    #[arg(long, conflicts_with_all = ["mdp", "automaton"])]
    benchmark: Option<String>,
    #[arg(long, requires = "automaton")]
    mdp: Option<PathBuf>,
    #[arg(long, requires = "mdp")]
    automaton: Option<PathBuf>,
    /// External reward file for the lexicographic machine.
    #[arg(long)]
    rewards: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct MachineArgs {
    #[arg(long, default_value = "reset")]
    machine: MachineKind,
    /// Reset penalty; a magnitude for the lexicographic machine.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    c: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    c1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c2: Option<f64>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "diff-q")]
    method: Method,
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.99)]
    zeta: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma_b: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    episodic: bool,
    #[arg(long, default_value_t = 1000)]
    episode_length: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    omit_wall_time: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: Source,
    /// Result file written by `learn`.
    #[arg(long)]
    policy: PathBuf,
    /// Print the gain instead of the satisfaction probability.
    #[arg(long)]
    gain: bool,
    /// Write the explicit product in the model format.
    #[arg(long)]
    dump_product: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    benchmark: String,
    #[arg(long, default_value = "diff-q")]
    method: Method,
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long)]
    episodic: bool,
    /// Override a sampling range, e.g. `alpha=0.01:0.5`. Repeatable.
    #[arg(long = "range", value_name = "NAME=LO:HI")]
    ranges: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    omit_wall_time: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(source: &Source) -> Result<Benchmark> {
    let mut bench = match (&source.benchmark, &source.mdp, &source.automaton) {
        (Some(name), _, _) => resolve_benchmark(name)?,
        (None, Some(mdp), Some(aut)) => {
            let text = read(aut)?;
            parse_automaton(&text).with_context(|| format!("parsing {}", aut.display()))?;
            Benchmark {
                name: mdp.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                mdp: Mdp::from_json(&read(mdp)?).with_context(|| format!("loading {}", mdp.display()))?,
                automaton: text,
                rewards: None,
            }
        }
        _ => bail!("give either --benchmark or both --mdp and --automaton"),
    };
    if let Some(path) = &source.rewards {
        bench.rewards = Some(ExternalReward::from_json(&read(path)?)?);
    }
    Ok(bench)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn apply_machine(p: &mut Params, m: &MachineArgs) {
    p.machine = m.machine;
    p.c = m.c;
    p.beta = m.beta;
    p.c1 = m.c1;
    p.c2 = m.c2;
}

fn gen(args: &GenArgs) -> Result<()> {
    let bench = resolve_benchmark(&args.id)?;
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("mdp.json"), bench.mdp.to_json() + "\n")?;
    fs::write(args.out_dir.join("automaton.hoa"), &bench.automaton)?;
    if let Some(r) = &bench.rewards {
        fs::write(args.out_dir.join("rewards.json"), r.to_json() + "\n")?;
    }
    if args.emit_machine {
        let mut p = Params::default();
        apply_machine(&mut p, &args.machine);
        let machine = build_machine(&bench.automaton(), bench.rewards.as_ref(), &p, p.beta)?;
        fs::write(args.out_dir.join("machine.json"), serde_json::to_string_pretty(&machine_table(&machine))? + "\n")?;
    }
    Ok(())
}

fn check(path: &Path) -> Result<()> {
    let aut = parse_automaton(&read(path)?)?;
    let text = match classify_specification(&aut) {
        Ok(class) => serde_json::to_string(&class)?,
        Err(AutomatonError::NotDeterministic) => serde_json::json!({ "status": "unchecked" }).to_string(),
        Err(e) => return Err(e.into()),
    };
    println!("{text}");
    Ok(())
}

fn learn(args: &LearnArgs) -> Result<()> {
    let bench = load(&args.source)?;
    let mut p = Params {
        alpha: args.alpha,
        eta: args.eta,
        epsilon: args.epsilon,
        zeta: args.zeta,
        gamma_b: args.gamma_b,
        gamma: args.gamma,
        steps: args.steps,
        episodic: args.episodic,
        episode_length: args.episode_length,
        ..Params::default()
    };
    apply_machine(&mut p, &args.machine);
    let mut result = run_experiment(&bench, args.method, &p, args.seed)?;
    if args.omit_wall_time {
        result = result.without_wall_time();
    }
    emit(args.out.as_deref(), &(serde_json::to_string_pretty(&result)? + "\n"))
}

fn verify(args: &VerifyArgs) -> Result<()> {
    let bench = load(&args.source)?;
    let result: Experiment = serde_json::from_str(&read(&args.policy)?).context("parsing result file")?;
    let method = result.row.method;
    let product = evaluation_product(&bench, method, &result.params)?;
    let (sat, gain) = evaluate_policy(&bench, method, &result.params, &product, &result.train.greedy)?;
    if let Some(path) = &args.dump_product {
        fs::write(path, product.mdp.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    let out = if args.gain {
        gain.with_context(|| format!("{method} reports no gain"))?
    } else {
        sat
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn parse_range(text: &str, ranges: &mut SweepRanges) -> Result<()> {
    let (name, span) = text.split_once('=').with_context(|| format!("bad range {text:?}"))?;
    let (lo, hi) = span.split_once(':').with_context(|| format!("bad range {text:?}"))?;
    let r = LogUniform::new(lo.trim().parse()?, hi.trim().parse()?);
    let slot = match name.trim() {
        "alpha" => &mut ranges.alpha,
        "epsilon" => &mut ranges.epsilon,
        "c" => &mut ranges.c,
        "eta" => &mut ranges.eta,
        "zeta" => &mut ranges.zeta,
        "gamma_b" | "gamma-b" => &mut ranges.gamma_b,
        "gamma" => &mut ranges.gamma,
        other => bail!("unknown range {other:?}"),
    };
    *slot = r;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut base = Params { steps: args.steps, episodic: args.episodic, ..Params::default() };
    apply_machine(&mut base, &args.machine);
    let mut ranges = SweepRanges::default();
    for r in &args.ranges {
        parse_range(r, &mut ranges)?;
    }
    let spec = SweepSpec {
        benchmark: args.benchmark.clone(),
        method: args.method,
        ranges,
        samples: args.samples,
        master_seed: args.master_seed,
        base,
    };
    let rows = run_sweep(&spec, threads_from_env())?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, Some(args.master_seed), args.omit_wall_time)?;
    emit(args.out.as_deref(), std::str::from_utf8(&buf)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(&a),
        Command::Check { automaton } => check(&automaton),
        Command::Learn(a) => learn(&a),
        Command::Verify(a) => verify(&a),
        Command::Sweep(a) => sweep(&a),
    }
}
