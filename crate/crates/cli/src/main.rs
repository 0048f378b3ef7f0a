use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aqucb_core::aggregation::{validate, Aggregation};
use aqucb_core::config::{
    apply_override, build_environment, duplication_spec, ConfigError, EnvironmentSpec,
    ExperimentConfig,
};
use aqucb_core::harness::{run_experiment, write_report, HarnessError};
use aqucb_core::mdp::{backward_induction, EpisodicMdp};
use aqucb_core::plot::plot_files;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "aqucb",
    version,
    about = "Optimistic Q-learning with aggregated states: experiments and instances"
)]
struct Cli {
    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write regret.csv, summary.json and timing.json.
    Run(RunArgs),
    /// Generate an instance: mdp.json, aggregation.json and instance.json.
    Gen(GenArgs),
    /// Solve an MDP by backward induction.
    Solve(SolveArgs),
    /// Describe an MDP and, optionally, an aggregation of it.
    Inspect(InspectArgs),
    /// Plot cumulative regret from one or more regret CSVs as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or the summary.json of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config value, e.g. `K=10` or `environment.slip=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seeds as a comma-separated list; `a..b` ranges are expanded.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    /// chain, random, duplication, duplication_file or file.
    generator: String,
    /// Generator parameter, e.g. `horizon=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long, default_value = "instance")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    mdp: PathBuf,
    /// Write Q*, V* and the optimal value to `DIR/solution.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    mdp: PathBuf,
    #[arg(long)]
    aggregation: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    /// Overlay the regret bound described in this summary.json.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value = "regret.svg")]
    out: PathBuf,
}

/// Input problems exit with 2, everything else with 1.
enum Failure {
    Input(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", context.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::Gen(args) => cmd_gen(args, cli.quiet),
        Command::Solve(args) => cmd_solve(args, cli.quiet),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Plot(args) => cmd_plot(args, cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = |part: &str| Failure::Input(format!("--seeds: cannot parse `{part}`"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad(part))?;
            let b: u64 = b.parse().map_err(|_| bad(part))?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    Ok(seeds)
}

fn cmd_run(args: RunArgs, quiet: bool) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&args.config, &args.overrides)?;
    if let Some(seeds) = &args.seeds {
        cfg.harness.seeds = parse_seeds(seeds)?;
    }
    cfg.validate()?;
    let out = args
        .out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if !quiet {
        eprintln!(
            "running {} episodes x {} seeds",
            cfg.agent.episodes,
            cfg.harness.seeds.len()
        );
    }
    let report = run_experiment(&cfg)?;
    write_report(&report, &out)?;
    if !quiet {
        let s = &report.summary;
        println!("optimal value      {:.6}", s.instance.optimal_value);
        println!("measured epsilon   {:.6e}", s.measured_epsilon);
        println!("mean regret at K   {:.4}", s.mean_cumulative_regret);
        println!("regret bound at K  {:.4}", s.theorem_bound);
        if let Some(freq) = s.optimism_frequency {
            println!("optimistic runs    {:.3}", freq);
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(runtime(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(runtime(path))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_gen(args: GenArgs, quiet: bool) -> Result<(), Failure> {
    let mut table = toml::Table::new();
    let mut env = toml::Table::new();
    env.insert(
        "generator".into(),
        toml::Value::String(args.generator.clone()),
    );
    table.insert("environment".into(), toml::Value::Table(env));
    for p in &args.params {
        apply_override(&mut table, &format!("environment.{p}"))?;
    }
    let spec: EnvironmentSpec = table
        .remove("environment")
        .expect("inserted above")
        .try_into()
        .map_err(|e: toml::de::Error| {
            Failure::Input(format!("generator `{}`: {e}", args.generator))
        })?;
    let (mdp, agg) = build_environment(&spec)?;
    validate(&agg, &mdp).map_err(|e| Failure::Runtime(e.to_string()))?;
    let (q_star, _) = backward_induction(&mdp);
    let epsilon = aqucb_core::aggregation::epsilon_from_q(&q_star, &agg);

    std::fs::create_dir_all(&args.out).map_err(runtime(&args.out))?;
    write_json(&args.out.join("mdp.json"), &mdp)?;
    write_json(&args.out.join("aggregation.json"), &agg)?;
    if let Some(recipe) = duplication_spec(&spec)? {
        write_json(&args.out.join("duplication.json"), &recipe)?;
    }
    write_json(
        &args.out.join("instance.json"),
        &json!({
            "environment": spec,
            "num_states": mdp.num_states(),
            "num_actions": mdp.num_actions(),
            "horizon": mdp.horizon(),
            "num_cells": agg.num_cells(),
            "measured_epsilon": epsilon,
        }),
    )?;
    if !quiet {
        println!("measured epsilon {epsilon:.6e}");
        println!("wrote {}", args.out.display());
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs, quiet: bool) -> Result<(), Failure> {
    let mdp: EpisodicMdp = read_json(&args.mdp)?;
    let (q, v) = backward_induction(&mdp);
    let optimal = v.get(0, mdp.initial_state());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(runtime(dir))?;
        write_json(
            &dir.join("solution.json"),
            &json!({
                "optimal_value": optimal,
                "initial_state": mdp.initial_state(),
                "q_star": q.to_nested(),
                "v_star": v.to_nested(),
            }),
        )?;
    }
    if !quiet || args.out.is_none() {
        println!("{optimal}");
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Failure> {
    let mdp: EpisodicMdp = read_json(&args.mdp)?;
    let (q, v) = backward_induction(&mdp);
    println!("horizon        {}", mdp.horizon());
    println!("states         {}", mdp.num_states());
    println!("actions        {}", mdp.num_actions());
    println!("initial state  {}", mdp.initial_state());
    println!(
        "reward noise   {}",
        if mdp.has_reward_noise() { "yes" } else { "no" }
    );
    println!("optimal value  {}", v.get(0, mdp.initial_state()));
    if let Some(path) = &args.aggregation {
        let agg: Aggregation = read_json(path)?;
        let report =
            validate(&agg, &mdp).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        println!("cells          {}", agg.num_cells());
        println!("unused cells   {:?}", report.unused_cells());
        println!(
            "epsilon        {:e}",
            aqucb_core::aggregation::epsilon_from_q(&q, &agg)
        );
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs, quiet: bool) -> Result<(), Failure> {
    let svg = plot_files(&args.csv, args.summary.as_deref())
        .map_err(|e| Failure::Input(e.to_string()))?;
    std::fs::write(&args.out, svg).map_err(runtime(&args.out))?;
    if !quiet {
        println!("wrote {}", args.out.display());
    }
    Ok(())
}
