use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphmp::bench::{run_bench, to_csv, BenchPlan};
use graphmp::detect::{detect, parse_attrs, serialize_attrs, DetectReport, Statistic};
use graphmp::graph::serialize_graph;
use graphmp::solver::{HaltingMode, SolverConfig};
use graphmp::synth::{synth_instance, SynthMode, SynthSpec};
use graphmp::verify::run_verify;
use graphmp::{load_graph, Error, NodeMap, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "graphmp", version, about = "Graph-structured matching pursuit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find an anomalous connected subgraph
    Detect(DetectArgs),
    /// Write a planted-cluster grid instance
    Synth(SynthArgs),
    /// Run a grid of planted-cluster instances and write CSV
    Bench(BenchArgs),
    /// Compare the projection oracles against brute force on small graphs
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Halt {
    Obj,
    Est,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Ems,
    Kulldorff,
    Ebp,
    Ls,
}

impl From<StatArg> for Statistic {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::Ems => Statistic::Ems,
            StatArg::Kulldorff => Statistic::Kulldorff,
            StatArg::Ebp => Statistic::Ebp,
            StatArg::Ls => Statistic::Ls,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gaussian,
    Binary,
}

impl From<ModeArg> for SynthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gaussian => SynthMode::GaussianMean,
            ModeArg::Binary => SynthMode::BinarySensor,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Maximum connected components
    #[arg(long, default_value_t = 1)]
    g: usize,
    /// Halting threshold
    #[arg(long, default_value_t = 0.001)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Halt::Obj)]
    halt: Halt,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Leave wall-clock fields empty so output is reproducible byte for byte
    #[arg(long)]
    no_timing: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.eps,
            max_iter: self.max_iter,
            halting_mode: match self.halt {
                Halt::Obj => HaltingMode::ObjectiveChange,
                Halt::Est => HaltingMode::EstimateChange,
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Edge list: `u v [cost]` per line
    #[arg(long)]
    graph: PathBuf,
    /// CSV with header `node,feature` or `node,observed,expected`
    #[arg(long)]
    attrs: PathBuf,
    #[arg(long, value_enum, default_value_t = StatArg::Ems)]
    stat: StatArg,
    /// Maximum support size
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    rows: usize,
    #[arg(long, default_value_t = 16)]
    cols: usize,
    #[arg(long, default_value_t = 12)]
    cluster: usize,
    #[arg(long, default_value_t = 3.0)]
    mu: f64,
    /// Percent of node values flipped in binary mode
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Binary)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for graph.txt, attrs.csv and truth.txt
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 16)]
    rows: usize,
    #[arg(long, default_value_t = 16)]
    cols: usize,
    #[arg(long, default_value_t = 12)]
    cluster: usize,
    #[arg(long, default_value_t = 3.0)]
    mu: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "binary")]
    mode: Vec<ModeArg>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    flip: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ems")]
    stat: Vec<StatArg>,
    #[arg(long, value_delimiter = ',', default_value = "12")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Master seed from which instance seeds are derived
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Random inputs per corpus graph
    #[arg(long, default_value_t = 100)]
    per_graph: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(value: serde_json::Result<serde_json::Value>) -> Result<String> {
    value
        .and_then(|v| serde_json::to_string_pretty(&v))
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

fn run_detect(args: &DetectArgs) -> Result<()> {
    let (graph, map) = load_graph(&read(&args.graph)?)?;
    let data = parse_attrs(&read(&args.attrs)?, &map)?;
    let cfg = args.solver.config();
    let stat = Statistic::from(args.stat);
    let det = detect(&graph, &data, stat, args.k, args.solver.g, &cfg)?;
    let report = DetectReport::new(&det, &map, stat, &cfg, !args.solver.no_timing);
    emit(args.out.as_deref(), &to_json(serde_json::to_value(&report))?)
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        rows: args.rows,
        cols: args.cols,
        cluster_size: args.cluster,
        signal_mu: args.mu,
        flip_rate: args.flip,
        seed: args.seed,
        mode: args.mode.into(),
    };
    let inst = synth_instance(&spec)?;
    let map = NodeMap::identity(inst.graph.node_count());
    fs::create_dir_all(&args.out).map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    write(&args.out.join("graph.txt"), &serialize_graph(&inst.graph, &map))?;
    write(&args.out.join("attrs.csv"), &serialize_attrs(&map, &inst.data, &inst.raw))?;
    let truth: Vec<String> = inst.truth.iter().map(|v| v.to_string()).collect();
    write(&args.out.join("truth.txt"), &(truth.join("\n") + "\n"))?;
    print!(
        "{}",
        to_json(Ok(json!({
            "nodes": inst.graph.node_count(),
            "edges": inst.graph.edge_count(),
            "truth": inst.truth,
            "spec": spec,
        })))?
    );
    Ok(())
}

fn run_bench_cmd(args: &BenchArgs) -> Result<()> {
    let plan = BenchPlan {
        rows: args.rows,
        cols: args.cols,
        cluster_size: args.cluster,
        signal_mu: args.mu,
        modes: args.mode.iter().map(|&m| m.into()).collect(),
        flip_rates: args.flip.clone(),
        statistics: args.stat.iter().map(|&s| s.into()).collect(),
        ks: args.k.clone(),
        g: args.solver.g,
        repeats: args.repeats,
        master_seed: args.seed,
    };
    let records = run_bench(&plan, &args.solver.config(), args.workers)?;
    emit(args.out.as_deref(), &to_csv(&records, !args.solver.no_timing)?)
}

fn run_verify_cmd(args: &VerifyArgs) -> Result<bool> {
    let checks = run_verify(args.seed, args.per_graph)?;
    for check in &checks {
        println!("{}", check.line());
    }
    Ok(checks.iter().all(|c| c.passed()))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse { .. } | Error::Validation(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Detect(args) => run_detect(args).map(|()| true),
        Command::Synth(args) => run_synth(args).map(|()| true),
        Command::Bench(args) => run_bench_cmd(args).map(|()| true),
        Command::Verify(args) => run_verify_cmd(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            let body = json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
            eprintln!("{body}");
            ExitCode::from(exit_code(&err))
        }
    }
}
