use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bddmp::dual::{Averaging, SolverConfig};
use bddmp::model::{write_lp, OrderStrategy};
use bddmp::pipeline::{dump_bdd, read_instance, solve, PipelineConfig, PipelineError};
use bddmp::primal::ScoreStrategy;
use bddmp::testkit::{
    generate, CellTrackingParams, GeneratorSpec, GraphMatchingParams, MrfParams, RandomIlpParams, TomographyParams,
    Topology,
};

#[derive(Parser)]
#[command(name = "bddmp", version, about = "BDD-based dual ascent solver for 0-1 integer programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an LP file and print a JSON report
    Solve(SolveArgs),
    /// Write a generated instance in LP format
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Uniform,
    Srmp,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Input,
    CuthillMckee,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrimalOrderArg {
    AbsMm,
    NegMm,
    Reduction,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    max_passes: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Smoothing parameter alpha; min-sum when absent
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long, value_enum, default_value = "uniform")]
    averaging: AveragingArg,
    #[arg(long, value_enum, default_value = "input")]
    order: OrderArg,
    #[arg(long, value_enum, default_value = "neg-mm")]
    primal_order: PrimalOrderArg,
    /// Propagation budget of the primal search (default 10 * variables)
    #[arg(long)]
    node_budget: Option<usize>,
    /// Write per-pass bounds as JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the BDD of this constraint as DOT to stderr
    #[arg(long, value_name = "CONSTRAINT")]
    dump_bdd: Option<String>,
    /// Report zero timings so repeated runs are byte-identical
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenerateKind,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenerateKind {
    #[command(name = "random_ilp", alias = "random-ilp")]
    RandomIlp {
        #[arg(long, default_value_t = 6)]
        vars: usize,
        #[arg(long, default_value_t = 3)]
        cons: usize,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        /// Draw right-hand sides without a planted feasible point
        #[arg(long)]
        unplanted: bool,
    },
    /// Chain MRF with --nodes, or grid MRF with --rows and --cols
    Mrf {
        #[arg(long, conflicts_with_all = ["rows", "cols"])]
        nodes: Option<usize>,
        #[arg(long, requires = "cols")]
        rows: Option<usize>,
        #[arg(long, requires = "rows")]
        cols: Option<usize>,
        #[arg(long, default_value_t = 2)]
        labels: usize,
    },
    #[command(name = "graph_matching", alias = "graph-matching")]
    GraphMatching {
        #[arg(long, default_value_t = 3)]
        left: usize,
        #[arg(long, default_value_t = 3)]
        right: usize,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
    },
    #[command(name = "cell_tracking", alias = "cell-tracking")]
    CellTracking {
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        detections: usize,
        #[arg(long, default_value_t = 1.0)]
        transition_density: f64,
        #[arg(long, default_value_t = 0.3)]
        division_density: f64,
        #[arg(long, default_value_t = 0.3)]
        conflict_density: f64,
    },
    Tomography {
        #[arg(long, default_value_t = 3)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        cols: usize,
        #[arg(long, default_value_t = 2)]
        max_label: usize,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run_solve(args: SolveArgs) -> Result<u8, Box<dyn std::error::Error>> {
    let instance = read_instance(&args.input)?;
    let config = PipelineConfig {
        solver: SolverConfig {
            max_passes: args.max_passes,
            rel_improvement_tol: args.tol,
            smoothing: args.smoothing,
            averaging: match args.averaging {
                AveragingArg::Uniform => Averaging::Uniform,
                AveragingArg::Srmp => Averaging::Srmp,
            },
            order: match args.order {
                OrderArg::Input => OrderStrategy::Input,
                OrderArg::CuthillMckee => OrderStrategy::CuthillMckee,
            },
            verify: false,
            timing: !args.deterministic,
        },
        primal_order: match args.primal_order {
            PrimalOrderArg::AbsMm => ScoreStrategy::AbsMm,
            PrimalOrderArg::NegMm => ScoreStrategy::NegMm,
            PrimalOrderArg::Reduction => ScoreStrategy::Reduction,
        },
        node_budget: args.node_budget,
        ..PipelineConfig::default()
    };
    if let Some(name) = &args.dump_bdd {
        eprint!("{}", dump_bdd(&instance, name, &config)?);
    }
    let name = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let out = solve(&instance, &name, &config)?;
    if let Some(path) = &args.trace {
        write_file(path, &out.trace_jsonl())?;
    }
    println!("{}", out.report_json());
    let r = &out.report;
    let ub = r.upper_bound.map_or_else(|| "none".to_string(), |u| u.to_string());
    eprintln!(
        "{}: lb {} ub {} after {} passes ({:?})",
        r.instance, r.lower_bound, ub, r.passes, r.termination
    );
    Ok(r.termination.exit_code() as u8)
}

fn run_generate(args: GenerateArgs) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = match args.kind {
        GenerateKind::RandomIlp {
            vars,
            cons,
            density,
            unplanted,
        } => GeneratorSpec::RandomIlp(RandomIlpParams {
            vars,
            cons,
            density,
            planted: !unplanted,
        }),
        GenerateKind::Mrf {
            nodes,
            rows,
            cols,
            labels,
        } => {
            let topology = match (nodes, rows, cols) {
                (_, Some(rows), Some(cols)) => Topology::Grid { rows, cols },
                (nodes, _, _) => Topology::Chain {
                    nodes: nodes.unwrap_or(3),
                },
            };
            GeneratorSpec::Mrf(MrfParams { topology, labels })
        }
        GenerateKind::GraphMatching { left, right, density } => {
            GeneratorSpec::GraphMatching(GraphMatchingParams { left, right, density })
        }
        GenerateKind::CellTracking {
            frames,
            detections,
            transition_density,
            division_density,
            conflict_density,
        } => GeneratorSpec::CellTracking(CellTrackingParams {
            frames,
            detections,
            transition_density,
            division_density,
            conflict_density,
        }),
        GenerateKind::Tomography { rows, cols, max_label } => {
            GeneratorSpec::Tomography(TomographyParams { rows, cols, max_label })
        }
    };
    let text = write_lp(&generate(&spec, args.seed)?);
    match &args.output {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Generate(args) => run_generate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
