mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "conefield",
    about = "Reconstruct, label, evaluate and filter local causal states of fields on graphs",
    disable_version_flag = true
)]
pub struct Cli {
    /// Print the tool version and exit.
    #[arg(long)]
    pub version: bool,
    /// With --version, print JSON.
    #[arg(long, requires = "version")]
    pub json: bool,
    /// Cap on worker threads for counting and filtering. Defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// File of key=value lines supplying flag defaults; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
pub struct ConeArgs {
    /// Propagation speed in graph hops per step.
    #[arg(long = "c", default_value_t = 1)]
    pub c: usize,
    /// Past cone depth, counting the present slice.
    #[arg(long, default_value_t = 2)]
    pub past: usize,
    /// Future cone depth.
    #[arg(long, default_value_t = 1)]
    pub future: usize,
    /// Share statistics between vertices with congruent cones.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub pooling: Switch,
}

#[derive(Args, Debug, Clone)]
pub struct TestArgs {
    /// Significance level of the homogeneity test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = TestArg::Chi2)]
    pub test: TestArg,
    /// Resamples for the permutation test.
    #[arg(long, default_value_t = 1000)]
    pub n_perm: usize,
    /// Bins with smaller expected counts are merged before the chi-squared test.
    #[arg(long, default_value_t = 5.0)]
    pub min_expected: f64,
    /// Run one reassignment pass after clustering.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub refine: bool,
}

#[derive(Args, Debug, Clone)]
pub struct RuleArgs {
    /// iid, shift, rule184 or elementary:<number>.
    #[arg(long)]
    pub rule: String,
    /// Symbol probabilities for the iid rule, comma separated.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub alphabet: u16,
    /// Probability of replacing a rule output by a different uniform symbol.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Args, Debug, Clone)]
pub struct CmiArgs {
    /// Largest CMI in bits read as conditional independence.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Conditioning cells with fewer samples are left out.
    #[arg(long, default_value_t = 25)]
    pub min_cell: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    Chi2,
    Permutation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    NextStep,
    FullCone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GraphKind {
    Ring,
    Path,
    Star,
    Tree,
    Connected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MarkovKind {
    Temporal,
    Field,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a generated graph in edge-list format.
    Graph {
        #[arg(long, value_enum)]
        kind: GraphKind,
        #[arg(long)]
        n: usize,
        /// Degree cap for random trees.
        #[arg(long, default_value_t = 3)]
        max_degree: usize,
        /// Extra random edges for connected graphs.
        #[arg(long, default_value_t = 0)]
        extra_edges: usize,
        /// Required for random kinds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Simulate a field from a local rule.
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Count past/future cone configurations into a database.
    Cones {
        #[arg(long)]
        graph: PathBuf,
        /// Field files, counted as independent series. Repeat or separate with commas.
        #[arg(long, required = true, value_delimiter = ',')]
        field: Vec<PathBuf>,
        #[command(flatten)]
        cone: ConeArgs,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Reconstruct local causal states.
    Reconstruct {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        field: Vec<PathBuf>,
        #[command(flatten)]
        cone: ConeArgs,
        #[command(flatten)]
        test: TestArgs,
        /// Seed of the past-ordering shuffle.
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Label every point of a field with its state.
    Label {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Predicted distribution for one past configuration.
    Predict {
        #[arg(long)]
        states: PathBuf,
        #[arg(long, default_value_t = 0)]
        class: usize,
        /// Past configuration in slot order, as written in the states file.
        #[arg(long)]
        past: String,
        #[arg(long, value_enum, default_value_t = ModeArg::NextStep)]
        mode: ModeArg,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Score predictions on a held-out field; prints `log_loss accuracy coverage n_points`.
    Evaluate {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::NextStep)]
        mode: ModeArg,
        /// Also write the full report as JSON.
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Narrow state estimates on a field with transitions learned from training fields.
    Filter {
        #[arg(long)]
        states: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        train: Vec<PathBuf>,
        #[arg(long)]
        field: PathBuf,
        /// Also run the order-free parallel propagation and require equal results.
        #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
        check_parallel: bool,
        #[arg(short = 'o', long)]
        output: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Local statistical complexity per vertex class.
    Complexity {
        #[arg(long)]
        states: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        field: Vec<PathBuf>,
        #[arg(short = 'o', long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Conditional-independence diagnostics on labeled data.
    MarkovTest {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_enum, default_value_t = MarkovKind::Temporal)]
        kind: MarkovKind,
        /// Lag of the compared past state (temporal test).
        #[arg(long, default_value_t = 2)]
        lag: usize,
        /// Graph distance of the probe (field test).
        #[arg(long, default_value_t = 2)]
        probe_distance: usize,
        /// Time offset of the probe, at most 0 (field test).
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        probe_dt: i64,
        #[command(flatten)]
        cmi: CmiArgs,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Simulate training and held-out fields, reconstruct, and evaluate.
    Pipeline {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        heldout_steps: Option<usize>,
        #[command(flatten)]
        cone: ConeArgs,
        #[command(flatten)]
        test: TestArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::NextStep)]
        mode: ModeArg,
        /// Directory receiving all outputs.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

pub const SUBCOMMANDS: &[&str] = &[
    "graph",
    "simulate",
    "cones",
    "reconstruct",
    "label",
    "predict",
    "evaluate",
    "filter",
    "complexity",
    "markov-test",
    "pipeline",
];

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl From<conefield::Error> for Failure {
    fn from(e: conefield::Error) -> Self {
        match e {
            conefield::Error::Params(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn run(args: Vec<String>) -> Result<(), Failure> {
    let args = match config::config_path(&args) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{path}: {e}")))?;
            let entries = config::parse(&text).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
            config::merge(&args, &entries, SUBCOMMANDS, &["threads"])
        }
        None => args,
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                return Err(Failure::Usage(e.render().to_string()));
            }
            print!("{}", e.render());
            return Ok(());
        }
    };
    if cli.version {
        if cli.json {
            println!("{}", serde_json::json!({"name": "conefield", "version": env!("CARGO_PKG_VERSION")}));
        } else {
            println!("conefield {}", env!("CARGO_PKG_VERSION"));
        }
        return Ok(());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let Some(command) = cli.command else {
        return Err(Failure::Usage("missing subcommand; see --help".into()));
    };
    commands::dispatch(command)
}

fn main() -> ExitCode {
    let args: Vec<String> = match std::env::args_os().map(|a| a.into_string()).collect() {
        Ok(a) => a,
        Err(_) => {
            eprintln!("conefield: arguments must be valid UTF-8");
            return ExitCode::from(2);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", msg.trim_end());
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("conefield: {msg}");
            ExitCode::from(1)
        }
    }
}
