mod figures;
mod io;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use channel_forge::channel::{choi_fidelity, Channel, ChannelJson};
use channel_forge::circuit::{extract_channel, CircuitJson, Circuit};
use channel_forge::dilation::{extended_qudit_routine, stinespring_dilate};
use channel_forge::netsim::{resource_estimate, run_scenario, NetworkScenario};
use channel_forge::noise::{apply_noise_model, ChannelSpec, NoiseConfig, NoiseModel};
use channel_forge::optim::NelderMeadOptions;
use channel_forge::serde_util::MatrixJson;
use channel_forge::tailor::TailoringJob;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use figures::{Figure, Grid, SweepSettings};
use table::Table;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Config(String),
    /// Numerical or optimizer failure: exit code 1.
    Numeric(String),
}

impl From<channel_forge::Error> for CliError {
    fn from(e: channel_forge::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(name = "channel-forge", version, about = "Quantum channel construction, dilation, simulation and noise tailoring")]
struct Cli {
    /// JSON or TOML file with defaults for the global flags and sweeps.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for optimizer restarts and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, convert, compare and validate channels.
    #[command(subcommand)]
    Channel(ChannelCmd),
    /// Synthesize an ancilla dilation or an extended-qudit routine.
    Dilate {
        #[command(flatten)]
        source: ChannelSource,
        #[arg(long, value_enum, default_value = "ancilla")]
        mode: DilateMode,
    },
    /// Extract the channel realised by a circuit file.
    Circuit {
        circuit: PathBuf,
        /// Hardware noise model file (`{"kind": "gate"|"block", "channels": [...]}`).
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Draw this many measurement records (maximally mixed input); needs --seed.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run a tailoring job file and print the recipe.
    Tailor { job: PathBuf },
    /// Regenerate figure data.
    Figures(FigureArgs),
    /// Run a network scenario file and print its report.
    Netsim { scenario: PathBuf },
    /// Qubit count for a k-step network simulation.
    Resources {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum ChannelCmd {
    /// Serialize a named channel.
    Build(ChannelSource),
    /// Print another representation of a channel file.
    Convert {
        channel: PathBuf,
        #[arg(long, value_enum)]
        to: Representation,
    },
    /// Choi fidelity between two channel files.
    Fidelity { a: PathBuf, b: PathBuf },
    /// Check a channel file for complete positivity and trace preservation.
    Validate { channel: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Representation {
    Choi,
    Kraus,
    Superop,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DilateMode {
    Ancilla,
    Qudit,
}

#[derive(Args)]
struct ChannelSource {
    /// Factory name, e.g. amplitude_damping, depolarizing, dephasing.
    #[arg(long, conflicts_with = "channel")]
    name: Option<String>,
    /// Channel file instead of a factory.
    #[arg(long)]
    channel: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_enum)]
    figure: Figure,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Nelder–Mead evaluations per start.
    #[arg(long)]
    budget: Option<usize>,
    /// Random restarts per optimization.
    #[arg(long)]
    restarts: Option<usize>,
    /// Hardware strength for fig6a (1 disables the noise).
    #[arg(long)]
    hw_q: Option<f64>,
}

/// Contents of `--config`; command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    jobs: Option<usize>,
    grid: Option<Grid>,
    budget: Option<usize>,
    restarts: Option<usize>,
}

struct Context {
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    file: FileConfig,
}

impl Context {
    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn json_only(&self, what: &str) -> Result<(), CliError> {
        match self.format {
            Some(Format::Csv) => Err(CliError::Config(format!("{what} output is JSON only"))),
            _ => Ok(()),
        }
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        io::emit(self.out(), &io::to_json(value)?)
    }

    fn emit_table(&self, t: &Table, default: Format) -> Result<(), CliError> {
        match self.format.unwrap_or(default) {
            Format::Csv => io::emit(self.out(), &t.to_csv()),
            Format::Json => self.emit_json(&t.to_json()),
        }
    }
}

fn load_channel(path: &Path) -> Result<Channel, CliError> {
    let json: ChannelJson = io::read_config(path)?;
    Ok(json.to_channel()?)
}

impl ChannelSource {
    fn spec(&self) -> Option<ChannelSpec> {
        let name = self.name.as_ref()?;
        let mut params = Vec::new();
        for (k, v) in [("p", self.p), ("q", self.q), ("gamma", self.gamma), ("dim", self.dim.map(|d| d as f64))] {
            if let Some(v) = v {
                params.push((k, v));
            }
        }
        Some(ChannelSpec::new(name, &params))
    }

    fn resolve(&self) -> Result<Channel, CliError> {
        match (&self.channel, self.spec()) {
            (Some(path), _) => load_channel(path),
            (None, Some(spec)) => Ok(spec.build()?),
            (None, None) => Err(CliError::Config("give either --name or --channel".into())),
        }
    }
}

fn cmd_channel(ctx: &Context, cmd: &ChannelCmd) -> Result<(), CliError> {
    ctx.json_only("channel")?;
    match cmd {
        ChannelCmd::Build(src) => ctx.emit_json(&src.resolve()?.to_json()),
        ChannelCmd::Convert { channel, to } => {
            let ch = load_channel(channel)?;
            match to {
                Representation::Choi => ctx.emit_json(&ch.to_json()),
                Representation::Kraus => {
                    let ops: Vec<MatrixJson> = ch.kraus().operators().iter().map(MatrixJson::from_matrix).collect();
                    ctx.emit_json(&json!({"dim_in": ch.dim_in(), "dim_out": ch.dim_out(), "kraus": ops}))
                }
                Representation::Superop => ctx.emit_json(&json!({
                    "dim_in": ch.dim_in(),
                    "dim_out": ch.dim_out(),
                    "vectorization": "row-major",
                    "superop": MatrixJson::from_matrix(ch.superop_matrix()),
                })),
            }
        }
        ChannelCmd::Fidelity { a, b } => {
            let f = choi_fidelity(&load_channel(a)?, &load_channel(b)?)?;
            ctx.emit_json(&json!({ "fidelity": f }))
        }
        ChannelCmd::Validate { channel } => {
            let json: ChannelJson = io::read_config(channel)?;
            let report = json.to_channel_unchecked()?.validate();
            ctx.emit_json(&report)?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Numeric(format!(
                    "not a valid channel: min Choi eigenvalue {:.3e}, trace-preservation residual {:.3e}",
                    report.min_eigenvalue, report.tp_residual
                )))
            }
        }
    }
}

fn cmd_dilate(ctx: &Context, source: &ChannelSource, mode: DilateMode) -> Result<(), CliError> {
    ctx.json_only("dilate")?;
    let ch = source.resolve()?;
    let (overhead, body) = match mode {
        DilateMode::Ancilla => {
            let d = stinespring_dilate(ch.kraus())?;
            (d.overhead(), json!({"mode": "ancilla", "overhead": d.overhead(), "dilation": d.to_json()}))
        }
        DilateMode::Qudit => {
            let r = extended_qudit_routine(ch.kraus())?;
            let j = r.to_json();
            (j.overhead, json!({"mode": "qudit", "overhead": j.overhead, "routine": j}))
        }
    };
    eprintln!("overhead R_n = {overhead:.3}");
    ctx.emit_json(&body)
}

fn cmd_circuit(ctx: &Context, path: &Path, noise: Option<&Path>, samples: Option<usize>) -> Result<(), CliError> {
    ctx.json_only("circuit")?;
    let sample_seed = match (samples, ctx.seed) {
        (Some(_), None) => return Err(CliError::Config("--samples needs an explicit --seed".into())),
        (Some(n), Some(seed)) => Some((n, seed)),
        (None, _) => None,
    };
    let json: CircuitJson = io::read_config(path)?;
    let mut circuit = Circuit::from_json(&json)?;
    if let Some(noise) = noise {
        let cfg: NoiseConfig = io::read_config(noise)?;
        circuit = apply_noise_model(&circuit, &NoiseModel::from_config(&cfg)?)?;
    }
    let result = extract_channel(&circuit)?;
    let branches: Vec<_> = result
        .branch_log
        .iter()
        .map(|(record, p)| json!({"record": record, "probability": p}))
        .collect();
    let mut body = json!({"channel": result.channel.to_json(), "branches": branches});
    if let Some((n, seed)) = sample_seed {
        let weights: Vec<f64> = result.branch_log.iter().map(|(_, p)| p.max(0.0)).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| CliError::Config(format!("circuit has no measurement records to sample: {e}")))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let drawn: Vec<_> = (0..n).map(|_| &result.branch_log[dist.sample(&mut rng)].0).collect();
        body["samples"] = json!(drawn);
        body["seed"] = json!(seed);
    }
    ctx.emit_json(&body)
}

fn cmd_tailor(ctx: &Context, path: &Path) -> Result<(), CliError> {
    ctx.json_only("tailor")?;
    let mut job: TailoringJob = io::read_config(path)?;
    if let Some(seed) = ctx.seed.or(ctx.file.seed) {
        job.set_seed(seed);
    }
    let recipe = job.run()?;
    if !recipe.achieved_fidelity.is_finite() {
        return Err(CliError::Numeric("optimizer returned a non-finite fidelity".into()));
    }
    log::info!("achieved fidelity {:.12}, converged {}", recipe.achieved_fidelity, recipe.converged);
    ctx.emit_json(&recipe)
}

fn cmd_figures(ctx: &Context, args: &FigureArgs) -> Result<(), CliError> {
    let base = ctx.file.grid.unwrap_or_else(|| args.figure.default_grid());
    let grid = Grid {
        from: args.from.unwrap_or(base.from),
        to: args.to.unwrap_or(base.to),
        points: args.points.unwrap_or(base.points),
    };
    let defaults = NelderMeadOptions::default();
    let optimizer = NelderMeadOptions {
        max_evals: args.budget.or(ctx.file.budget).unwrap_or(defaults.max_evals),
        restarts: args.restarts.or(ctx.file.restarts).unwrap_or(defaults.restarts),
        seed: ctx.seed.or(ctx.file.seed).unwrap_or(defaults.seed),
        ..defaults
    };
    if optimizer.max_evals == 0 {
        return Err(CliError::Config("--budget must be positive".into()));
    }
    log::info!("{:?}: {} points from {} to {}", args.figure, grid.points, grid.from, grid.to);
    let table = figures::sweep(args.figure, &SweepSettings { grid, optimizer, hw_q: args.hw_q })?;
    ctx.emit_table(&table, Format::Csv)
}

fn cmd_netsim(ctx: &Context, path: &Path) -> Result<(), CliError> {
    ctx.json_only("netsim")?;
    let scenario: NetworkScenario = io::read_config(path)?;
    let outcome = run_scenario(&scenario)?;
    ctx.emit_json(&outcome.report)
}

fn cmd_resources(ctx: &Context, n: usize, m: usize, k: usize) -> Result<(), CliError> {
    let r = resource_estimate(n, m, k)?;
    let t = Table {
        header: vec!["n", "m", "k", "active", "qubits_required"],
        rows: vec![vec![n as f64, m as f64, k as f64, r.active as f64, r.qubits_required as f64]],
    };
    match ctx.format.unwrap_or(Format::Json) {
        Format::Json => ctx.emit_json(&r),
        Format::Csv => ctx.emit_table(&t, Format::Csv),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file: FileConfig = match &cli.config {
        Some(path) => io::read_config(path)?,
        None => FileConfig::default(),
    };
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let ctx = Context {
        seed: cli.seed.or(file.seed),
        out: cli.out.clone().or_else(|| file.out.clone()),
        format: cli.format.or(file.format),
        file,
    };
    match &cli.command {
        Command::Channel(cmd) => cmd_channel(&ctx, cmd),
        Command::Dilate { source, mode } => cmd_dilate(&ctx, source, *mode),
        Command::Circuit { circuit, noise, samples } => cmd_circuit(&ctx, circuit, noise.as_deref(), *samples),
        Command::Tailor { job } => cmd_tailor(&ctx, job),
        Command::Figures(args) => cmd_figures(&ctx, args),
        Command::Netsim { scenario } => cmd_netsim(&ctx, scenario),
        Command::Resources { n, m, k } => cmd_resources(&ctx, *n, *m, *k),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHANNEL_FORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
