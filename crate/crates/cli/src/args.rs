use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Build, serve and evaluate digital twins of schema-described devices.
#[derive(Debug, Parser)]
#[command(name = "twinkit", version, propagate_version = true)]
pub struct Cli {
    /// TOML settings file; keys mirror flag names, one table per subcommand.
    #[arg(long, global = true, env = "TWINKIT_SETTINGS", value_name = "TOML")]
    pub settings: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probe a device with random configurations and record its responses.
    GenData(GenDataArgs),
    /// Turn a raw dataset into a feature matrix plus transform manifest.
    Preprocess(PreprocessArgs),
    /// Meta-train a base model.
    Train(TrainArgs),
    /// Adapt a trained model to another device or schema version.
    Adapt(TrainArgs),
    /// Create twin state files and a fleet file for a batch of serials.
    BuildTwins(BuildTwinsArgs),
    /// Serve a fleet of twins over HTTP.
    ServeFleet(ServeFleetArgs),
    /// Serve emulated reference devices over HTTP.
    ServeRefdev(ServeRefdevArgs),
    /// Paired fidelity run of one twin against one device.
    Evaluate(EvaluateArgs),
    /// Fidelity of growing fleet batches against one device.
    BatchEval(BatchEvalArgs),
    /// Recommend a shot method for a scenario.
    Recommend(RecommendArgs),
}

/// In-process emulated device used when no device URL is given.
#[derive(Debug, Clone, Args)]
pub struct EmulatorArgs {
    /// Fault rate of the emulated device.
    #[arg(long)]
    pub fault_rate: Option<f64>,
    /// `region` or `stochastic`.
    #[arg(long)]
    pub fault_mode: Option<String>,
    /// Emulated response latency: `0`, `25` or `10..40` (ms).
    #[arg(long)]
    pub latency: Option<String>,
    /// Emulator identity seed; fixes its fault region. Defaults to 0.
    #[arg(long)]
    pub device_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Schema file, or a builtin name such as `pillmate-v1`.
    #[arg(long)]
    pub schema: Option<String>,
    /// Base URL of the device; omitted means an in-process emulator.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Device serial number (default: schema prefix + 0001).
    #[arg(long)]
    pub serial: Option<String>,
    #[arg(long)]
    pub max_requests: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub max_duration: Option<f64>,
    #[arg(long)]
    pub delay_ms: Option<u64>,
    /// Probability of corrupting each property value.
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub emulator: EmulatorArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw dataset CSV.
    #[arg(long = "in", value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// Schema file or builtin name (default: from the dataset sidecar).
    #[arg(long)]
    pub schema: Option<String>,
    /// Processed CSV; the manifest goes to `<out stem>.manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub include_timing: bool,
    #[arg(long)]
    pub low_variance: Option<f64>,
    #[arg(long)]
    pub high_variance: Option<f64>,
    /// Leave numerics on their raw scale.
    #[arg(long)]
    pub no_scale: bool,
    /// Drop the out-of-range flag columns.
    #[arg(long)]
    pub no_range_flags: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data: processed CSV with its manifest, raw CSV, or a
    /// calibration log (`.jsonl`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Schema for raw CSV or calibration logs.
    #[arg(long)]
    pub schema: Option<String>,
    /// Held-out raw CSV scored after training.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Model to adapt (adapt only).
    #[arg(long)]
    pub base_model: Option<PathBuf>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub task_size: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub smoothing_window: Option<usize>,
    #[arg(long)]
    pub meta_lr: Option<f64>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub adaptation_steps: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub second_order: bool,
    /// Evaluate tasks on several threads (same result as serial).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildTwinsArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Serial prefix (default: the schema's).
    #[arg(long)]
    pub prefix: Option<String>,
    /// First serial number.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, env = "TWINKIT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// `off`, `shadow` or `authoritative`.
    #[arg(long)]
    pub calibration: Option<String>,
    /// Device base URL used for calibration.
    #[arg(long)]
    pub device_endpoint: Option<String>,
    #[arg(long)]
    pub log_agreements: bool,
    /// Fleet file to write (default: <data-dir>/fleet.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeFleetArgs {
    /// Fleet file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Twins activated per wave.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, env = "TWINKIT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeRefdevArgs {
    #[arg(long)]
    pub schema: Option<String>,
    /// Serial of the first device (default: schema prefix + 0001).
    #[arg(long)]
    pub serial: Option<String>,
    /// Number of devices; serials count up from --serial.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub emulator: EmulatorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FidelityArgs {
    #[arg(long)]
    pub p_out: Option<f64>,
    /// Compare status codes only.
    #[arg(long)]
    pub status_only: bool,
    /// One-sided test that the twin scores exceed the device's.
    #[arg(long)]
    pub one_sided: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub schema: Option<String>,
    /// Base URL serving the twin; omitted means an in-process twin of --model.
    #[arg(long)]
    pub twin_url: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Base URL of the device; omitted means an in-process emulator.
    #[arg(long)]
    pub device_url: Option<String>,
    #[arg(long)]
    pub serial: Option<String>,
    /// Device serial (default: --serial).
    #[arg(long)]
    pub device_serial: Option<String>,
    #[arg(long)]
    pub requests: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for report.json and scores.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub fidelity: FidelityArgs,
    #[command(flatten)]
    pub emulator: EmulatorArgs,
}

#[derive(Debug, Args)]
pub struct BatchEvalArgs {
    /// Fleet file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Batch sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub requests_per_twin: Option<usize>,
    /// Concurrent fidelity clients.
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub device_url: Option<String>,
    #[arg(long)]
    pub device_serial: Option<String>,
    #[arg(long, env = "TWINKIT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub fidelity: FidelityArgs,
    #[command(flatten)]
    pub emulator: EmulatorArgs,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// `low`, `medium` or `high`.
    #[arg(long)]
    pub features: Option<String>,
    /// `train`, `device-adapt` or `version-adapt`.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub time_constrained: bool,
    /// `minor` or `major` (version-adapt only).
    #[arg(long)]
    pub upgrade: Option<String>,
}
