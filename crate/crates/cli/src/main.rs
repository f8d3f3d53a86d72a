//! `wavecast`: predict, rank and profile-plan DNN training iterations across GPUs.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Report schema for `--format json` output of `predict` and `rank`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Marks an error as a broken internal invariant (exit code 2) rather than bad input.
#[derive(Debug)]
pub struct Internal(pub String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for Internal {}

#[derive(Parser, Debug)]
#[command(
    name = "wavecast",
    version,
    about = "Predict DNN training iteration time on GPUs you do not have"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// GPU registry TOML file [default: the bundled registry]
    #[arg(long, global = true, env = "WAVECAST_REGISTRY")]
    pub registry: Option<PathBuf>,
    /// Directory of trained `<op>.wcm` models
    #[arg(long, global = true, env = "WAVECAST_MODELS")]
    pub models: Option<PathBuf>,
    /// Kernel metrics sidecar JSON; metrics inside the trace take precedence
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Keep wave ceilings when scaling (default: the simplified form)
    #[arg(long, global = true)]
    pub exact: bool,
    /// Percentile of kernel times at or above which kernels are worth profiling
    #[arg(long, global = true, default_value_t = wavecast::trace::DEFAULT_PERCENTILE)]
    pub percentile: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Wave-scale kernel-varying operations that have no model, with a warning
    #[arg(long, global = true)]
    pub fallback_wave_scaling: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Throughput,
    Cost,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Resnet,
    Lstm,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageArg {
    EveryGpu,
    RoundRobin,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetArg {
    Linear,
    Log,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputArg {
    Identity,
    Log1p,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    All,
    Train,
    Test,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Predict a trace's iteration time on one or more destination GPUs
    Predict {
        trace: PathBuf,
        /// Destination GPU names, reported in the order given
        #[arg(required = true)]
        dest: Vec<String>,
    },
    /// Rank destination GPUs by predicted throughput or cost-normalized throughput
    Rank {
        trace: PathBuf,
        #[arg(required = true)]
        gpus: Vec<String>,
        #[arg(long, value_enum, default_value_t = Metric::Throughput)]
        metric: Metric,
    },
    /// List the kernels worth collecting metrics for (the profiling plan)
    Plan { trace: PathBuf },
    /// Generate an oracle dataset for one kernel-varying operation
    DatasetGen {
        #[arg(long)]
        op: wavecast::OperationKind,
        /// Number of sampled configurations
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// GPUs to measure on [default: every registry GPU]
        #[arg(long, value_delimiter = ',')]
        gpus: Vec<String>,
        #[arg(long, value_enum, default_value_t = CoverageArg::EveryGpu)]
        coverage: CoverageArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train a predictor on a dataset, printing per-epoch MAPE
    MlpTrain {
        dataset: PathBuf,
        /// Output model file [default: <models>/<op>.wcm]
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        layers: usize,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        #[arg(long, default_value_t = 80)]
        epochs: usize,
        #[arg(long, default_value_t = 512)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = TargetArg::Linear)]
        target: TargetArg,
        #[arg(long, value_enum, default_value_t = InputArg::Identity)]
        inputs: InputArg,
    },
    /// Report a saved model's MAPE on a dataset
    MlpEval {
        model: PathBuf,
        dataset: PathBuf,
        /// Which side of the training split (rebuilt from the model's seed) to score
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
    },
    /// Resident blocks per SM, wave size and the limiting resource
    Occupancy {
        #[arg(long)]
        gpu: String,
        #[arg(long)]
        threads: u32,
        #[arg(long, default_value_t = 1)]
        blocks: u64,
        #[arg(long, default_value_t = 0)]
        registers: u32,
        #[arg(long, default_value_t = 0)]
        shared_mem: u32,
    },
    /// Arithmetic intensity, ridge point and gamma for a kernel on a GPU
    Gamma {
        #[arg(long)]
        flops: f64,
        #[arg(long)]
        bytes: f64,
        #[arg(long)]
        gpu: String,
    },
    /// Synthesize a trace from a bundled model template using the analytic oracle
    Synth {
        #[arg(long, value_enum)]
        template: Template,
        #[arg(long)]
        origin: String,
        #[arg(long, default_value_t = 32)]
        batch: u32,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Fit iteration time against batch size and extrapolate
    Extrapolate {
        /// Observations as `batch:time_ms`
        #[arg(long = "point", required = true, value_parser = parse_point)]
        points: Vec<(f64, f64)>,
        #[arg(long)]
        target: f64,
    },
    /// List registry GPUs
    Gpus,
    /// Print the JSON schema of prediction reports
    Schema,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (b, t) = s.split_once(':').ok_or("expected batch:time_ms")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(b)?, parse(t)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            if e.downcast_ref::<Internal>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("16: 2.5"), Ok((16.0, 2.5)));
        assert!(parse_point("16").is_err());
        assert!(parse_point("a:1").is_err());
    }

    #[test]
    fn schema_is_json() {
        let v: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert_eq!(
            v["properties"]["schema_version"]["const"],
            render::REPORT_SCHEMA_VERSION
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
