//! `aivi`: compute, validate, explore and serve the AI vulnerability index.
//!
//! Exit status: 0 success, 1 data/model/computation failure, 2 usage error.
//! Only the requested artifact goes to stdout; diagnostics go to stderr.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aivi_core::coverage::CoverageStatus;
use aivi_core::{
    from_json, index_series, to_canonical_json, validate_dataset, ComputeResult, Dataset, Error,
    IndexModel, Layer, MissingPolicy, Period, Scenario, WeightOverrides,
};
use aivi_service::{
    error_json, sensitivity, AppState, SensitivityRequest, ServiceConfig, DEFAULT_SAMPLE_CAP,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aivi", version, about = "AI vulnerability index toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the index for one period.
    Compute {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        output: Output,
    },
    /// Report which components have usable data; exits 1 if any are missing
    /// at the selected period.
    Validate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo over the weight simplex, plus an optional tornado run.
    Sensitivity {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = LayerArg::Top)]
        layer: LayerArg,
        /// Dirichlet concentration; 1 is uniform over the simplex.
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
        /// Weight step for the one-at-a-time tornado analysis.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
        max_samples: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        output: Output,
    },
    /// Per-period index and sub-index potentials, ready for plotting.
    Export {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        output: Output,
    },
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, env = "AIVI_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Allowed CORS origin; repeat for several. Any origin when absent.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
        max_samples: u64,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    model: PathBuf,
    /// Observation CSV; repeat to merge several files.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// YYYY or YYYY-Qn; defaults to the latest period in the data.
    #[arg(long)]
    period: Option<Period>,
    /// JSON weight overrides: {"top": {...}, "components": {...}}.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Drop components without data and rescale the remaining weights.
    #[arg(long)]
    allow_missing: bool,
}

#[derive(Args)]
struct Output {
    /// Write the artifact here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayerArg {
    Top,
    Component,
    Both,
}

impl From<LayerArg> for Layer {
    fn from(l: LayerArg) -> Self {
        match l {
            LayerArg::Top => Layer::Top,
            LayerArg::Component => Layer::Component,
            LayerArg::Both => Layer::Both,
        }
    }
}

enum Failure {
    Usage(String),
    Data(Error),
    /// Ran fine, but the result itself is a failure (e.g. validation gaps).
    Reported,
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

struct Loaded {
    model: IndexModel,
    dataset: Dataset,
    scenario: Scenario,
}

fn read(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {what} `{}`: {e}", path.display())))
}

fn load(inputs: &Inputs) -> Result<Loaded, Failure> {
    let model_text = read(&inputs.model, "model")?;
    let data_texts = inputs
        .data
        .iter()
        .map(|p| read(p, "data file").map(|t| (p, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let weights_text = match &inputs.weights {
        Some(p) => Some((p, read(p, "weights file")?)),
        None => None,
    };

    let mut model: IndexModel = aivi_core::parse_model(&model_text)
        .map_err(|e| e.at(inputs.model.display().to_string()))?;
    if inputs.allow_missing {
        model.missing_policy = MissingPolicy::RenormalizeWarn;
    }
    let mut dataset = Dataset::default();
    for (path, text) in data_texts {
        dataset.extend(Dataset::from_csv(&text).map_err(|e| e.at(path.display().to_string()))?);
    }
    let weight_overrides = match weights_text {
        Some((path, text)) => Some(
            from_json::<WeightOverrides>(&text).map_err(|e| e.at(path.display().to_string()))?,
        ),
        None => None,
    };
    Ok(Loaded {
        model,
        dataset,
        scenario: Scenario {
            period: inputs.period,
            weight_overrides,
            ..Scenario::default()
        },
    })
}

fn emit(output: &Output, artifact: &str) -> Result<(), Failure> {
    let result = match &output.out {
        Some(path) => fs::write(path, artifact),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(artifact.as_bytes()).and_then(|_| out.flush())
        }
    };
    result.map_err(|e| Failure::Io(format!("cannot write output: {e}")))
}

fn warn_all(result: &ComputeResult) {
    for w in &result.warnings {
        eprintln!("warning: {}", to_canonical_json(w).trim_end());
    }
}

fn compute_csv(r: &ComputeResult) -> String {
    let mut out = String::from(
        "period,aivi,sub_index,sub_index_weight,potential,component,component_weight,raw,normalized\n",
    );
    let num = |v: f64| serde_json::to_string(&v).expect("finite");
    for s in &r.sub_indexes {
        for c in &s.components {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.period,
                num(r.aivi.get()),
                s.id,
                num(s.weight),
                num(s.potential.get()),
                c.component_id,
                c.weight.map(num).unwrap_or_default(),
                num(c.raw),
                num(c.normalized.get()),
            ));
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Compute {
            inputs,
            format,
            output,
        } => {
            let l = load(&inputs)?;
            let r = aivi_service::compute(&l.model, &l.dataset, &l.scenario)?;
            warn_all(&r);
            let artifact = match format {
                Format::Json => to_canonical_json(&r),
                Format::Csv => compute_csv(&r),
            };
            emit(&output, &artifact)
        }
        Command::Validate {
            inputs,
            format,
            output,
        } => {
            let l = load(&inputs)?;
            let report = validate_dataset(&l.model, &l.dataset);
            let period = l
                .scenario
                .period
                .or_else(|| l.dataset.latest_period())
                .ok_or_else(|| Error::NoData("dataset is empty".into()))?;
            let artifact = match format {
                ReportFormat::Json => to_canonical_json(&report),
                ReportFormat::Text => report.to_text(),
            };
            emit(&output, &artifact)?;
            let failing: Vec<_> = report
                .components
                .iter()
                .filter(|c| {
                    report.status(c, period) != CoverageStatus::Present || c.bounds_error.is_some()
                })
                .collect();
            if failing.is_empty() {
                return Ok(());
            }
            eprintln!(
                "{} component(s) not computable for {period}:",
                failing.len()
            );
            for c in failing {
                eprintln!("  {} ({:?})", c.component_id, report.status(c, period));
            }
            Err(Failure::Reported)
        }
        Command::Sensitivity {
            inputs,
            samples,
            seed,
            layer,
            concentration,
            delta,
            max_samples,
            format,
            output,
        } => {
            let l = load(&inputs)?;
            let request = SensitivityRequest {
                scenario: l.scenario,
                layer: layer.into(),
                samples,
                seed,
                delta,
                concentration: Some(concentration),
            };
            let r = sensitivity(&l.model, &l.dataset, &request, max_samples)?;
            let artifact = match format {
                Format::Json => to_canonical_json(&r),
                Format::Csv => r.report.to_csv(),
            };
            emit(&output, &artifact)
        }
        Command::Export {
            inputs,
            format,
            output,
        } => {
            let l = load(&inputs)?;
            let series = index_series(&l.model, &l.dataset, &l.scenario);
            for (p, reason) in &series.skipped {
                eprintln!("warning: skipped {p}: {reason}");
            }
            let artifact = match format {
                Format::Json => to_canonical_json(&series),
                Format::Csv => series.to_csv(),
            };
            emit(&output, &artifact)
        }
        Command::Serve {
            inputs,
            port,
            host,
            cors_origins,
            max_samples,
        } => {
            let l = load(&inputs)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Failure::Usage(format!("invalid address `{host}:{port}`: {e}")))?;
            let config = ServiceConfig {
                sample_cap: max_samples,
                cors_origins: (!cors_origins.is_empty()).then_some(cors_origins),
            };
            let state = AppState::ready(config, l.model, l.dataset);
            serve(addr, state)
        }
    }
}

fn serve(addr: SocketAddr, state: std::sync::Arc<AppState>) -> Result<(), Failure> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Failure::Io(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Io(format!("cannot bind {addr}: {e}")))?;
        let bound = listener
            .local_addr()
            .map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("aivi: listening on http://{bound}");
        aivi_service::serve(listener, state, aivi_service::ctrl_c())
            .await
            .map_err(|e| Failure::Io(format!("server error: {e}")))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprint!("{}", error_json(e.code(), e.root().to_string(), e.path()));
            ExitCode::from(1)
        }
        Err(Failure::Reported) => ExitCode::from(1),
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
