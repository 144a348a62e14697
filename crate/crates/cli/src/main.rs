//! `peercert`: drive exams on the ledger service, run property experiments,
//! calibrate payouts, and verify event logs.
//!
//! Exit codes: 0 on success, 1 when a verdict or operation fails, 2 on
//! usage or configuration errors.

mod exam;

use clap::{Parser, Subcommand, ValueEnum};
use peercert_client::api::{CalibrateRequest, PropertiesRequest};
use peercert_client::Client;
use peercert_core::config::{CheckKind, RunConfig};
use peercert_core::ledger::EventLog;
use peercert_core::sim::ConditioningMode;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "peercert", version, about = "Peer-graded exams with probe-calibrated scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Certificate viewing fee in micro-tokens.
        #[arg(long, default_value_t = 1_000_000)]
        viewer_fee: u64,
    },
    /// Drive one exam end-to-end and write scores.csv, payout.json and
    /// events.log.
    RunExam {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Existing service to run against; spawns an in-process one when
        /// absent.
        #[arg(long)]
        server: Option<String>,
    },
    /// Run the property harness and write samples.csv and verdicts.json.
    Properties {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = CheckArg::All)]
        check: CheckArg,
        /// Overrides `properties.mode` from the config.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        server: Option<String>,
    },
    /// Calibrate the payout scale and write calibration.json.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        server: Option<String>,
    },
    /// Re-hash an event log and check its chain.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
    /// Read service state.
    Query {
        #[arg(long)]
        server: String,
        #[command(subcommand)]
        what: QueryCmd,
    },
}

#[derive(Subcommand)]
enum QueryCmd {
    Wallet { user: String },
    Exam { id: u32 },
    Chain,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CheckArg {
    Epbi,
    Eprm,
    Pointwise,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "own-noise")]
    OwnNoise,
    #[value(name = "own-noise-y")]
    OwnNoiseY,
}

impl From<ModeArg> for ConditioningMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::OwnNoise => ConditioningMode::OwnNoise,
            ModeArg::OwnNoiseY => ConditioningMode::OwnNoiseAndTruth,
        }
    }
}

/// Failures that should exit 1 (operations, verdicts) vs 2 (usage/config).
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
    fn failure(msg: impl Into<String>) -> Self {
        CliError::Failure(msg.into())
    }
}

impl From<peercert_client::ClientError> for CliError {
    fn from(e: peercert_client::ClientError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::from_path(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Connect to `server`, or spawn an in-process service on an ephemeral
/// port and connect to that.
async fn connect(server: &Option<String>, viewer_fee: u64) -> Result<Client, CliError> {
    let client = match server {
        Some(url) => Client::new(url.clone()),
        None => {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
            let addr = listener.local_addr()?;
            tokio::spawn(async move {
                if let Err(e) = peercert_service::serve(listener, viewer_fee).await {
                    eprintln!("embedded service stopped: {e}");
                }
            });
            Client::new(format!("http://{addr}"))
        }
    };
    client
        .healthz()
        .await
        .map_err(|e| CliError::failure(format!("service unreachable: {e}")))?;
    Ok(client)
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes)?;
    Ok(path)
}

async fn cmd_properties(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    check: CheckArg,
    mode: Option<ModeArg>,
    server: &Option<String>,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let mut props = cfg
        .properties
        .clone()
        .ok_or_else(|| CliError::usage("config has no [properties] section"))?;
    if check != CheckArg::All {
        let keep = match check {
            CheckArg::Epbi => CheckKind::Epbi,
            CheckArg::Eprm => CheckKind::Eprm,
            CheckArg::Pointwise => CheckKind::Pointwise,
            CheckArg::All => unreachable!(),
        };
        props.checks.retain(|c| *c == keep);
        if props.checks.is_empty() {
            return Err(CliError::usage(format!(
                "--check {keep:?} is not enabled in the config"
            )));
        }
    }
    if let Some(m) = mode {
        props.mode = m.into();
    }
    let seed = seed.unwrap_or(cfg.run.seed);

    let client = connect(server, cfg.fees.viewer_fee).await?;
    let resp = client
        .run_properties(&PropertiesRequest {
            exam: cfg.exam_config(),
            properties: props,
            seed,
        })
        .await?;

    let csv = write_out(out, "samples.csv", resp.samples_csv.as_bytes())?;
    let json = write_out(out, "verdicts.json", resp.verdicts_json.as_bytes())?;
    for report in &resp.reports {
        for v in &report.verdicts {
            println!(
                "{:<26} observed {:>12.6e}  allowed {:>12.6e}  {}",
                v.name,
                v.observed,
                v.allowed,
                if v.passed { "pass" } else { "FAIL" }
            );
        }
    }
    println!("wrote {} and {}", csv.display(), json.display());
    if resp.passed {
        Ok(())
    } else {
        Err(CliError::failure("one or more verdicts failed"))
    }
}

async fn cmd_calibrate(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    server: &Option<String>,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let calibration = cfg
        .calibration
        .ok_or_else(|| CliError::usage("config has no [calibration] section"))?;
    let seed = seed.unwrap_or(cfg.run.seed);

    let client = connect(server, cfg.fees.viewer_fee).await?;
    let report = client
        .run_calibration(&CalibrateRequest {
            exam: cfg.exam_config(),
            calibration,
            seed,
        })
        .await?;

    let body = format!("{}\n", serde_json::to_string_pretty(&report).unwrap());
    let path = write_out(out, "calibration.json", body.as_bytes())?;
    println!(
        "alpha {:.6} (expected payout {:.3} +/- {:.3} over {} samples)",
        report.alpha, report.estimate, report.ci_halfwidth, report.samples
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_verify(log_path: &Path) -> Result<(), CliError> {
    let bytes = std::fs::read(log_path)
        .map_err(|e| CliError::usage(format!("{}: {e}", log_path.display())))?;
    let log = EventLog::from_bytes(&bytes)
        .map_err(|e| CliError::failure(format!("malformed log: {e}")))?;
    log.verify()
        .map_err(|e| CliError::failure(format!("chain broken: {e}")))?;
    println!("ok: {} records, chain intact", log.len());
    Ok(())
}

async fn cmd_query(server: &str, what: &QueryCmd) -> Result<(), CliError> {
    let client = Client::new(server.to_string());
    let value = match what {
        QueryCmd::Wallet { user } => serde_json::to_value(client.wallet(user).await?).unwrap(),
        QueryCmd::Exam { id } => serde_json::to_value(client.exam(*id).await?).unwrap(),
        QueryCmd::Chain => serde_json::to_value(client.chain_verify().await?).unwrap(),
    };
    println!("{}", serde_json::to_string_pretty(&value).unwrap());
    Ok(())
}

async fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Serve { addr, viewer_fee } => {
            let listener = tokio::net::TcpListener::bind(addr)
                .await
                .map_err(|e| CliError::usage(format!("cannot bind {addr}: {e}")))?;
            println!("listening on {addr}");
            peercert_service::serve(listener, *viewer_fee)
                .await
                .map_err(|e| CliError::failure(e.to_string()))
        }
        Command::RunExam {
            config,
            seed,
            out,
            server,
        } => {
            let cfg = load_config(config)?;
            let seed = seed.unwrap_or(cfg.run.seed);
            let client = connect(server, cfg.fees.viewer_fee).await?;
            exam::run_exam(&client, &cfg, seed, out).await
        }
        Command::Properties {
            config,
            seed,
            out,
            check,
            mode,
            server,
        } => cmd_properties(config, *seed, out, *check, *mode, server).await,
        Command::Calibrate {
            config,
            seed,
            out,
            server,
        } => cmd_calibrate(config, *seed, out, server).await,
        Command::Verify { log } => cmd_verify(log),
        Command::Query { server, what } => cmd_query(server, what).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_max_level(tracing_subscriber::filter::LevelFilter::WARN)
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
