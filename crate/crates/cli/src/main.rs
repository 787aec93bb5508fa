//! `vault`: run the service, simulate batches, replay and inspect logs.
//!
//! Exit codes: 0 success, 1 runtime error or failed internal assertion,
//! 2 configuration or usage error, 3 replay verification failure.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vault_core::simulator::{run_batch, BatchCell, UserModel, DEFAULT_STEP_CAP};
use vault_core::{CodeSession, Level, LogRecord, ReplayError, SessionConfig, Signal};
use vault_service::ServiceConfig;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "vault", version, about = "Calibration-free code entry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket service.
    Serve {
        /// TOML config file (same schema the service documents).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config and VAULT_PORT; 0 picks a free port.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run simulated users against sessions and write metrics.
    Simulate(SimulateArgs),
    /// Rebuild a session from its JSONL log and print the final state.
    Replay {
        log: PathBuf,
        /// Recompute every step and compare patterns, state hashes and events.
        #[arg(long)]
        verify: bool,
    },
    /// Print per-step engine diagnostics for a logged session.
    Inspect { log: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UserArg {
    Gaussian,
    Button,
    Random,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// 1 (known meanings), 4 (unknown buttons) or 5 (free clicks).
    #[arg(long, default_value_t = 5)]
    level: u8,
    /// Simulated user; defaults to gaussian on level 5 and button otherwise.
    #[arg(long, value_enum)]
    user: Option<UserArg>,
    /// Comma-separated click noise levels (gaussian user).
    #[arg(long, value_delimiter = ',', default_value = "0.25")]
    sigma: Vec<f64>,
    /// Comma-separated press error rates (button user).
    #[arg(long = "p-err", value_delimiter = ',', default_value = "0")]
    p_err: Vec<f64>,
    /// Also run every cell with a user who privately swapped meanings.
    #[arg(long)]
    flipped: bool,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Master seed; random (and printed) when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Code the users enter, as four digits.
    #[arg(long, default_value = "3141")]
    code: String,
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    step_cap: usize,
    /// Engine parameters are read from this service config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    min_steps: Option<usize>,
    /// Disable decoder reuse across digits.
    #[arg(long)]
    no_transfer: bool,
    /// Directory receiving metrics.csv and metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_code(text: &str) -> Result<Vec<usize>, String> {
    let digits: Option<Vec<usize>> = text.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect();
    match digits {
        Some(d) if d.len() == vault_core::session::CODE_LENGTH => Ok(d),
        _ => Err(format!("expected {} decimal digits", vault_core::session::CODE_LENGTH)),
    }
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig, Failure> {
    let mut config = match path {
        Some(p) => ServiceConfig::load(p).map_err(|e| fail(EXIT_CONFIG, e))?,
        None => ServiceConfig::default(),
    };
    config
        .apply_env(|k| std::env::var(k).ok())
        .map_err(|e| fail(EXIT_CONFIG, e))?;
    Ok(config)
}

fn serve(config: Option<PathBuf>, port: Option<u16>, bind: Option<String>) -> Result<(), Failure> {
    let mut config = load_config(config.as_deref())?;
    if let Some(port) = port {
        config.port = port;
    }
    if let Some(bind) = bind {
        config.bind = bind;
    }
    config.validate().map_err(|e| fail(EXIT_CONFIG, e))?;
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| fail(EXIT_RUNTIME, e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port))
            .await
            .map_err(|e| fail(EXIT_RUNTIME, format!("cannot bind {}:{}: {e}", config.bind, config.port)))?;
        let addr = listener.local_addr().map_err(|e| fail(EXIT_RUNTIME, e))?;
        println!("config: {config:?}");
        match config.seed_policy {
            vault_service::SeedPolicy::Fixed(seed) => println!("seed: {seed}"),
            vault_service::SeedPolicy::Random => println!("seed: random per session (recorded in each log)"),
        }
        println!("listening on http://{addr}");
        vault_service::serve(config, listener).await.map_err(|e| fail(EXIT_RUNTIME, e))
    })
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let level = Level::try_from(args.level).map_err(|e| fail(EXIT_CONFIG, e))?;
    let code = parse_code(&args.code).map_err(|e| fail(EXIT_CONFIG, format!("--code: {e}")))?;
    let file = load_config(args.config.as_deref())?;
    let mut engine = file.engine;
    if let Some(beta) = args.beta {
        engine.beta = beta;
    }
    if let Some(theta) = args.theta {
        engine.theta = theta;
    }
    if let Some(m) = args.min_steps {
        engine.min_steps = m;
    }
    if args.trials == 0 {
        return Err(fail(EXIT_CONFIG, "--trials must be at least 1"));
    }
    let user = args.user.unwrap_or(if level == Level::UnknownContinuous {
        UserArg::Gaussian
    } else {
        UserArg::Button
    });
    let base: Vec<UserModel> = match user {
        UserArg::Gaussian => args.sigma.iter().map(|&s| UserModel::gaussian(s)).collect(),
        UserArg::Button => args.p_err.iter().map(|&p| UserModel::button(p)).collect(),
        UserArg::Random => vec![UserModel::random_clicker()],
    };
    let flips: &[bool] = if args.flipped { &[false, true] } else { &[false] };
    let mut config = SessionConfig::new(level, code, 0);
    config.engine = engine;
    config.transfer = !args.no_transfer;
    config.validate().map_err(|e| fail(EXIT_CONFIG, e))?;
    let mut cells = Vec::new();
    for user in &base {
        user.validate().map_err(|e| fail(EXIT_CONFIG, e))?;
        if user.is_continuous() != (level == Level::UnknownContinuous) {
            return Err(fail(EXIT_CONFIG, format!("this user model cannot play level {}", args.level)));
        }
        for &flipped in flips {
            cells.push(BatchCell {
                config: config.clone(),
                user: user.clone().flipped(flipped),
            });
        }
    }

    let seed = args.seed.unwrap_or_else(rand::random);
    println!("seed: {seed}");
    let report = run_batch(&cells, args.trials, seed, args.step_cap).map_err(|e| fail(EXIT_RUNTIME, e))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_else(|| "-".into());
    println!("level  sigma  p_err  flipped  open_rate  median_steps  wrong_rate  timeout_rate");
    for c in &report.cells {
        println!(
            "{:<6} {:<6} {:<6} {:<8} {:<10.3} {:<13} {:<11.4} {:.3}",
            c.level,
            fmt(c.sigma),
            fmt(c.p_err),
            c.flipped,
            c.open_rate,
            format!(
                "{}/{}/{}/{}",
                fmt(c.median_steps_d1),
                fmt(c.median_steps_d2),
                fmt(c.median_steps_d3),
                fmt(c.median_steps_d4)
            ),
            c.wrong_accept_rate,
            c.timeout_rate,
        );
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| fail(EXIT_RUNTIME, e))?;
        let csv = report.to_csv().map_err(|e| fail(EXIT_RUNTIME, e))?;
        std::fs::write(out.join("metrics.csv"), csv).map_err(|e| fail(EXIT_RUNTIME, e))?;
        std::fs::write(out.join("metrics.json"), report.to_json()).map_err(|e| fail(EXIT_RUNTIME, e))?;
        println!("wrote {}", out.display());
    }
    match report.violations() {
        0 => Ok(()),
        n => Err(fail(EXIT_RUNTIME, format!("{n} internal assertion failures"))),
    }
}

fn replay(path: &Path, verify: bool) -> Result<(), Failure> {
    let file = File::open(path).map_err(|e| fail(EXIT_RUNTIME, format!("{}: {e}", path.display())))?;
    let replayed = vault_core::replay(BufReader::new(file), verify).map_err(|e| {
        let code = match e {
            ReplayError::Divergence { .. } => EXIT_VERIFY,
            _ if verify => EXIT_VERIFY,
            _ => EXIT_RUNTIME,
        };
        fail(code, format!("{}: {e}", path.display()))
    })?;
    let s = &replayed.session;
    println!("status: {:?}", s.status());
    println!("accepted digits: {}", s.accepted().len());
    println!("steps: {}", s.step_index());
    println!("steps per digit: {:?}", s.steps_per_digit());
    println!("seed: {}", s.config().seed);
    println!("state hash: {}", s.state_hash());
    if replayed.torn_tail {
        println!("note: incomplete final line ignored");
    }
    if verify {
        println!("verified: {} records, {} signals", replayed.records, replayed.signals);
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let file = File::open(path).map_err(|e| fail(EXIT_RUNTIME, format!("{}: {e}", path.display())))?;
    let mut session: Option<CodeSession> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| fail(EXIT_RUNTIME, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| fail(EXIT_RUNTIME, format!("{}: line {}: {reason}", path.display(), i + 1));
        let record = LogRecord::parse(&line).map_err(|e| bad(e.to_string()))?;
        match (&mut session, record.kind.as_str()) {
            (None, "session_start") => {
                let mut config: SessionConfig = serde_json::from_value(record.payload).map_err(|e| bad(e.to_string()))?;
                config.seed = record.seed.ok_or_else(|| bad("session_start carries no seed".into()))?;
                println!(
                    "level {} seed {} beta {} theta {} min_steps {} transfer {}",
                    config.level.number(),
                    config.seed,
                    config.engine.beta,
                    config.engine.theta,
                    config.engine.min_steps,
                    config.transfer
                );
                println!("{:>5} {:<12} {:>8} {:>6} {:>9} {:>11} {:>7}", "t", "stage", "accepted", "top", "weight", "unresolved", "loo");
                session = Some(CodeSession::start(config).map_err(|e| bad(e.to_string()))?.0);
            }
            (None, _) => return Err(bad("first record must be session_start".into())),
            (Some(s), "signal") => {
                let signal: Signal = serde_json::from_value(record.payload["signal"].clone()).map_err(|e| bad(e.to_string()))?;
                let stage = s.stage_name();
                let outcome = s.step(&signal).map_err(|e| bad(e.to_string()))?;
                let weights = s.weights();
                let (top, w) = weights
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(d, w)| (d, *w))
                    .unwrap_or((0, 0.0));
                let loo = s
                    .engine()
                    .and_then(|e| e.scores().ok())
                    .map(|sc| format!("{:.3}", sc[top]))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:>5} {:<12} {:>8} {:>6} {:>9.4} {:>11} {:>7}",
                    s.step_index(),
                    stage,
                    s.accepted().len(),
                    top,
                    w,
                    s.planner().unresolved().len(),
                    loo
                );
                for event in &outcome.events {
                    println!("      -> {}", serde_json::to_string(event).expect("event serializes"));
                }
            }
            (Some(_), kind) => println!("      [{kind}]"),
        }
    }
    let s = session.ok_or_else(|| fail(EXIT_RUNTIME, format!("{}: log is empty", path.display())))?;
    println!("status: {:?} after {} steps", s.status(), s.step_index());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config, port, bind } => serve(config, port, bind),
        Command::Simulate(args) => simulate(args),
        Command::Replay { log, verify } => replay(&log, verify),
        Command::Inspect { log } => inspect(&log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
