//! `formation`: run, analyze and serve formation-control scenarios.
//!
//! Analysis subcommands talk to a formation service. Without `--server` an
//! in-process one is started on a loopback port.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use formation_client::{Client, ClientError};
use formation_core::api::{ErrorKind, RunRequest, ScenarioRef};
use formation_core::log::read_log_file;
use formation_core::{load_scenario, MetricsOptions, MotionCommand, Scenario};
use formation_server::{start, LiveOptions, ReplayOptions, RunningServer, ServeError, SessionOptions};
use serde::Serialize;
use tracing::level_filters::LevelFilter;

mod exit {
    pub const NOT_RIGID: u8 = 1;
    pub const INVALID: u8 = 2;
    pub const BROKEN: u8 = 3;
    pub const UNREALIZABLE: u8 = 4;
    pub const IO: u8 = 5;
}

#[derive(Parser)]
#[command(name = "formation", version, about = "Distance-based formation control simulator")]
struct Cli {
    /// Service to use instead of an in-process one, e.g. http://127.0.0.1:8080
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, write its log and print metrics.
    Run(RunArgs),
    /// Classify the rigidity of a scenario's shape.
    CheckRigidity(ScenarioArgs),
    /// Motion parameters realizing a rigid-body command.
    SolveMotion(SolveArgs),
    /// Metrics of a stored log.
    Metrics(MetricsArgs),
    /// Host a live session for viewers on /ws.
    Serve(ServeArgs),
    /// Re-stream a stored log on /ws.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: String,
    /// Where to write the CSV log.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds; overrides the scenario's duration.
    #[arg(long)]
    duration: Option<f64>,
    #[command(flatten)]
    metrics: MetricsFlags,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricsFlags {
    /// Fraction of the run treated as steady state.
    #[arg(long, default_value_t = MetricsOptions::default().tail_fraction)]
    tail_fraction: f64,
    /// Error bound for the settling time, metres.
    #[arg(long, default_value_t = MetricsOptions::default().settle_epsilon)]
    settle_epsilon: f64,
}

impl MetricsFlags {
    fn options(&self) -> MetricsOptions {
        MetricsOptions {
            tail_fraction: self.tail_fraction,
            settle_epsilon: self.settle_epsilon,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: String,
    /// m/s
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    vx: f64,
    /// m/s
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    vy: f64,
    /// rad/s
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    omega: f64,
    /// 1/s
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    scale: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    metrics: MetricsFlags,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct Listen {
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Snapshots per second sent to viewers.
    #[arg(long, default_value_t = 20.0)]
    stream_hz: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "square-1m")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds before the session stops; unbounded by default.
    #[arg(long)]
    duration: Option<f64>,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    #[command(flatten)]
    listen: Listen,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
    /// Scenario the log was recorded from.
    #[arg(long)]
    scenario: String,
    /// Playback speed relative to real time.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[command(flatten)]
    listen: Listen,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = match &e {
            ClientError::Api(a) => match a.error {
                ErrorKind::NotRigid | ErrorKind::UnrealizableMotion => exit::UNREALIZABLE,
                ErrorKind::FormationBroken => exit::BROKEN,
                ErrorKind::ScenarioInvalid | ErrorKind::InvalidLog | ErrorKind::BadRequest | ErrorKind::NotFound => {
                    exit::INVALID
                }
                ErrorKind::NoSession | ErrorKind::Internal => exit::IO,
            },
            _ => exit::IO,
        };
        Failure::new(code, e)
    }
}

impl From<formation_core::Error> for Failure {
    fn from(e: formation_core::Error) -> Self {
        let code = match ErrorKind::of(&e) {
            ErrorKind::Internal => exit::IO,
            _ => exit::INVALID,
        };
        Failure::new(code, e)
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Session(inner) => inner.into(),
            other => Failure::new(exit::IO, other),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        2 => LevelFilter::DEBUG,
        _ => LevelFilter::TRACE,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::IO);
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

async fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Serve(a) => return serve(a).await,
        Command::Replay(a) => return replay(a).await,
        _ => {}
    }
    // Keeps the embedded server alive for the duration of the call.
    let (client, _embedded) = connect(cli.server.as_deref()).await?;
    match cli.command {
        Command::Run(a) => run(&client, a).await,
        Command::CheckRigidity(a) => check_rigidity(&client, a).await,
        Command::SolveMotion(a) => solve_motion(&client, a).await,
        Command::Metrics(a) => metrics(&client, a).await,
        Command::Serve(_) | Command::Replay(_) => unreachable!(),
    }
}

async fn connect(server: Option<&str>) -> Result<(Client, Option<RunningServer>), Failure> {
    if let Some(url) = server {
        return Ok((Client::new(url)?, None));
    }
    let embedded = start(SocketAddr::from(([127, 0, 0, 1], 0)), None).await?;
    let client = Client::new(&embedded.base_url())?;
    Ok((client, Some(embedded)))
}

/// A readable file is sent as text; anything else is taken as a bundled name.
fn scenario_ref(arg: &str) -> Result<ScenarioRef, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::new(exit::IO, format!("{arg}: {e}")))?;
        return Ok(ScenarioRef::Text { text });
    }
    if arg.ends_with(".json") || arg.contains(std::path::MAIN_SEPARATOR) {
        return Err(Failure::new(exit::INVALID, format!("{arg}: no such scenario file")));
    }
    Ok(ScenarioRef::Name(arg.to_string()))
}

fn local_scenario(arg: &str) -> Result<Scenario, Failure> {
    match scenario_ref(arg)? {
        ScenarioRef::Text { text } => Ok(load_scenario(&text)?),
        other => Ok(other.resolve()?),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_json(value: &impl Serialize) {
    emit(&(serde_json::to_string_pretty(value).expect("responses serialize") + "\n"));
}

async fn run(client: &Client, a: RunArgs) -> Outcome {
    let req = RunRequest {
        scenario: scenario_ref(&a.scenario)?,
        seed: a.seed,
        duration: a.duration,
        metrics: a.metrics.options(),
    };
    let resp = client.run(&req).await?;
    std::fs::write(&a.log, &resp.log).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", a.log.display())))?;
    if a.json {
        print_json(&resp.metrics);
        return Ok(0);
    }
    let mut text = format!(
        "scenario digest       {}\nlog                   {}\n",
        resp.scenario_digest,
        a.log.display()
    );
    match resp.metrics {
        Some(m) => text += &m.to_text(),
        None => text += "ticks                 0\n",
    }
    emit(&text);
    Ok(0)
}

async fn check_rigidity(client: &Client, a: ScenarioArgs) -> Outcome {
    let r = client.rigidity(scenario_ref(&a.scenario)?).await?;
    if a.json {
        print_json(&r);
    } else {
        emit(&format!(
            "classification  {}\nrank            {}\ndof             {}\n",
            r.classification, r.rank, r.dof
        ));
    }
    Ok(if r.rigid { 0 } else { exit::NOT_RIGID })
}

async fn solve_motion(client: &Client, a: SolveArgs) -> Outcome {
    let command = MotionCommand::new(formation_core::Vec2::new(a.vx, a.vy), a.omega, a.scale)?;
    let resp = client.solve_motion(scenario_ref(&a.scenario)?, command).await?;
    if a.json {
        print_json(&resp);
        return Ok(0);
    }
    use std::fmt::Write;
    let mut text = format!("{:>5}  {:>4}  {:>14}\n", "robot", "edge", "sigma");
    for s in &resp.parameters {
        // Print -0 as +0.
        let _ = writeln!(text, "{:>5}  {:>4}  {:>+14.9}", s.robot, s.edge, s.sigma + 0.0);
    }
    let _ = writeln!(text, "\n{:>5}  {:>10}", "robot", "residual");
    for (i, r) in resp.residuals.iter().enumerate() {
        let _ = writeln!(text, "{i:>5}  {r:>10.3e}");
    }
    emit(&text);
    Ok(0)
}

async fn metrics(client: &Client, a: MetricsArgs) -> Outcome {
    let text =
        std::fs::read_to_string(&a.log).map_err(|e| Failure::new(exit::IO, format!("{}: {e}", a.log.display())))?;
    let m = client.metrics(text, a.metrics.options()).await?;
    if a.json {
        print_json(&m);
    } else {
        emit(&m.to_text());
    }
    Ok(0)
}

async fn host(listen: &Listen, session: SessionOptions) -> Outcome {
    let mut server = start(SocketAddr::new(listen.host, listen.port), Some(session)).await?;
    // Scripts wait for this line to learn the port.
    emit(&format!("listening on {}\n", server.base_url()));
    tokio::select! {
        r = server.wait() => r.map(|_| 0).map_err(|e| Failure::new(exit::IO, e)),
        _ = tokio::signal::ctrl_c() => {
            server.shutdown().await;
            Ok(0)
        }
    }
}

async fn serve(a: ServeArgs) -> Outcome {
    let mut scenario = local_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario = scenario.with_seed(seed)?;
    }
    let mut options = LiveOptions::new(scenario);
    options.time_scale = a.time_scale;
    options.stream_hz = a.listen.stream_hz;
    options.duration = a.duration;
    host(&a.listen, SessionOptions::Live(options)).await
}

async fn replay(a: ReplayArgs) -> Outcome {
    let scenario = local_scenario(&a.scenario)?;
    let log = read_log_file(&a.log)?;
    let options = ReplayOptions {
        scenario,
        log,
        speed: a.speed,
        stream_hz: a.listen.stream_hz,
    };
    host(&a.listen, SessionOptions::Replay(options)).await
}
