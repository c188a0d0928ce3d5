//! The paced simulation loop behind `/ws`.
//!
//! One task owns the `Simulation`. Viewers talk to it through a request
//! queue and receive pre-serialized `ServerMessage`s over a broadcast
//! channel. Requests are handled between ticks, so a command always takes
//! effect at the next tick boundary, and of several commands arriving within
//! one tick the last one wins.

use std::sync::Arc;
use std::time::Duration;

use formation_core::api::{EstimatorToggle, SessionCommands, SessionInfo, SessionMode};
use formation_core::log::log_to_string;
use formation_core::telemetry::Snapshot;
use formation_core::{
    ClientMessage, Error, Result, Scenario, ScheduledCommand, ServerMessage, SimConfig, Simulation, TickRecord,
    TrajectoryLog,
};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::time::{interval, MissedTickBehavior};

/// Simulated seconds a live session may run when no duration is given.
pub const UNBOUNDED_DURATION: f64 = 1e9;

#[derive(Debug, Clone)]
pub struct LiveOptions {
    pub scenario: Scenario,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Snapshots per wall-clock second.
    pub stream_hz: f64,
    /// Overrides the scenario duration; `None` runs until shutdown.
    pub duration: Option<f64>,
}

impl LiveOptions {
    pub fn new(scenario: Scenario) -> Self {
        LiveOptions {
            scenario,
            time_scale: 1.0,
            stream_hz: 20.0,
            duration: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub scenario: Scenario,
    pub log: TrajectoryLog,
    /// Playback speed relative to real time.
    pub speed: f64,
    pub stream_hz: f64,
}

#[derive(Debug, Clone)]
pub enum SessionOptions {
    Live(LiveOptions),
    Replay(ReplayOptions),
}

pub(crate) enum Request {
    Command(ClientMessage, oneshot::Sender<std::result::Result<(), String>>),
    Log(oneshot::Sender<Result<String>>),
    Commands(oneshot::Sender<SessionCommands>),
    Info(oneshot::Sender<SessionInfo>),
}

/// Cheap to clone; every clone talks to the same session task.
#[derive(Clone)]
pub struct SessionHandle {
    requests: mpsc::Sender<Request>,
    events: broadcast::Sender<Arc<str>>,
    digest: watch::Receiver<String>,
}

impl SessionHandle {
    /// Validates the options and starts the session task on the current
    /// runtime.
    pub fn spawn(options: SessionOptions) -> Result<SessionHandle> {
        let (req_tx, req_rx) = mpsc::channel(64);
        let (events, _) = broadcast::channel(256);
        match options {
            SessionOptions::Live(o) => {
                check_rates(o.time_scale, o.stream_hz)?;
                let live = Live::new(o)?;
                let (digest_tx, digest) = watch::channel(live.scenario.digest());
                tokio::spawn(run_live(live, req_rx, events.clone(), digest_tx));
                Ok(SessionHandle {
                    requests: req_tx,
                    events,
                    digest,
                })
            }
            SessionOptions::Replay(o) => {
                check_rates(o.speed, o.stream_hz)?;
                let replay = Replay::new(o)?;
                let (_digest_tx, digest) = watch::channel(replay.log.header.scenario_digest.clone());
                tokio::spawn(run_replay(replay, req_rx, events.clone()));
                Ok(SessionHandle {
                    requests: req_tx,
                    events,
                    digest,
                })
            }
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.events.subscribe()
    }

    pub fn digest(&self) -> String {
        self.digest.borrow().clone()
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Option<T> {
        let (tx, rx) = oneshot::channel();
        self.requests.send(make(tx)).await.ok()?;
        rx.await.ok()
    }

    /// Queues a viewer command; resolves with the session's verdict.
    pub async fn command(&self, msg: ClientMessage) -> std::result::Result<(), String> {
        self.ask(|tx| Request::Command(msg, tx))
            .await
            .unwrap_or_else(|| Err("session has stopped".into()))
    }

    pub async fn log(&self) -> Option<Result<String>> {
        self.ask(Request::Log).await
    }

    pub async fn commands(&self) -> Option<SessionCommands> {
        self.ask(Request::Commands).await
    }

    pub async fn info(&self) -> Option<SessionInfo> {
        self.ask(Request::Info).await
    }
}

fn check_rates(speed: f64, stream_hz: f64) -> Result<()> {
    if !(speed > 0.0 && speed.is_finite() && stream_hz > 0.0 && stream_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "time scale and stream rate must be positive, got {speed} and {stream_hz}"
        )));
    }
    Ok(())
}

fn publish(events: &broadcast::Sender<Arc<str>>, msg: &ServerMessage) {
    // No receivers is fine.
    let _ = events.send(Arc::from(msg.to_json()));
}

struct Live {
    scenario: Scenario,
    options: LiveOptions,
    sim: Simulation,
    records: Vec<TickRecord>,
    commands: SessionCommands,
    broken: Option<String>,
}

impl Live {
    fn new(options: LiveOptions) -> Result<Live> {
        let scenario = options.scenario.clone();
        let sim = Self::simulation(&scenario, options.duration)?;
        Ok(Live {
            commands: SessionCommands {
                scenario_digest: scenario.digest(),
                ..Default::default()
            },
            scenario,
            options,
            sim,
            records: Vec::new(),
            broken: None,
        })
    }

    fn simulation(scenario: &Scenario, duration: Option<f64>) -> Result<Simulation> {
        let config = SimConfig {
            duration: duration.unwrap_or(UNBOUNDED_DURATION),
            ..scenario.config.clone()
        };
        let schedule = scenario
            .schedule
            .iter()
            .copied()
            .filter(|c| c.t <= config.duration)
            .collect();
        Simulation::with_schedule(config, schedule)
    }

    fn tick(&mut self, events: &broadcast::Sender<Arc<str>>) {
        if self.broken.is_some() || self.sim.is_finished() {
            return;
        }
        match self.sim.step() {
            Ok(r) => self.records.push(r),
            Err(e) => {
                tracing::warn!("live session stopped: {e}");
                let detail = e.to_string();
                publish(events, &ServerMessage::error(&detail));
                self.broken = Some(detail);
            }
        }
    }

    fn snapshot(&self) -> ServerMessage {
        ServerMessage::Snapshot(Snapshot::capture(&self.sim, self.records.last()))
    }

    fn apply(
        &mut self,
        msg: ClientMessage,
        events: &broadcast::Sender<Arc<str>>,
        digest: &watch::Sender<String>,
    ) -> std::result::Result<(), String> {
        let t = self.sim.world().t;
        match msg {
            ClientMessage::Motion(cmd) => {
                self.sim.set_command(cmd).map_err(|e| e.to_string())?;
                // Later commands within the same tick replace earlier ones.
                self.commands.motion.retain(|c| c.t != t);
                self.commands.motion.push(ScheduledCommand::new(t, cmd));
            }
            ClientMessage::Estimator { enabled } => {
                self.sim.set_estimator_enabled(enabled).map_err(|e| e.to_string())?;
                self.commands.estimator.retain(|c| c.t != t);
                self.commands.estimator.push(EstimatorToggle { t, enabled });
            }
            ClientMessage::Reset { scenario } => {
                let next = match scenario {
                    Some(name) => Scenario::bundled(&name).map_err(|e| e.to_string())?,
                    None => self.scenario.clone(),
                };
                let sim = Self::simulation(&next, self.options.duration).map_err(|e| e.to_string())?;
                self.sim = sim;
                self.records.clear();
                self.broken = None;
                self.commands = SessionCommands {
                    scenario_digest: next.digest(),
                    ..Default::default()
                };
                self.scenario = next;
                let _ = digest.send(self.scenario.digest());
                publish(events, &ServerMessage::hello(self.scenario.digest()));
            }
        }
        Ok(())
    }

    fn log(&self) -> Result<String> {
        log_to_string(&self.scenario.log_header(), &self.records)
    }

    fn info(&self) -> SessionInfo {
        SessionInfo {
            mode: SessionMode::Live,
            scenario: self.scenario.name().to_string(),
            scenario_digest: self.scenario.digest(),
            t: self.sim.world().t,
        }
    }
}

async fn run_live(
    mut live: Live,
    mut requests: mpsc::Receiver<Request>,
    events: broadcast::Sender<Arc<str>>,
    digest: watch::Sender<String>,
) {
    let mut ticks = interval(Duration::from_secs_f64(
        live.scenario.config.dt / live.options.time_scale,
    ));
    ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut frames = interval(Duration::from_secs_f64(1.0 / live.options.stream_hz));
    frames.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            biased;
            req = requests.recv() => match req {
                None => break,
                Some(Request::Command(msg, reply)) => {
                    let _ = reply.send(live.apply(msg, &events, &digest));
                }
                Some(Request::Log(reply)) => {
                    let _ = reply.send(live.log());
                }
                Some(Request::Commands(reply)) => {
                    let _ = reply.send(live.commands.clone());
                }
                Some(Request::Info(reply)) => {
                    let _ = reply.send(live.info());
                }
            },
            _ = ticks.tick() => live.tick(&events),
            _ = frames.tick() => publish(&events, &live.snapshot()),
        }
    }
}

struct Replay {
    scenario: Scenario,
    log: TrajectoryLog,
    options: ReplayOptions,
    cursor: usize,
}

impl Replay {
    fn new(options: ReplayOptions) -> Result<Replay> {
        let s = &options.scenario;
        let h = &options.log.header;
        if h.robot_count != s.config.robot_count() || h.edge_count != s.config.shape.graph().edge_count() {
            return Err(Error::MalformedLog(format!(
                "log has {} robots and {} edges but scenario `{}` has {} and {}",
                h.robot_count,
                h.edge_count,
                s.name(),
                s.config.robot_count(),
                s.config.shape.graph().edge_count()
            )));
        }
        if options.log.records.is_empty() {
            return Err(Error::Empty("replay needs a log with at least one record"));
        }
        if h.scenario_digest != s.digest() {
            tracing::warn!(
                "log digest {} differs from scenario digest {}",
                h.scenario_digest,
                s.digest()
            );
        }
        Ok(Replay {
            scenario: options.scenario.clone(),
            log: options.log.clone(),
            options,
            cursor: 0,
        })
    }

    fn snapshot(&self) -> ServerMessage {
        ServerMessage::Snapshot(Snapshot::from_record(
            &self.log.records[self.cursor],
            &self.scenario.config,
        ))
    }
}

async fn run_replay(mut replay: Replay, mut requests: mpsc::Receiver<Request>, events: broadcast::Sender<Arc<str>>) {
    let mut ticks = interval(Duration::from_secs_f64(
        replay.scenario.config.dt / replay.options.speed,
    ));
    ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut frames = interval(Duration::from_secs_f64(1.0 / replay.options.stream_hz));
    frames.set_missed_tick_behavior(MissedTickBehavior::Skip);
    // The first tick of an interval fires at once; start on the first record.
    ticks.tick().await;
    loop {
        tokio::select! {
            biased;
            req = requests.recv() => match req {
                None => break,
                Some(Request::Command(_, reply)) => {
                    let _ = reply.send(Err("replay sessions do not accept commands".into()));
                }
                Some(Request::Log(reply)) => {
                    let _ = reply.send(log_to_string(&replay.log.header, &replay.log.records));
                }
                Some(Request::Commands(reply)) => {
                    let _ = reply.send(SessionCommands {
                        scenario_digest: replay.log.header.scenario_digest.clone(),
                        ..Default::default()
                    });
                }
                Some(Request::Info(reply)) => {
                    let _ = reply.send(SessionInfo {
                        mode: SessionMode::Replay,
                        scenario: replay.scenario.name().to_string(),
                        scenario_digest: replay.log.header.scenario_digest.clone(),
                        t: replay.log.records[replay.cursor].t,
                    });
                }
            },
            _ = ticks.tick() => {
                if replay.cursor + 1 < replay.log.records.len() {
                    replay.cursor += 1;
                }
            }
            _ = frames.tick() => publish(&events, &replay.snapshot()),
        }
    }
}
