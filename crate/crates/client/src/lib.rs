//! Typed client for the formation service.
//!
//! ```no_run
//! # async fn demo() -> Result<(), formation_client::ClientError> {
//! let client = formation_client::Client::new("http://127.0.0.1:8080")?;
//! let report = client.rigidity("square-1m".into()).await?;
//! assert!(report.rigid);
//! # Ok(()) }
//! ```

use formation_core::api::{
    ApiError, HealthResponse, MetricsRequest, MotionRequest, MotionResponse, RigidityResponse, RunRequest, RunResponse,
    ScenarioRef, ScenarioRequest, ScenarioSummary, SessionCommands, SessionInfo,
};
use formation_core::{ClientMessage, Metrics, MetricsOptions, MotionCommand, ServerMessage};
use futures_util::{SinkExt, StreamExt};
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service understood the request and refused it.
    #[error("{0}")]
    Api(ApiError),
    /// A non-2xx reply without a service error body.
    #[error("HTTP {status}: {body}")]
    Status { status: StatusCode, body: String },
    #[error("invalid server URL `{0}`")]
    BadUrl(String),
    #[error("cannot reach the service: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("telemetry connection failed: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("unexpected telemetry message: {0}")]
    Protocol(String),
}

impl From<ApiError> for ClientError {
    fn from(e: ApiError) -> Self {
        ClientError::Api(e)
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the server root, such as `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Client> {
        let base = base.trim_end_matches('/');
        let ok = base.strip_prefix("http://").is_some_and(|rest| !rest.is_empty());
        if !ok {
            return Err(ClientError::BadUrl(base.to_string()));
        }
        Ok(Client {
            http: reqwest::Client::new(),
            base: base.to_string(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(&self, req: RequestBuilder) -> Result<reqwest::Response> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await?;
        Err(match serde_json::from_str::<ApiError>(&body) {
            Ok(e) => ClientError::Api(e),
            Err(_) => ClientError::Status { status, body },
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(self.send(self.http.get(self.url(path))).await?.json().await?)
    }

    async fn post<B: serde::Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Ok(self
            .send(self.http.post(self.url(path)).json(body))
            .await?
            .json()
            .await?)
    }

    pub async fn health(&self) -> Result<HealthResponse> {
        self.get("/api/health").await
    }

    pub async fn scenarios(&self) -> Result<Vec<ScenarioSummary>> {
        self.get("/api/scenarios").await
    }

    /// A bundled scenario as its effective JSON document.
    pub async fn scenario(&self, name: &str) -> Result<serde_json::Value> {
        self.get(&format!("/api/scenarios/{name}")).await
    }

    pub async fn rigidity(&self, scenario: ScenarioRef) -> Result<RigidityResponse> {
        self.post("/api/rigidity", &ScenarioRequest { scenario }).await
    }

    pub async fn solve_motion(&self, scenario: ScenarioRef, command: MotionCommand) -> Result<MotionResponse> {
        self.post("/api/motion", &MotionRequest { scenario, command }).await
    }

    pub async fn run(&self, req: &RunRequest) -> Result<RunResponse> {
        self.post("/api/run", req).await
    }

    pub async fn metrics(&self, log: String, options: MetricsOptions) -> Result<Metrics> {
        self.post("/api/metrics", &MetricsRequest { log, options }).await
    }

    pub async fn session(&self) -> Result<SessionInfo> {
        self.get("/api/session").await
    }

    /// The hosted session's trajectory so far, as CSV log text.
    pub async fn session_log(&self) -> Result<String> {
        Ok(self
            .send(self.http.get(self.url("/api/session/log")))
            .await?
            .text()
            .await?)
    }

    pub async fn session_commands(&self) -> Result<SessionCommands> {
        self.get("/api/session/commands").await
    }

    /// Opens the telemetry stream and waits for its hello.
    pub async fn telemetry(&self) -> Result<Telemetry> {
        let url = format!("ws://{}/ws", &self.base["http://".len()..]);
        let (mut ws, _) = match tokio_tungstenite::connect_async(url.as_str()).await {
            Ok(ok) => ok,
            Err(tokio_tungstenite::tungstenite::Error::Http(resp)) => {
                let body = resp.body().as_deref().unwrap_or_default();
                return Err(match serde_json::from_slice::<ApiError>(body) {
                    Ok(e) => ClientError::Api(e),
                    Err(_) => ClientError::Status {
                        status: StatusCode::from_u16(resp.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY),
                        body: String::from_utf8_lossy(body).into_owned(),
                    },
                });
            }
            Err(e) => return Err(e.into()),
        };
        let first = next_message(&mut ws).await?;
        match first {
            Some(ServerMessage::Hello {
                schema_version,
                scenario_digest,
            }) => Ok(Telemetry {
                ws,
                schema_version,
                scenario_digest,
            }),
            other => Err(ClientError::Protocol(format!("expected hello, got {other:?}"))),
        }
    }
}

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn next_message(ws: &mut Socket) -> Result<Option<ServerMessage>> {
    while let Some(frame) = ws.next().await {
        match frame? {
            Message::Text(text) => {
                return serde_json::from_str(&text)
                    .map(Some)
                    .map_err(|e| ClientError::Protocol(format!("{e}: {text}")));
            }
            Message::Close(_) => return Ok(None),
            _ => {}
        }
    }
    Ok(None)
}

/// An open `/ws` connection.
pub struct Telemetry {
    ws: Socket,
    pub schema_version: u32,
    pub scenario_digest: String,
}

impl Telemetry {
    /// Next message from the server; `None` once the connection closes.
    pub async fn next(&mut self) -> Result<Option<ServerMessage>> {
        next_message(&mut self.ws).await
    }

    pub async fn send(&mut self, msg: &ClientMessage) -> Result<()> {
        self.send_raw(&msg.to_json()).await
    }

    /// Sends a text frame verbatim.
    pub async fn send_raw(&mut self, text: &str) -> Result<()> {
        Ok(self.ws.send(Message::text(text)).await?)
    }

    pub async fn close(mut self) -> Result<()> {
        Ok(self.ws.close(None).await?)
    }
}
