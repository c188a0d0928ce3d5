use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use formation_core::api::ErrorKind;
use formation_core::{ClientMessage, ServerMessage};
use tokio::sync::broadcast::error::RecvError;

use crate::error::AppError;
use crate::{AppState, SessionHandle};

pub async fn upgrade(State(state): State<AppState>, ws: WebSocketUpgrade) -> Result<Response, AppError> {
    let Some(session) = state.session.clone() else {
        return Err(AppError::new(
            ErrorKind::NoSession,
            "no session is running on this server",
        ));
    };
    Ok(ws.on_upgrade(move |socket| viewer(socket, session)))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::text(msg.to_json())).await.is_ok()
}

async fn viewer(mut socket: WebSocket, session: SessionHandle) {
    // Subscribe first so no snapshot falls between hello and the stream.
    let mut events = session.subscribe();
    if !send(&mut socket, &ServerMessage::hello(session.digest())).await {
        return;
    }
    loop {
        tokio::select! {
            event = events.recv() => match event {
                Ok(text) => {
                    if socket.send(Message::text(text.as_ref())).await.is_err() {
                        return;
                    }
                }
                // A slow viewer skips frames rather than stalling the others.
                Err(RecvError::Lagged(n)) => tracing::debug!("viewer lagged by {n} messages"),
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => {
                let reply = match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                    Some(Ok(Message::Text(text))) => match ClientMessage::parse(&text) {
                        Ok(msg) => session.command(msg).await.err(),
                        Err(e) => Some(e),
                    },
                    Some(Ok(Message::Binary(_))) => Some("binary frames are not supported".to_string()),
                    Some(Ok(_)) => None,
                };
                if let Some(detail) = reply {
                    if !send(&mut socket, &ServerMessage::error(detail)).await {
                        return;
                    }
                }
            }
        }
    }
}
