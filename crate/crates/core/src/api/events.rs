//! WebSocket event channel. After the client sends `{"type":"ready"}` the
//! server replies with a `State` message and then forwards each of the
//! player's events, each followed by a fresh `State`. Every message is
//! `{eventId, type, payload}`; a `State` carries the id of the last event
//! it reflects. Delivery is at least once, so clients drop repeated ids.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::HeaderMap;
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use super::auth::AuthError;
use super::{ApiError, AppState};
use crate::events::GameEvent;

pub const READY: &str = "ready";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChannelMessage {
    pub event_id: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub payload: serde_json::Value,
}

impl ChannelMessage {
    fn event(e: &GameEvent) -> Self {
        Self {
            event_id: e.id,
            kind: e.kind.type_name().to_string(),
            payload: serde_json::to_value(e).expect("events serialize"),
        }
    }
}

#[derive(Deserialize)]
pub(super) struct TokenQuery {
    token: Option<String>,
}

pub(super) async fn channel(
    State(s): State<AppState>,
    Query(q): Query<TokenQuery>,
    headers: HeaderMap,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ApiError> {
    let header_token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string);
    let token = header_token.or(q.token).ok_or(AuthError::Unauthenticated)?;
    let session = s.auth.verify(&token)?;
    let ws = match ws {
        Ok(ws) => ws,
        Err(rejection) => return Ok(rejection.into_response()),
    };
    Ok(ws.on_upgrade(move |socket| serve(socket, s, session.username)))
}

async fn serve(mut socket: WebSocket, s: AppState, username: String) {
    // subscribe before the ready handshake so nothing between the state
    // snapshot and the first forwarded event is lost
    let mut rx = s.engine.log().subscribe();
    loop {
        match socket.recv().await {
            Some(Ok(Message::Text(t))) if is_ready(&t) => break,
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
            Some(Ok(_)) => {}
        }
    }
    let mut last_id = s.engine.log().last_id(&username);
    if send_state(&mut socket, &s, &username, last_id).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            event = rx.recv() => match event {
                Ok(e) if e.username == username => {
                    last_id = e.id;
                    if send(&mut socket, &ChannelMessage::event(&e)).await.is_err()
                        || send_state(&mut socket, &s, &username, last_id).await.is_err()
                    {
                        return;
                    }
                }
                Ok(_) => {}
                Err(RecvError::Lagged(_)) => {
                    // missed events; a state push lets the client catch up
                    if send_state(&mut socket, &s, &username, last_id).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(t))) if is_ready(&t) => {
                    if send_state(&mut socket, &s, &username, last_id).await.is_err() {
                        return;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

fn is_ready(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .is_ok_and(|v| v.get("type").and_then(|t| t.as_str()) == Some(READY))
}

async fn send(socket: &mut WebSocket, msg: &ChannelMessage) -> Result<(), axum::Error> {
    let text = serde_json::to_string(msg).expect("messages serialize");
    socket.send(Message::Text(text.into())).await
}

async fn send_state(socket: &mut WebSocket, s: &AppState, username: &str, last_id: u64) -> Result<(), axum::Error> {
    let engine = s.engine.clone();
    let user = username.to_string();
    let view = match tokio::task::spawn_blocking(move || engine.view(&user)).await {
        Ok(Ok(v)) => v,
        _ => return Ok(()),
    };
    let msg = ChannelMessage {
        event_id: last_id,
        kind: "State".to_string(),
        payload: serde_json::to_value(view).expect("views serialize"),
    };
    send(socket, &msg).await
}
