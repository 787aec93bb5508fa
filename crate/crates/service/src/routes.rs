use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::sync::broadcast::error::RecvError;

use crate::error::ApiError;
use crate::store::{CreateRequest, Store};
use crate::view::ClientStateView;

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api/session", post(create))
        .route("/api/session/{id}", get(view).delete(close))
        .route("/api/session/{id}/signal", post(signal))
        .route("/ws/session/{id}", get(socket))
        .with_state(store)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn create(State(store): State<Arc<Store>>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::MalformedRequest(e.to_string()))?;
    let created = store.create(&request)?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn view(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<ClientStateView>, ApiError> {
    Ok(Json(store.view(&id).await?))
}

async fn signal(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    Ok(Json(store.submit_json(&id, &body).await?).into_response())
}

async fn close(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    store.close(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn socket(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    // fail before the upgrade so unknown ids get a plain 404
    store.view(&id).await?;
    Ok(upgrade.on_upgrade(move |ws| stream_session(store, id, ws)))
}

fn text<T: Serialize>(value: &T) -> Message {
    Message::Text(serde_json::to_string(value).expect("payload serializes").into())
}

async fn stream_session(store: Arc<Store>, id: String, ws: WebSocket) {
    let (mut tx, mut rx) = ws.split();
    let Ok((first, mut views)) = store.subscribe(&id).await else {
        let _ = tx.send(Message::Close(None)).await;
        return;
    };
    let mut last_step = first.step;
    let done = first.is_terminal();
    if tx.send(text(&first)).await.is_err() || done {
        let _ = tx.send(Message::Close(None)).await;
        return;
    }
    loop {
        tokio::select! {
            next = views.recv() => match next {
                Ok(view) => {
                    if view.step <= last_step {
                        continue;
                    }
                    last_step = view.step;
                    let done = view.is_terminal();
                    if tx.send(text(&view)).await.is_err() || done {
                        break;
                    }
                }
                // a lagging client would otherwise miss views; it must resubscribe
                Err(RecvError::Lagged(_)) | Err(RecvError::Closed) => break,
            },
            incoming = rx.next() => match incoming {
                Some(Ok(Message::Text(body))) => {
                    if let Err(e) = store.submit_json(&id, body.as_bytes()).await {
                        #[derive(Serialize)]
                        struct Envelope {
                            error: crate::error::ErrorBody,
                        }
                        if tx.send(text(&Envelope { error: e.body() })).await.is_err() {
                            break;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = tx.send(Message::Close(None)).await;
}
