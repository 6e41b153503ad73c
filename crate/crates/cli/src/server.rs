//! Live matches over HTTP and WebSocket.
//!
//! Requests and responses are `field:value` lines in `text/plain`.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /sessions` | optional `threshold`, `bank`, `rounds` | `id`, `round`, `commitment`, config |
//! | `POST /sessions/{id}/moves` | `round`, `move` | the round result |
//! | `GET /sessions/{id}` | | snapshot |
//! | `GET /sessions/{id}/log` | | the audit log, one record per line |
//! | `GET /sessions/{id}/stream?last_seen=N` | | WebSocket |
//!
//! The stream first replays every round after `last_seen`, then follows
//! live play. Each round arrives as a text frame byte-identical to the move
//! response; rounds on which Alice ran her tests are followed by a
//! `kind:diag` frame carrying `round` and the per-detector `sigmas`.
//! Errors are `error:<kind>` and `message:<text>` with a matching status.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::broadcast;

use pennies_core::session::{Fields, Session, SessionConfig, SessionError, SessionStore};

const FEED_CAPACITY: usize = 1024;

#[derive(Debug, Clone)]
struct Frame {
    round: usize,
    text: String,
}

pub struct AppState {
    store: SessionStore,
    feeds: Mutex<HashMap<String, broadcast::Sender<Frame>>>,
}

impl AppState {
    pub fn new(store: SessionStore) -> Arc<Self> {
        Arc::new(AppState {
            store,
            feeds: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn feed(&self, id: &str) -> broadcast::Sender<Frame> {
        self.feeds
            .lock()
            .expect("feed map poisoned")
            .entry(id.to_string())
            .or_insert_with(|| broadcast::channel(FEED_CAPACITY).0)
            .clone()
    }
}

/// Stream frames for one round result.
fn frames(result: &Fields) -> Vec<Frame> {
    let round = result.get("round").and_then(|r| r.parse().ok()).unwrap_or(0);
    let mut out = vec![Frame {
        round,
        text: result.to_body(),
    }];
    if let Some(s) = result.get("sigmas").filter(|s| *s != "-") {
        let diag = Fields::new().with("kind", "diag").with("round", round).with("sigmas", s);
        out.push(Frame {
            round,
            text: diag.to_body(),
        });
    }
    out
}

struct ApiError(SessionError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            SessionError::UnknownSession(_) => (StatusCode::NOT_FOUND, "UnknownSession"),
            SessionError::RoundMismatch { .. } => (StatusCode::CONFLICT, "RoundMismatch"),
            SessionError::SessionComplete => (StatusCode::CONFLICT, "SessionComplete"),
            SessionError::InvalidConfig(_) => (StatusCode::BAD_REQUEST, "InvalidConfig"),
            SessionError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "InvalidRequest"),
            SessionError::TooManySessions(_) => (StatusCode::SERVICE_UNAVAILABLE, "TooManySessions"),
            SessionError::Corrupt(_) | SessionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        let body = format!("error:{kind}\nmessage:{}\n", self.0);
        (status, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

fn text(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

fn parse_body(body: &Bytes) -> Result<Fields, ApiError> {
    let s = std::str::from_utf8(body).map_err(|_| SessionError::InvalidRequest("body is not utf-8".into()))?;
    Fields::parse_body(s).map_err(|e| SessionError::InvalidRequest(e).into())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(SessionError::Io(e.to_string())))?
        .map_err(ApiError)
}

async fn create(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let config = SessionConfig::from_fields(&parse_body(&body)?)?;
    let created = blocking(move || app.store.create(config)).await?;
    Ok(text(StatusCode::CREATED, created.to_body()))
}

async fn submit(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let f = parse_body(&body)?;
    let round: usize = f
        .get("round")
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| SessionError::InvalidRequest("round must be a positive integer".into()))?;
    let human = match f.get("move") {
        Some("0") => false,
        Some("1") => true,
        _ => return Err(SessionError::InvalidRequest("move must be 0 or 1".into()).into()),
    };
    let session = app.store.get(&id)?;
    let feed = app.feed(&id);
    let result = blocking(move || {
        let mut s = session.lock().expect("session poisoned");
        let fresh = round == s.round() + 1;
        let result = s.submit(round, human)?;
        if fresh {
            // sent under the session lock so streams see rounds in order
            for frame in frames(&result) {
                let _ = feed.send(frame);
            }
        }
        Ok(result)
    })
    .await?;
    Ok(text(StatusCode::OK, result.to_body()))
}

fn with_session<T>(app: &AppState, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, ApiError> {
    let s = app.store.get(id)?;
    let s = s.lock().expect("session poisoned");
    Ok(f(&s))
}

async fn snapshot(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = with_session(&app, &id, |s| s.snapshot().to_body())?;
    Ok(text(StatusCode::OK, body))
}

async fn log(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let body = with_session(&app, &id, Session::public_log)?;
    Ok(text(StatusCode::OK, body))
}

async fn stream(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    app.store.get(&id)?;
    let last_seen = match q.get("last_seen") {
        None => 0,
        Some(v) => v
            .parse()
            .map_err(|_| SessionError::InvalidRequest("last_seen must be a round number".into()))?,
    };
    Ok(ws.on_upgrade(move |socket| follow(app, id, last_seen, socket)))
}

async fn send_all(socket: &mut WebSocket, results: &[Fields]) -> bool {
    for frame in results.iter().flat_map(frames) {
        if socket.send(Message::Text(frame.text.into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn follow(app: Arc<AppState>, id: String, last_seen: usize, mut socket: WebSocket) {
    // subscribe before reading the backlog so no round falls in between;
    // live frames for rounds already replayed are skipped
    let mut rx = app.feed(&id).subscribe();
    let Ok((backlog, mut cutoff)) = with_session(&app, &id, |s| (s.events_since(last_seen), s.round())) else {
        return;
    };
    if !send_all(&mut socket, &backlog).await {
        return;
    }
    let mut last = cutoff;
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(frame) if frame.round <= cutoff => {}
                Ok(frame) => {
                    last = frame.round;
                    if socket.send(Message::Text(frame.text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let Ok((missed, now)) = with_session(&app, &id, |s| (s.events_since(last), s.round())) else {
                        return;
                    };
                    if !send_all(&mut socket, &missed).await {
                        return;
                    }
                    cutoff = now;
                    last = now;
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/moves", post(submit))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(app)
}

pub async fn serve(listener: TcpListener, app: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
