//! HTTP front end of a [`LabelBoard`].
//!
//! | route              | body            | success          |
//! |--------------------|-----------------|------------------|
//! | `GET /api/pending` |                 | `[PendingView]`  |
//! | `POST /api/label`  | `{id, class}`   | `{id, resolution}` |
//! | `POST /api/decline`| `{id}`          | `{id, resolution}` |
//! | `GET /api/status`  |                 | `TrainingStatus` |
//!
//! Errors are `{"error": message}` with 400 for malformed bodies or an
//! out-of-range class, 404 for an unknown id and 409 for a request that was
//! already resolved.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use iada_core::engine::{BoardError, LabelBoard, PendingView, Resolution, TrainingStatus};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

pub const DEFAULT_PORT: u16 = 8643;

pub fn default_addr() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub id: u64,
    pub resolution: Resolution,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<BoardError> for ApiError {
    fn from(e: BoardError) -> Self {
        let status = match e {
            BoardError::NotFound(_) => StatusCode::NOT_FOUND,
            BoardError::BadClass { .. } => StatusCode::BAD_REQUEST,
            BoardError::AlreadyResolved(_) => StatusCode::CONFLICT,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn field_id(body: &Value) -> Result<u64, ApiError> {
    body.get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| ApiError::bad_request("field `id` must be a non-negative integer"))
}

async fn pending(State(board): State<Arc<LabelBoard>>) -> Json<Vec<PendingView>> {
    Json(board.pending())
}

async fn status(State(board): State<Arc<LabelBoard>>) -> Json<TrainingStatus> {
    Json(board.status())
}

async fn label(
    State(board): State<Arc<LabelBoard>>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<Resolved>, ApiError> {
    let Json(body) = body?;
    let id = field_id(&body)?;
    let raw = body
        .get("class")
        .ok_or_else(|| ApiError::bad_request("field `class` is required"))?;
    match raw.as_u64() {
        Some(class) => {
            let class = usize::try_from(class).unwrap_or(usize::MAX);
            board.label(id, class)?;
            Ok(Json(Resolved {
                id,
                resolution: Resolution::Labeled(class),
            }))
        }
        // Not a class index at all; an unknown id still takes precedence.
        None => match board.label(id, usize::MAX) {
            Err(BoardError::NotFound(id)) => Err(BoardError::NotFound(id).into()),
            _ => Err(ApiError::bad_request(format!(
                "class {raw} is not an index in 0..{}",
                board.classes()
            ))),
        },
    }
}

async fn decline(
    State(board): State<Arc<LabelBoard>>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<Resolved>, ApiError> {
    let Json(body) = body?;
    let id = field_id(&body)?;
    board.decline(id)?;
    Ok(Json(Resolved {
        id,
        resolution: Resolution::Declined,
    }))
}

/// The API routes over `board`.
pub fn router(board: Arc<LabelBoard>) -> Router {
    Router::new()
        .route("/api/pending", get(pending))
        .route("/api/label", post(label))
        .route("/api/decline", post(decline))
        .route("/api/status", get(status))
        .with_state(board)
}

/// The API plus static files from `dir` at every other path.
pub fn router_with_static(board: Arc<LabelBoard>, dir: PathBuf) -> Router {
    router(board).fallback_service(ServeDir::new(dir))
}

/// A service running on its own thread and runtime.
pub struct ServiceHandle {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("service thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Bind `addr` and serve `app` on a background thread. Port 0 picks a free
/// port; the bound address is in the handle.
pub fn spawn(app: Router, addr: SocketAddr) -> std::io::Result<ServiceHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(1)
            .enable_all()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServiceHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
