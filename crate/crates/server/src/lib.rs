//! HTTP JSON service exposing elicitation sessions over a loaded model.
//!
//! Every response value comes straight from [`prefdens_core::elicitation`];
//! the service only routes, locks and serializes.

mod journal;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefdens_api as api;
use prefdens_core::elicitation::{ElicitationModel, Policy, Session, SessionConfig};
use prefdens_core::model_file::ModelFile;
use serde::de::DeserializeOwned;
use tower_http::services::ServeDir;

pub use journal::{Journal, JournalEvent};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Core(#[from] prefdens_core::Error),
    #[error("journal {path}: {source}")]
    Journal {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub journal: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Overrides each type's learned noise sd during sessions.
    pub noise_sd: Option<f64>,
    pub stop_eps: f64,
    pub calibration_sims: usize,
    pub calibration_seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            journal: None,
            static_dir: None,
            noise_sd: None,
            stop_eps: SessionConfig::default().stop_eps,
            calibration_sims: 1000,
            calibration_seed: 0,
        }
    }
}

struct ApiSession {
    id: String,
    created_at: u64,
    session: Session,
}

type SessionHandle = Arc<Mutex<ApiSession>>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    model: Arc<ElicitationModel>,
    model_id: String,
    summary: api::ModelSummary,
    session_config: SessionConfig,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    journal: Option<Mutex<Journal>>,
    static_dir: Option<PathBuf>,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn core_policy(p: api::Policy) -> Policy {
    match p {
        api::Policy::Rref => Policy::Rref,
        api::Policy::Variance => Policy::Variance,
    }
}

fn api_policy(p: Policy) -> api::Policy {
    match p {
        Policy::Rref => api::Policy::Rref,
        Policy::Variance => api::Policy::Variance,
    }
}

fn model_summary(file: &ModelFile, model_id: &str) -> api::ModelSummary {
    let domain = &file.domain;
    api::ModelSummary {
        model_id: model_id.to_string(),
        variables: domain
            .variables()
            .iter()
            .map(|v| api::Variable {
                name: v.name.clone(),
                levels: v.levels.clone(),
            })
            .collect(),
        num_outcomes: domain.num_outcomes(),
        outcomes: (0..domain.num_outcomes()).map(|o| domain.describe(o)).collect(),
        types: file
            .types
            .iter()
            .zip(&file.theta)
            .map(|(t, &w)| api::TypeSummary {
                structure: t.structure.clusters.clone(),
                basis_size: t.mean.len(),
                weight: w,
            })
            .collect(),
    }
}

impl AppState {
    /// Load the model and replay the journal, if any.
    pub fn new(file: &ModelFile, config: &ServerConfig) -> Result<Self, ServerError> {
        let model_id = file.id()?;
        let model =
            ElicitationModel::with_calibration(file.to_model()?, config.calibration_sims, config.calibration_seed)?;
        let session_config = SessionConfig {
            policy: Policy::Rref,
            noise_sd: config.noise_sd,
            stop_eps: config.stop_eps,
        };
        let mut sessions = HashMap::new();
        let journal = match &config.journal {
            None => None,
            Some(path) => {
                let wrap = |source| ServerError::Journal {
                    path: path.clone(),
                    source,
                };
                for (id, s) in journal::replay(path, &model, &model_id, session_config).map_err(wrap)? {
                    sessions.insert(id, Arc::new(Mutex::new(s)));
                }
                Some(Mutex::new(Journal::open(path).map_err(wrap)?))
            }
        };
        if !sessions.is_empty() {
            log::info!("restored {} sessions from the journal", sessions.len());
        }
        Ok(Self {
            inner: Arc::new(Inner {
                summary: model_summary(file, &model_id),
                model,
                model_id,
                session_config,
                sessions: RwLock::new(sessions),
                journal,
                static_dir: config.static_dir.clone(),
            }),
        })
    }

    pub fn model_id(&self) -> &str {
        &self.inner.model_id
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().map(|s| s.len()).unwrap_or(0)
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.inner
            .sessions
            .read()
            .map_err(|_| ApiError::internal("session table poisoned"))?
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))
    }

    fn record(&self, event: &JournalEvent) -> Result<(), ApiError> {
        if let Some(j) = &self.inner.journal {
            j.lock()
                .map_err(|_| ApiError::internal("journal poisoned"))?
                .append(event)
                .map_err(|e| ApiError::internal(format!("journal write failed: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<prefdens_core::Error> for ApiError {
    fn from(e: prefdens_core::Error) -> Self {
        use prefdens_core::Error as E;
        let status = match e {
            E::RepeatedOutcome(_) => StatusCode::CONFLICT,
            E::OutcomeOutOfRange { .. } | E::Malformed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(api::ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Parse the raw body so every decoding failure maps to 422.
fn parse_body<T: DeserializeOwned + Default>(body: &[u8]) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("malformed body: {e}")))
}

fn question(s: &Session) -> Option<api::Question> {
    s.next_question().map(|q| api::Question {
        outcome_id: q.outcome_id,
        description: q.description,
    })
}

fn outlier(s: &Session) -> Result<api::Outlier, ApiError> {
    let (score, flagged) = s.outlier()?;
    Ok(api::Outlier { score, flagged })
}

fn predictions(s: &Session) -> Vec<api::Prediction> {
    s.predict()
        .into_iter()
        .map(|p| api::Prediction {
            outcome_id: p.outcome_id,
            mean: p.mean,
            stddev: p.stddev,
        })
        .collect()
}

/// Run session work off the async executor while holding the session lock.
async fn with_session<T, F>(handle: SessionHandle, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut ApiSession) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = handle.lock().map_err(|_| ApiError::internal("session poisoned"))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<api::SessionCreated> {
    let req: api::CreateSession = parse_body(&body)?;
    let config = SessionConfig {
        policy: core_policy(req.policy),
        ..state.inner.session_config
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created_at = now_millis();
    let session = Session::new(state.inner.model.clone(), config);
    let first = question(&session);
    state.record(&JournalEvent::Create {
        session_id: id.clone(),
        model_id: state.inner.model_id.clone(),
        created_at,
        policy: req.policy,
    })?;
    let api_session = ApiSession {
        id: id.clone(),
        created_at,
        session,
    };
    state
        .inner
        .sessions
        .write()
        .map_err(|_| ApiError::internal("session table poisoned"))?
        .insert(id.clone(), Arc::new(Mutex::new(api_session)));
    Ok(Json(api::SessionCreated {
        session_id: id,
        question: first,
    }))
}

async fn answer(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<api::AnswerResult> {
    let handle = state.session(&id)?;
    let ans: api::Answer =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("malformed body: {e}")))?;
    let st = state.clone();
    let result = with_session(handle, move |s| {
        let mut next = s.session.clone();
        next.update_posterior(ans.outcome_id, ans.value)?;
        st.record(&JournalEvent::Answer {
            session_id: s.id.clone(),
            outcome_id: ans.outcome_id,
            value: ans.value,
        })?;
        s.session = next;
        let s = &s.session;
        Ok(api::AnswerResult {
            type_weights: s.type_weights().to_vec(),
            next_question: question(s),
            outlier: outlier(s)?,
            stop_suggested: s.stop_check(),
        })
    })
    .await?;
    Ok(Json(result))
}

async fn get_predictions(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<api::Prediction>> {
    let handle = state.session(&id)?;
    Ok(Json(with_session(handle, |s| Ok(predictions(&s.session))).await?))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<api::SessionSummary> {
    let handle = state.session(&id)?;
    let model_id = state.inner.model_id.clone();
    let summary = with_session(handle, move |a| {
        let s = &a.session;
        Ok(api::SessionSummary {
            session_id: a.id.clone(),
            model_id,
            created_at: a.created_at,
            policy: api_policy(s.config.policy),
            answers: s
                .answers()
                .iter()
                .map(|x| api::Answer {
                    outcome_id: x.outcome_id,
                    value: x.value,
                })
                .collect(),
            type_weights: s.type_weights().to_vec(),
            most_probable_type: s.most_probable_type(),
            next_question: question(s),
            outlier: outlier(s)?,
            stop_suggested: s.stop_check(),
            predictions: predictions(s),
        })
    })
    .await?;
    Ok(Json(summary))
}

async fn get_model(State(state): State<AppState>) -> Json<api::ModelSummary> {
    Json(state.inner.summary.clone())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/answers", post(answer))
        .route("/api/sessions/{id}/predictions", get(get_predictions))
        .route("/api/model", get(get_model))
        .route("/api/{*rest}", axum::routing::any(not_found));
    let router = match &state.inner.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    router.with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
