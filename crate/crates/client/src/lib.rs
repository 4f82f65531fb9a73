//! Thin async client for the `/api` session service.

use prefdens_api::{
    Answer, AnswerResult, CreateSession, ErrorBody, ModelSummary, Policy, Prediction, SessionCreated, SessionSummary,
};
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;

pub use prefdens_api as api;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Api { status: StatusCode, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    pub async fn model(&self) -> Result<ModelSummary> {
        Self::decode(self.http.get(self.url("/api/model")).send().await?).await
    }

    pub async fn create_session(&self, policy: Policy) -> Result<SessionCreated> {
        let resp = self
            .http
            .post(self.url("/api/sessions"))
            .json(&CreateSession { policy })
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn answer(&self, session_id: &str, outcome_id: usize, value: f64) -> Result<AnswerResult> {
        let resp = self
            .http
            .post(self.url(&format!("/api/sessions/{session_id}/answers")))
            .json(&Answer { outcome_id, value })
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn predictions(&self, session_id: &str) -> Result<Vec<Prediction>> {
        let url = self.url(&format!("/api/sessions/{session_id}/predictions"));
        Self::decode(self.http.get(url).send().await?).await
    }

    pub async fn session(&self, session_id: &str) -> Result<SessionSummary> {
        let url = self.url(&format!("/api/sessions/{session_id}"));
        Self::decode(self.http.get(url).send().await?).await
    }
}
