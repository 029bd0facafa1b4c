//! Typed client for the study service's JSON API.

use reqwest::{Response, StatusCode};
use thiserror::Error;

pub use visperf_service::http::{CreateSession, Created, SubmitResponse};
pub use visperf_service::{Ack, Demographics, ExportFilter, NextPayload};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Http(#[from] reqwest::Error),

    /// The service answered with an error status.
    #[error("service returned {status}: {message}")]
    Api {
        status: StatusCode,
        message: String,
        /// Set on duplicate-session conflicts.
        session_id: Option<String>,
    },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct ExperimentClient {
    base: String,
    http: reqwest::Client,
}

async fn checked(res: Response) -> Result<Response> {
    let status = res.status();
    if status.is_success() {
        return Ok(res);
    }
    let body: serde_json::Value = res.json().await.unwrap_or_default();
    Err(ClientError::Api {
        status,
        message: body["error"].as_str().unwrap_or("").to_string(),
        session_id: body["session_id"].as_str().map(String::from),
    })
}

impl ExperimentClient {
    /// `base_url` like `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        ExperimentClient { base: base_url.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn create_session(&self, participant_id: &str, seed: Option<u64>) -> Result<Created> {
        let body = CreateSession { participant_id: participant_id.to_string(), seed };
        let res = self.http.post(self.url("/api/sessions")).json(&body).send().await?;
        Ok(checked(res).await?.json().await?)
    }

    pub async fn next(&self, session_id: &str) -> Result<NextPayload> {
        let res = self.http.get(self.url(&format!("/api/sessions/{session_id}/next"))).send().await?;
        Ok(checked(res).await?.json().await?)
    }

    pub async fn submit(&self, session_id: &str, trial_index: usize, judged_percent: i64, response_time_ms: u64) -> Result<Ack> {
        let body = SubmitResponse { trial_index, judged_percent, response_time_ms };
        let res = self
            .http
            .post(self.url(&format!("/api/sessions/{session_id}/responses")))
            .json(&body)
            .send()
            .await?;
        Ok(checked(res).await?.json().await?)
    }

    pub async fn demographics(&self, session_id: &str, demographics: &Demographics) -> Result<NextPayload> {
        let res = self
            .http
            .post(self.url(&format!("/api/sessions/{session_id}/demographics")))
            .json(demographics)
            .send()
            .await?;
        Ok(checked(res).await?.json().await?)
    }

    pub async fn export_csv(&self, filter: ExportFilter) -> Result<String> {
        let url = format!(
            "{}?include_training={}&include_partial={}",
            self.url("/api/export/responses.csv"),
            filter.include_training,
            filter.include_partial
        );
        let res = self.http.get(url).send().await?;
        Ok(checked(res).await?.text().await?)
    }
}
