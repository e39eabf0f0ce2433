use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub model: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceHealth {
    pub status: String,
    pub model: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

/// The remote side of an embedding provider.
pub trait EmbeddingService: Send + Sync {
    fn health(&self) -> Result<ServiceHealth>;

    fn embed(&self, model: &str, texts: &[&str]) -> Result<EmbedResponse>;
}

/// JSON-over-HTTP client for `GET /health` and `POST /embed`.
pub struct HttpService {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpService {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpService {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn finish<T: serde::de::DeserializeOwned>(
        &self,
        result: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T> {
        let mut resp = result.map_err(|e| Error::ServiceUnreachable(format!("{}: {e}", self.base_url)))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let message = resp
                .body_mut()
                .read_to_string()
                .unwrap_or_default()
                .chars()
                .take(500)
                .collect();
            return Err(Error::Service { status, message });
        }
        resp.body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_json()
            .map_err(|e| Error::Service {
                status,
                message: format!("malformed response body: {e}"),
            })
    }
}

impl EmbeddingService for HttpService {
    fn health(&self) -> Result<ServiceHealth> {
        let url = format!("{}/health", self.base_url);
        self.finish(self.agent.get(&url).call())
    }

    fn embed(&self, model: &str, texts: &[&str]) -> Result<EmbedResponse> {
        let url = format!("{}/embed", self.base_url);
        let body = EmbedRequest {
            model: model.to_string(),
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        self.finish(self.agent.post(&url).send_json(&body))
    }
}
