//! The same JSON payloads over HTTP `POST /infer`.

use std::time::Duration;

use super::{ModelClient, ModelRequest, ModelResponse};
use crate::error::ClientError;

pub struct HttpClient {
    url: String,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    /// `base` is the server root (`/infer` is appended) or the full `/infer` URL.
    pub fn new(base: &str, timeout: Duration) -> Result<Self, ClientError> {
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/infer") { base.to_owned() } else { format!("{base}/infer") };
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self { url, http })
    }
}

impl ModelClient for HttpClient {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, ClientError> {
        let resp = self
            .http
            .post(&self.url)
            .header("content-type", "application/json")
            .body(request.to_line())
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ClientError::Timeout(request.id.clone())
                } else {
                    ClientError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        let body = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if status != reqwest::StatusCode::OK {
            return Err(ClientError::Transport(format!("{} returned {status}: {body}", self.url)));
        }
        ModelResponse::parse(body.trim())
    }
}
