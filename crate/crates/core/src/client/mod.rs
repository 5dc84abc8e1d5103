//! Wire protocol to external models, plus mock, subprocess and HTTP clients.
//!
//! Requests and responses are single JSON lines:
//!
//! ```text
//! {"id":"q1#0","mode":"extract_one","question":"...","passage":"..."}
//! {"id":"q1#0","result":{"span":{"text":"French","score":0.93}}}
//! ```
//!
//! The `result` object carries exactly one key matching the request mode:
//! `span` (extract_one), `tags` (tag), `candidates` (candidates), `count`
//! (count, a distribution over 1..=8) or `text` (generate).

mod http;
mod mock;
mod subprocess;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ClientError;
use crate::model::Instance;

pub use http::HttpClient;
pub use mock::{DegenerateClient, OracleClient, ScriptedClient};
pub use subprocess::SubprocessClient;

/// Largest answer count the count head can emit.
pub const K_MAX: usize = 8;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExtractOne,
    Tag,
    Candidates,
    Count,
    Generate,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::ExtractOne => "extract_one",
            Mode::Tag => "tag",
            Mode::Candidates => "candidates",
            Mode::Count => "count",
            Mode::Generate => "generate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRequest {
    pub id: String,
    pub mode: Mode,
    pub question: String,
    pub passage: String,
}

impl ModelRequest {
    pub fn new(id: impl Into<String>, mode: Mode, question: impl Into<String>, passage: impl Into<String>) -> Self {
        Self { id: id.into(), mode, question: question.into(), passage: passage.into() }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    pub fn parse(line: &str) -> Result<Self, ClientError> {
        serde_json::from_str(line).map_err(|e| protocol(e.to_string(), line))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireSpan {
    pub text: String,
    pub score: f64,
}

/// Candidate span over passage token indices, half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireCandidate {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelResult {
    /// An empty `text` means "no further answer".
    Span(WireSpan),
    Tags(Vec<f64>),
    Candidates(Vec<WireCandidate>),
    Count(Vec<f64>),
    Text(String),
}

impl ModelResult {
    pub fn mode(&self) -> Mode {
        match self {
            ModelResult::Span(_) => Mode::ExtractOne,
            ModelResult::Tags(_) => Mode::Tag,
            ModelResult::Candidates(_) => Mode::Candidates,
            ModelResult::Count(_) => Mode::Count,
            ModelResult::Text(_) => Mode::Generate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelResponse {
    pub id: String,
    pub result: ModelResult,
}

impl ModelResponse {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }

    pub fn parse(line: &str) -> Result<Self, ClientError> {
        serde_json::from_str(line).map_err(|e| protocol(e.to_string(), line))
    }

    /// Checks id echo, mode/variant agreement and value ranges.
    pub fn validate(&self, request: &ModelRequest) -> Result<(), ClientError> {
        let fail = |message: String| Err(protocol(message, &self.to_line()));
        if self.id != request.id {
            return fail(format!("response id {:?} does not echo request id {:?}", self.id, request.id));
        }
        if self.result.mode() != request.mode {
            return fail(format!(
                "{} request answered with a {} result",
                request.mode.as_str(),
                self.result.mode().as_str()
            ));
        }
        let prob_ok = |p: &f64| p.is_finite() && (0.0..=1.0).contains(p);
        match &self.result {
            ModelResult::Span(s) if !s.score.is_finite() => fail("span score is not finite".into()),
            ModelResult::Tags(p) if !p.iter().all(prob_ok) => fail("tag probability outside [0, 1]".into()),
            ModelResult::Candidates(c) => match c.iter().find(|c| c.start >= c.end || !c.score.is_finite()) {
                Some(c) => fail(format!("invalid candidate {}..{} score {}", c.start, c.end, c.score)),
                None => Ok(()),
            },
            ModelResult::Count(p) => {
                if p.len() != K_MAX || !p.iter().all(prob_ok) {
                    return fail(format!("count distribution must hold {K_MAX} probabilities"));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return fail(format!("count distribution sums to {sum}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn protocol(message: impl Into<String>, payload: &str) -> ClientError {
    ClientError::Protocol { message: message.into(), payload: payload.to_owned() }
}

/// A handle to a model. Implementations must tolerate concurrent callers.
pub trait ModelClient: Send + Sync {
    /// Sends one request and returns the raw response.
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, ClientError>;
}

impl<C: ModelClient + ?Sized> ModelClient for Box<C> {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, ClientError> {
        (**self).send(request)
    }
}

impl<C: ModelClient + ?Sized> ModelClient for &C {
    fn send(&self, request: &ModelRequest) -> Result<ModelResponse, ClientError> {
        (**self).send(request)
    }
}

/// Sends `request` and validates the response against it.
pub fn query<C: ModelClient + ?Sized>(client: &C, request: &ModelRequest) -> Result<ModelResult, ClientError> {
    let response = client.send(request)?;
    response.validate(request)?;
    Ok(response.result)
}

/// Parsed `--model-endpoint` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Http(String),
    Command(String),
    MockOracle,
    MockDegenerate,
    MockScripted(String),
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Endpoint::Http(s.to_owned()))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err("cmd: endpoint needs a command".into());
            }
            Ok(Endpoint::Command(cmd.to_owned()))
        } else if s == "mock:oracle" {
            Ok(Endpoint::MockOracle)
        } else if s == "mock:degenerate" {
            Ok(Endpoint::MockDegenerate)
        } else if let Some(path) = s.strip_prefix("mock:scripted=") {
            Ok(Endpoint::MockScripted(path.to_owned()))
        } else {
            Err(format!(
                "unrecognized model endpoint {s:?} (expected http://..., cmd:<command>, mock:oracle, \
                 mock:degenerate or mock:scripted=<file>)"
            ))
        }
    }
}

/// Opens a client for an endpoint. `corpus` backs the oracle mock.
pub fn connect(
    endpoint: &Endpoint,
    corpus: &[Instance],
    timeout: Duration,
    max_in_flight: usize,
) -> Result<Box<dyn ModelClient>, ClientError> {
    Ok(match endpoint {
        Endpoint::Http(url) => Box::new(HttpClient::new(url, timeout)?),
        Endpoint::Command(cmd) => Box::new(SubprocessClient::spawn_shell(cmd, timeout, max_in_flight)?),
        Endpoint::MockOracle => Box::new(OracleClient::new(corpus)),
        Endpoint::MockDegenerate => Box::new(DegenerateClient),
        Endpoint::MockScripted(path) => {
            let bytes = std::fs::read(path).map_err(|e| ClientError::Transport(format!("{path}: {e}")))?;
            Box::new(ScriptedClient::from_json(&bytes)?)
        }
    })
}
