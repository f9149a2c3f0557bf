//! Minimal JSON-over-HTTP transport shared by the external embedding and
//! chat-completion clients. Abstracted behind a trait so tests can inject
//! canned responses without any network access.

use crate::error::{Error, Result};

pub trait JsonTransport: Send + Sync {
    /// POST a JSON body, returning the parsed JSON response.
    /// Implementations return `Err(message)` on any transport- or
    /// protocol-level failure; retry policy lives in the callers.
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
    ) -> std::result::Result<serde_json::Value, String>;
}

/// Blocking HTTP implementation.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(60))
                .build(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl JsonTransport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
    ) -> std::result::Result<serde_json::Value, String> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.into_json::<serde_json::Value>()
            .map_err(|e| e.to_string())
    }
}

/// Call `transport` up to `1 + retries` times, surfacing the last failure.
pub fn post_with_retries(
    transport: &dyn JsonTransport,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
    retries: u32,
) -> Result<serde_json::Value> {
    let mut last = String::new();
    for _ in 0..=retries {
        match transport.post_json(url, api_key, body) {
            Ok(v) => return Ok(v),
            Err(msg) => last = msg,
        }
    }
    Err(Error::Transport {
        attempts: retries + 1,
        message: last,
    })
}
