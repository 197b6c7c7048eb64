use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{BackendTag, ChatBackend, ChatExchange, Completion, LlmError};

pub const ENV_API_KEY: &str = "AGENT_LLM_API_KEY";
pub const ENV_BASE_URL: &str = "AGENT_LLM_BASE_URL";

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    pub base_url: String,
    pub path: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Retries after a 429 before giving up with `RateLimited`.
    pub max_retries: u32,
    /// First backoff delay; doubled after each retry.
    pub backoff: Duration,
    /// Dotted paths into the response body; numeric segments index arrays.
    pub text_path: String,
    pub prompt_tokens_path: String,
    pub completion_tokens_path: String,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "https://api.openai.com/v1".into(),
            path: "/chat/completions".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            text_path: "choices.0.message.content".into(),
            prompt_tokens_path: "usage.prompt_tokens".into(),
            completion_tokens_path: "usage.completion_tokens".into(),
        }
    }
}

impl LiveConfig {
    /// Defaults overridden by `AGENT_LLM_BASE_URL` and `AGENT_LLM_API_KEY`.
    pub fn from_env() -> Self {
        let mut cfg = LiveConfig::default();
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            if !url.is_empty() {
                cfg.base_url = url;
            }
        }
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        cfg
    }

    pub fn endpoint(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LiveBackend { config, agent }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<Result<Completion, Option<Duration>>, LlmError> {
        let mut req = self.agent.post(self.config.endpoint());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            let hint = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Ok(Err(hint));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Endpoint { status, body: text });
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::MalformedResponse(format!("body is not JSON: {e}")))?;
        Ok(Ok(self.extract(&json)?))
    }

    fn extract(&self, json: &Value) -> Result<Completion, LlmError> {
        let text = lookup(json, &self.config.text_path)
            .and_then(Value::as_str)
            .ok_or_else(|| {
                LlmError::MalformedResponse(format!("no text at `{}`", self.config.text_path))
            })?;
        let count = |path: &str| lookup(json, path).and_then(Value::as_u64).unwrap_or(0);
        Ok(Completion {
            text: text.to_string(),
            prompt_tokens: count(&self.config.prompt_tokens_path),
            completion_tokens: count(&self.config.completion_tokens_path),
            backend: BackendTag::Live,
        })
    }
}

fn lookup<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |v, seg| match v {
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        Value::Object(map) => map.get(seg),
        _ => None,
    })
}

impl ChatBackend for LiveBackend {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError> {
        exchange.validate()?;
        let body = exchange.wire_body();
        let mut delay = self.config.backoff;
        let mut retries = 0;
        loop {
            match self.attempt(&body)? {
                Ok(c) => return Ok(c),
                Err(hint) if retries >= self.config.max_retries => {
                    return Err(LlmError::RateLimited { retry_after: hint })
                }
                Err(hint) => {
                    thread::sleep(hint.map_or(delay, |h| h.min(delay * 4)));
                    delay *= 2;
                    retries += 1;
                }
            }
        }
    }
}
