//! Trajectory judge over a chat-completions style HTTP endpoint.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use guirl_core::rollout::{Judge, JudgeError, JudgeRequest};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::imaging::screenshot_png;

pub const DEFAULT_KEY_ENV: &str = "GUIRL_JUDGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpJudgeConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth header.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Screenshot shrink factor for judge images.
    pub downsample: u32,
    pub max_tokens: u32,
}

pub struct HttpJudge {
    cfg: HttpJudgeConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpJudge {
    pub fn new(cfg: HttpJudgeConfig) -> Self {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; judge requests go out without credentials", cfg.api_key_env);
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent, api_key }
    }
}

/// Request body: the rendered prompt as text, then one image part per
/// visited screen (before each step, then the final screen).
pub fn request_body(
    req: &JudgeRequest<'_>,
    model: &str,
    downsample: u32,
    max_tokens: u32,
) -> Result<Value, JudgeError> {
    let mut content = vec![json!({ "type": "text", "text": req.prompt })];
    for state in req.states {
        let png = screenshot_png(req.script, state, downsample).map_err(|e| JudgeError::Transport(e.to_string()))?;
        content.push(json!({
            "type": "image_url",
            "image_url": { "url": format!("data:image/png;base64,{}", B64.encode(png)) },
        }));
    }
    Ok(json!({
        "model": model,
        "temperature": 0,
        "max_tokens": max_tokens,
        "messages": [{ "role": "user", "content": content }],
    }))
}

/// Extracts `choices[0].message.content` (string or list of text parts).
pub fn reply_text(body: &Value) -> Result<String, JudgeError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let text: Vec<&str> = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            if text.is_empty() {
                Err(JudgeError::Malformed("reply has no text parts".into()))
            } else {
                Ok(text.concat())
            }
        }
        _ => Err(JudgeError::Malformed("reply lacks choices[0].message.content".into())),
    }
}

impl Judge for HttpJudge {
    fn complete(&self, req: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let body = request_body(req, &self.cfg.model, self.cfg.downsample, self.cfg.max_tokens)?;
        let mut call = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| JudgeError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| JudgeError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(JudgeError::Transport(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| JudgeError::Malformed(format!("response is not JSON: {e}")))?;
        reply_text(&value)
    }
}

/// Caps concurrent calls into the wrapped judge.
pub struct LimitedJudge<J> {
    inner: J,
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl<J: Judge> LimitedJudge<J> {
    pub fn new(inner: J, limit: usize) -> Self {
        Self { inner, limit: limit.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }
}

impl<J: Judge> Judge for LimitedJudge<J> {
    fn complete(&self, req: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        {
            let mut n = self.active.lock().expect("judge limiter poisoned");
            while *n >= self.limit {
                n = self.freed.wait(n).expect("judge limiter poisoned");
            }
            *n += 1;
        }
        let out = self.inner.complete(req);
        *self.active.lock().expect("judge limiter poisoned") -= 1;
        self.freed.notify_one();
        out
    }
}
