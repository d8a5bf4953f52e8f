// Generic chat-completion client: POST {model, messages, temperature,
// max_tokens} and read choices[0].message.content. Provider-specific
// adapters can sit behind any endpoint that speaks this shape.

use std::time::Duration;

use serde_json::json;

use super::{with_retry, LlmClient, LlmError, Prompt, RetryPolicy, DEFAULT_TEMPERATURE};

pub const ENV_ENDPOINT: &str = "GLOSSBOOT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "GLOSSBOOT_LLM_API_KEY";
pub const ENV_MODEL: &str = "GLOSSBOOT_LLM_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(endpoint: &str, model: &str) -> Self {
        HttpConfig {
            endpoint: endpoint.to_string(),
            api_key: None,
            model: model.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 1024,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        }
    }

    /// Endpoint and model from the environment; the API key is optional.
    pub fn from_env() -> Result<Self, LlmError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let endpoint = var(ENV_ENDPOINT).ok_or_else(|| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = var(ENV_MODEL).ok_or_else(|| LlmError::Config(format!("{ENV_MODEL} is not set")))?;
        let mut config = HttpConfig::new(&endpoint, &model);
        config.api_key = var(ENV_API_KEY);
        Ok(config)
    }
}

pub struct HttpClient {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpClient { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn request_once(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let transport = |e: reqwest::Error| LlmError::Transport {
            attempts: 1,
            message: e.to_string(),
        };
        let resp = req.send().map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        extract_content(&text)
    }
}

/// `choices[0].message.content` of a chat-completion response.
pub(crate) fn extract_content(text: &str) -> Result<String, LlmError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| LlmError::NotJson {
        message: format!("response envelope: {e}"),
        raw: text.to_string(),
    })?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::NotJson {
            message: "missing choices[0].message.content".to_string(),
            raw: text.to_string(),
        })
}

impl LlmClient for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        with_retry(&self.config.retry, std::thread::sleep, |_| self.request_once(prompt))
    }
}
