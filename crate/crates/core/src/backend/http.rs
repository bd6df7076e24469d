//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, CallError, InferenceRequest, RequestContext, VisionBackend};

#[derive(Debug, Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    max_tokens: u32,
    temperature: f64,
    messages: [Message<'a>; 1],
}

#[derive(Debug, Serialize)]
struct Message<'a> {
    role: &'static str,
    content: [Part<'a>; 2],
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Part<'a> {
    Text { text: &'a str },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Serialize)]
struct ImageUrl {
    url: String,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// JSON body of a chat-completions request carrying one text part and one
/// base64 data-URL image part.
pub fn chat_request_body(model_id: &str, request: &InferenceRequest) -> String {
    let payload = base64::engine::general_purpose::STANDARD.encode(request.image_bytes.as_slice());
    let body = ChatBody {
        model: model_id,
        max_tokens: request.decoding.max_output_tokens,
        temperature: request.decoding.temperature,
        messages: [Message {
            role: "user",
            content: [
                Part::Text { text: &request.prompt_text },
                Part::ImageUrl {
                    image_url: ImageUrl { url: format!("data:{};base64,{payload}", request.image_mime) },
                },
            ],
        }],
    };
    serde_json::to_string(&body).expect("request body serializes")
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model_id: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!(
                "{}: ${} is not set, sending requests without credentials",
                config.name,
                config.api_key_env
            );
        }
        Ok(Self {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model_id: config.model_id.clone(),
            api_key,
        })
    }
}

impl VisionBackend for HttpBackend {
    fn complete(&self, request: &InferenceRequest, _: &RequestContext<'_>) -> Result<String, CallError> {
        let mut builder = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(chat_request_body(&self.model_id, request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(CallError::Status { status: status.as_u16(), body });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&body).map_err(|e| CallError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| CallError::Malformed("no choices[0].message.content".into()))
    }
}
