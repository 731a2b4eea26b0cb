//! Chat-completion client.
//!
//! Request body (`POST {endpoint}`):
//!
//! ```json
//! {"model": "...", "messages": [{"role": "user", "content": "<prompt>"}],
//!  "top_p": 0.3, "max_tokens": 512}
//! ```
//!
//! The reply must carry `choices[0].message.content`; `usage.prompt_tokens`
//! and `usage.completion_tokens` are read when present. The API key, when
//! set, is sent as `Authorization: Bearer <key>`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{render_prompt, CompletionResponse, LlmBackend, LlmError, PromptRequest, Usage};

#[derive(Debug, Clone)]
pub struct HttpLlmOptions {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base: Duration,
}

impl HttpLlmOptions {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

pub struct HttpLlm {
    id: String,
    options: HttpLlmOptions,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<usize>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(CompletionResponse),
    Retry(String),
    Fatal(LlmError),
}

impl HttpLlm {
    pub fn new(options: HttpLlmOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build();
        Self {
            id: format!("http:{}:{}", options.endpoint, options.model),
            agent: ureq::Agent::new_with_config(config),
            options,
        }
    }

    fn attempt(&self, body: &ChatRequest<'_>, started: Instant) -> Attempt {
        let mut request = self.agent.post(&self.options.endpoint);
        if let Some(key) = &self.options.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match request.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("status {status}"));
        }
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Attempt::Fatal(LlmError::Rejected { status, body });
        }
        let parsed: ChatResponse = match response.body_mut().read_json() {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(LlmError::InvalidResponse(e.to_string())),
        };
        let Some(text) = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
        else {
            return Attempt::Fatal(LlmError::InvalidResponse("no choices[0].message.content".into()));
        };
        let usage = parsed.usage.map_or(Usage::default(), |u| Usage {
            prompt_units: u.prompt_tokens,
            completion_units: u.completion_tokens,
        });
        Attempt::Done(CompletionResponse {
            text,
            usage,
            latency: started.elapsed(),
            backend_id: self.id.clone(),
            cached: false,
        })
    }
}

impl LlmBackend for HttpLlm {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LlmError> {
        let prompt = render_prompt(req)?;
        let body = ChatRequest {
            model: &self.options.model,
            messages: [ChatMessage {
                role: "user",
                content: &prompt,
            }],
            top_p: req.sampling.top_p,
            max_tokens: req.max_output_units,
        };
        let started = Instant::now();
        let attempts = self.options.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.options.backoff_base * 2u32.saturating_pow(attempt - 1);
                warn!(attempt, error = %last_error, ?backoff, "retrying completion");
                std::thread::sleep(backoff);
            }
            match self.attempt(&body, started) {
                Attempt::Done(response) => return Ok(response),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(message) => last_error = message,
            }
        }
        Err(LlmError::BackendUnavailable {
            attempts,
            message: last_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::TemplateId;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves canned `(status, body)` replies in order, one per connection,
    /// and forwards each received request body.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut request = vec![0; content_length];
                reader.read_exact(&mut request).unwrap();
                tx.send(String::from_utf8(request).unwrap()).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, rx)
    }

    fn client(url: String, retries: u32) -> HttpLlm {
        HttpLlm::new(HttpLlmOptions {
            max_retries: retries,
            backoff_base: Duration::from_millis(1),
            timeout: Duration::from_secs(5),
            ..HttpLlmOptions::new(url, "test-model")
        })
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Paris."}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#;

    #[test]
    fn sends_single_user_message_and_parses_reply() {
        let (url, rx) = serve(vec![(200, OK)]);
        let llm = client(url, 0);
        let req = PromptRequest::new(TemplateId::PlainAnswer)
            .slot("question", "Capital of France?")
            .max_output_units(16);
        let response = llm.complete(&req).unwrap();
        assert_eq!(response.text, "Paris.");
        assert_eq!(response.usage.completion_units, 2);
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "Capital of France?");
        assert_eq!(sent["top_p"], 0.3);
        assert_eq!(sent["max_tokens"], 16);
    }

    #[test]
    fn retries_transient_failures() {
        let (url, _rx) = serve(vec![(503, "{}"), (429, "{}"), (200, OK)]);
        let llm = client(url, 3);
        let req = PromptRequest::new(TemplateId::PlainAnswer).slot("question", "q");
        assert_eq!(llm.complete(&req).unwrap().text, "Paris.");
    }

    #[test]
    fn gives_up_after_retry_limit() {
        let (url, _rx) = serve(vec![(500, "{}"), (500, "{}")]);
        let llm = client(url, 1);
        let req = PromptRequest::new(TemplateId::PlainAnswer).slot("question", "q");
        assert!(matches!(
            llm.complete(&req),
            Err(LlmError::BackendUnavailable { attempts: 2, .. })
        ));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, _rx) = serve(vec![(401, r#"{"error":"bad key"}"#)]);
        let llm = client(url, 3);
        let req = PromptRequest::new(TemplateId::PlainAnswer).slot("question", "q");
        assert!(matches!(
            llm.complete(&req),
            Err(LlmError::Rejected { status: 401, .. })
        ));
    }
}
