//! Provider-agnostic chat-completion access with deterministic record/replay.

mod cassette;
mod mock;
mod templates;

pub use cassette::{Cassette, CassetteEntry, CassetteWriter};
pub use mock::MockPolicy;
pub use templates::{parse_tagged_block, render_template, TemplateId};

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable holding the bearer credential for live calls.
pub const API_KEY_ENV: &str = "LAYOUTFORGE_API_KEY";
pub const DEFAULT_MODEL_ID: &str = "gpt-4o";
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<(Role, String)>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user(prompt: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![(Role::User, prompt.into())],
            model_id: DEFAULT_MODEL_ID.to_string(),
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    pub fn push(&mut self, role: Role, text: impl Into<String>) {
        self.messages.push((role, text.into()));
    }

    /// Content-only fingerprint: stable across runs and message-object
    /// identity, sensitive to the model id and every message.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model_id.as_bytes());
        hasher.update([0x1f]);
        for (role, text) in &self.messages {
            hasher.update(role.as_str().as_bytes());
            hasher.update([0x1e]);
            hasher.update(text.as_bytes());
            hasher.update([0x1e]);
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<()> {
        if !self.messages.iter().any(|(r, _)| *r == Role::User) {
            return Err(Error::NoUserMessage);
        }
        Ok(())
    }

    /// The prompt text a scripted policy dispatches on.
    fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|(r, _)| *r == Role::User)
            .map(|(_, t)| t.as_str())
            .expect("validated request has a user message")
    }
}

/// How completions are produced. `Replay` performs no network activity.
#[derive(Clone, Debug)]
pub enum GatewayMode {
    Live {
        endpoint: String,
        api_key_env: String,
    },
    Replay {
        cassette: PathBuf,
    },
    Record {
        cassette: PathBuf,
        endpoint: String,
        api_key_env: String,
    },
    Mock {
        policy: String,
    },
}

enum Backend {
    Live(LiveState),
    Replay(Cassette),
    Record {
        writer: Mutex<CassetteWriter>,
        live: LiveState,
    },
    Mock {
        policy: MockPolicy,
        recorder: Option<Mutex<CassetteWriter>>,
    },
}

struct LiveState {
    endpoint: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl LiveState {
    fn new(endpoint: String, api_key_env: String) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(DEFAULT_TIMEOUT_SECS))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(LiveState {
            endpoint,
            api_key_env,
            client,
        })
    }

    fn complete(&self, req: &ChatRequest) -> Result<String> {
        let key = std::env::var(&self.api_key_env).map_err(|_| Error::MissingCredential {
            var: self.api_key_env.clone(),
        })?;
        let messages: Vec<serde_json::Value> = req
            .messages
            .iter()
            .map(|(role, text)| {
                serde_json::json!({"role": role.as_str(), "content": text})
            })
            .collect();
        let body = serde_json::json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Error::Timeout {
                        seconds: DEFAULT_TIMEOUT_SECS,
                    }
                } else {
                    Error::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Provider {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let parsed: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Transport(e.to_string()))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Transport("response lacks choices[0].message.content".into()))
    }
}

/// Chat-completion gateway. Thread-safe: replay reads are lock-free, cassette
/// writes are serialized through one writer.
pub struct Gateway {
    backend: Backend,
    used: Mutex<Vec<CassetteEntry>>,
}

impl Gateway {
    pub fn new(mode: &GatewayMode) -> Result<Self> {
        let backend = match mode {
            GatewayMode::Live {
                endpoint,
                api_key_env,
            } => Backend::Live(LiveState::new(endpoint.clone(), api_key_env.clone())?),
            GatewayMode::Replay { cassette } => Backend::Replay(Cassette::load(cassette)?),
            GatewayMode::Record {
                cassette,
                endpoint,
                api_key_env,
            } => Backend::Record {
                writer: Mutex::new(CassetteWriter::open(cassette)?),
                live: LiveState::new(endpoint.clone(), api_key_env.clone())?,
            },
            GatewayMode::Mock { policy } => Backend::Mock {
                policy: MockPolicy::parse(policy)?,
                recorder: None,
            },
        };
        Ok(Gateway {
            backend,
            used: Mutex::new(Vec::new()),
        })
    }

    pub fn mock(policy: &str) -> Result<Self> {
        Gateway::new(&GatewayMode::Mock {
            policy: policy.into(),
        })
    }

    pub fn replay(cassette: &Path) -> Result<Self> {
        Gateway::new(&GatewayMode::Replay {
            cassette: cassette.to_path_buf(),
        })
    }

    /// Mock backend that also records its session to a cassette, so replay
    /// fixtures can be produced without any network access.
    pub fn mock_recording(policy: &str, cassette: &Path) -> Result<Self> {
        Ok(Gateway {
            backend: Backend::Mock {
                policy: MockPolicy::parse(policy)?,
                recorder: Some(Mutex::new(CassetteWriter::open(cassette)?)),
            },
            used: Mutex::new(Vec::new()),
        })
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let fingerprint = req.fingerprint();
        let (response, provider) = match &self.backend {
            Backend::Replay(cassette) => match cassette.get(&fingerprint) {
                Some(entry) => (entry.response.clone(), entry.provider.clone()),
                None => return Err(Error::CassetteMiss { fingerprint }),
            },
            Backend::Live(live) => (live.complete(req)?, "live".to_string()),
            Backend::Record { writer, live } => {
                let mut writer = writer.lock().expect("cassette writer poisoned");
                if let Some(entry) = writer.get(&fingerprint) {
                    (entry.response.clone(), entry.provider.clone())
                } else {
                    let response = live.complete(req)?;
                    writer.append(CassetteEntry {
                        fingerprint: fingerprint.clone(),
                        response: response.clone(),
                        timestamp: now_string(),
                        provider: "live".into(),
                    })?;
                    (response, "live".to_string())
                }
            }
            Backend::Mock { policy, recorder } => {
                let response = policy.respond(req.last_user_text());
                if let Some(recorder) = recorder {
                    recorder
                        .lock()
                        .expect("cassette writer poisoned")
                        .append(CassetteEntry {
                            fingerprint: fingerprint.clone(),
                            response: response.clone(),
                            timestamp: now_string(),
                            provider: "mock".into(),
                        })?;
                }
                (response, "mock".to_string())
            }
        };
        let mut used = self.used.lock().expect("usage log poisoned");
        if !used.iter().any(|e| e.fingerprint == fingerprint) {
            used.push(CassetteEntry {
                fingerprint,
                response: response.clone(),
                timestamp: "0".into(),
                provider,
            });
        }
        Ok(response)
    }

    /// Fingerprints served so far, in first-use order.
    pub fn fingerprints_used(&self) -> Vec<String> {
        self.used
            .lock()
            .expect("usage log poisoned")
            .iter()
            .map(|e| e.fingerprint.clone())
            .collect()
    }

    /// The request/response pairs served so far, for artifact copies.
    pub fn entries_used(&self) -> Vec<CassetteEntry> {
        self.used.lock().expect("usage log poisoned").clone()
    }
}

fn now_string() -> String {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_depends_on_content_only() {
        let a = ChatRequest::user("hello");
        let b = ChatRequest::user("hello");
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = ChatRequest::user("other");
        assert_ne!(a.fingerprint(), c.fingerprint());
        let mut d = ChatRequest::user("hello");
        d.model_id = "another-model".into();
        assert_ne!(a.fingerprint(), d.fingerprint());
    }

    #[test]
    fn replay_round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cassette.jsonl");
        let req = ChatRequest::user("ping");
        {
            let mut writer = CassetteWriter::open(&path).unwrap();
            writer
                .append(CassetteEntry {
                    fingerprint: req.fingerprint(),
                    response: "pong".into(),
                    timestamp: "0".into(),
                    provider: "test".into(),
                })
                .unwrap();
        }
        let gw = Gateway::replay(&path).unwrap();
        assert_eq!(gw.complete(&req).unwrap(), "pong");
        let miss = ChatRequest::user("unknown");
        match gw.complete(&miss) {
            Err(Error::CassetteMiss { fingerprint }) => {
                assert_eq!(fingerprint, miss.fingerprint());
            }
            other => panic!("expected cassette miss, got {other:?}"),
        }
        assert_eq!(gw.fingerprints_used(), vec![req.fingerprint()]);
    }

    #[test]
    fn mock_recording_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cassette.jsonl");
        let req = ChatRequest::user(
            "Output both integer scores between two </scores> tokens\n- Object List: []",
        );
        let recorded = {
            let gw = Gateway::mock_recording("judge:81,64", &path).unwrap();
            gw.complete(&req).unwrap()
        };
        let gw = Gateway::replay(&path).unwrap();
        assert_eq!(gw.complete(&req).unwrap(), recorded);
        assert!(recorded.contains("position: 81"));
    }

    #[test]
    fn request_without_user_message_is_rejected() {
        let req = ChatRequest {
            messages: vec![(Role::System, "sys".into())],
            model_id: DEFAULT_MODEL_ID.into(),
            temperature: 0.0,
            max_tokens: 16,
        };
        let gw = Gateway::mock("standard").unwrap();
        assert!(matches!(gw.complete(&req), Err(Error::NoUserMessage)));
    }
}
