//! OpenAI-compatible chat-completions backend.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::{build_prompt_with_hint, parse_llm_ranking, ChatMessage};
use super::{BackendReply, RankBackend, RankRequest};
use crate::error::{ListkError, Result};

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteOracleParams {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after the first, for transport errors and unparsable replies.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Environment variable holding the bearer token. Unset means no auth header.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

/// Sends one chat request and returns the assistant's text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> std::result::Result<String, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(params: &RemoteOracleParams) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(params.timeout_secs)))
            .build();
        HttpTransport {
            agent: ureq::Agent::new_with_config(config),
            endpoint: params.endpoint.clone(),
            model: params.model.clone(),
            token: std::env::var(&params.api_key_env)
                .ok()
                .filter(|t| !t.is_empty()),
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
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

impl ChatTransport for HttpTransport {
    fn complete(&self, messages: &[ChatMessage]) -> std::result::Result<String, String> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let resp: CompletionResponse = req
            .send_json(&body)
            .map_err(|e| e.to_string())?
            .into_body()
            .read_json()
            .map_err(|e| e.to_string())?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| "response has no message content".to_string())
    }
}

/// Prompts a chat model and parses its `[i] > [j]` answer.
///
/// Unparsable replies are retried up to `max_retries` times, after which the
/// input order is returned and the call is flagged as a fallback. Transport
/// errors on every attempt are an error.
pub struct RemoteBackend {
    transport: Box<dyn ChatTransport>,
    max_retries: u32,
    backoff: Duration,
}

impl RemoteBackend {
    pub fn new(transport: Box<dyn ChatTransport>, max_retries: u32) -> Self {
        RemoteBackend {
            transport,
            max_retries,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn http(params: &RemoteOracleParams) -> Result<Self> {
        if params.endpoint.is_empty() || params.model.is_empty() {
            return Err(ListkError::Config(
                "remote oracle needs an endpoint and a model".into(),
            ));
        }
        Ok(Self::new(
            Box::new(HttpTransport::new(params)),
            params.max_retries,
        ))
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }
}

impl RankBackend for RemoteBackend {
    fn rank(&self, req: &RankRequest<'_>) -> Result<BackendReply> {
        if req.query.text.trim().is_empty() {
            return Err(ListkError::invalid("remote oracle needs a non-empty query"));
        }
        // Known pivot order as 1-based positions, most relevant first.
        let hint: Option<Vec<usize>> = req.pivot_order.map(|asc| {
            asc.iter()
                .rev()
                .filter_map(|id| req.docs.iter().position(|d| d.id == *id).map(|p| p + 1))
                .collect()
        });
        let messages = build_prompt_with_hint(req.query, req.docs, hint.as_deref());

        let mut reply = BackendReply::default();
        let mut got_any_reply = false;
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                reply.retries += 1;
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.transport.complete(&messages) {
                Ok(text) => {
                    got_any_reply = true;
                    match parse_llm_ranking(&text, req.docs.len()) {
                        Ok(parsed) => {
                            reply.order = parsed
                                .positions
                                .iter()
                                .map(|&p| req.docs[p - 1].id)
                                .collect();
                            return Ok(reply);
                        }
                        Err(e) => {
                            reply.parse_failures += 1;
                            last_error = e.to_string();
                        }
                    }
                }
                Err(e) => last_error = e,
            }
        }
        if got_any_reply {
            reply.fell_back = true;
            reply.order = req.docs.iter().map(|d| d.id).collect();
            Ok(reply)
        } else {
            Err(ListkError::RemoteExhausted {
                attempts: self.max_retries + 1,
                last_error,
            })
        }
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DocId, Document, Query};
    use crate::oracle::Oracle;
    use std::sync::{Arc, Mutex};

    /// Replays canned replies and records the prompts it was sent.
    struct Canned {
        replies: Mutex<Vec<std::result::Result<String, String>>>,
        seen: Arc<Mutex<Vec<Vec<ChatMessage>>>>,
    }

    impl Canned {
        fn new(
            replies: Vec<std::result::Result<&str, &str>>,
        ) -> (Self, Arc<Mutex<Vec<Vec<ChatMessage>>>>) {
            let seen = Arc::new(Mutex::new(Vec::new()));
            let mut r: Vec<_> = replies
                .into_iter()
                .map(|x| x.map(String::from).map_err(String::from))
                .collect();
            r.reverse();
            (
                Canned {
                    replies: Mutex::new(r),
                    seen: seen.clone(),
                },
                seen,
            )
        }
    }

    impl ChatTransport for Canned {
        fn complete(&self, messages: &[ChatMessage]) -> std::result::Result<String, String> {
            self.seen.lock().unwrap().push(messages.to_vec());
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Err("no more replies".into()))
        }
    }

    fn docs() -> Vec<Document> {
        (0..3)
            .map(|i| Document::new(i, format!("passage {i}")))
            .collect()
    }

    fn oracle(
        replies: Vec<std::result::Result<&str, &str>>,
        retries: u32,
    ) -> (Oracle, Arc<Mutex<Vec<Vec<ChatMessage>>>>) {
        let (t, seen) = Canned::new(replies);
        let b = RemoteBackend::new(Box::new(t), retries).with_backoff(Duration::ZERO);
        (Oracle::new(Arc::new(b), 20).unwrap(), seen)
    }

    #[test]
    fn maps_positions_to_ids() {
        let d = docs();
        let (o, _) = oracle(vec![Ok("[3] > [1] > [2]")], 0);
        let r = o
            .rank(&Query::new("q", "x"), &d.iter().collect::<Vec<_>>())
            .unwrap();
        assert_eq!(r.order, vec![DocId(2), DocId(0), DocId(1)]);
    }

    #[test]
    fn retries_then_falls_back_to_input_order() {
        let d = docs();
        let (o, seen) = oracle(vec![Ok("no idea"), Ok("still no idea")], 1);
        let r = o
            .rank(&Query::new("q", "x"), &d.iter().collect::<Vec<_>>())
            .unwrap();
        assert_eq!(r.order, vec![DocId(0), DocId(1), DocId(2)]);
        let s = o.stats();
        assert_eq!(
            (s.calls, s.parse_failures, s.fallbacks, s.retries),
            (1, 2, 1, 1)
        );
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn transport_errors_exhaust() {
        let d = docs();
        let (o, _) = oracle(vec![Err("refused"), Err("refused")], 1);
        let e = o
            .rank(&Query::new("q", "x"), &d.iter().collect::<Vec<_>>())
            .unwrap_err();
        assert!(matches!(e, ListkError::RemoteExhausted { attempts: 2, .. }));
    }

    #[test]
    fn recovers_after_transient_error() {
        let d = docs();
        let (o, _) = oracle(vec![Err("503"), Ok("[2] > [1] > [3]")], 2);
        let r = o
            .rank(&Query::new("q", "x"), &d.iter().collect::<Vec<_>>())
            .unwrap();
        assert_eq!(r.order[0], DocId(1));
    }

    #[test]
    fn bucket_prompt_carries_pivot_order() {
        let d = docs();
        let (o, seen) = oracle(vec![Ok("[1] > [3] > [2]")], 0);
        // Pivots 0 < 1 ascending; the prompt lists them best first: [2] > [1].
        o.bucket_assign(&Query::new("q", "x"), &[&d[0], &d[1]], &[&d[2]])
            .unwrap();
        let prompts = seen.lock().unwrap();
        assert!(prompts[0][1].content.contains("[1] > [2] in relevance"));
    }

    #[test]
    fn empty_query_rejected() {
        let d = docs();
        let (o, _) = oracle(vec![Ok("[1]")], 0);
        assert!(o
            .rank(&Query::new("q", " "), &d.iter().collect::<Vec<_>>())
            .is_err());
    }
}
