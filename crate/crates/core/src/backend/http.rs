//! Client for OpenAI-style text-completion servers.
//!
//! Request body:
//! `{model?, prompt, max_tokens, temperature, top_p, top_k?, stop, logprobs?, seed?}`.
//! Response body: `{choices: [{text, finish_reason, logprobs?}]}` where
//! `logprobs` is `{tokens, token_logprobs, top_logprobs}`.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    renormalize, truncate_at_stop, CompletionRequest, CompletionResponse, Engine, EngineError,
    FinishReason, NextTokenDistribution, SamplingParams, TokenLogprob,
};

#[derive(Clone, Debug, PartialEq)]
pub struct HttpConfig {
    /// Full URL of the completions endpoint.
    pub endpoint: String,
    pub model: Option<String>,
    /// Sent as a bearer token.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    /// Alternatives requested when probing next-token probabilities.
    pub probe_top_n: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: None,
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            probe_top_n: 20,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<usize>,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

enum Attempt {
    Retry(EngineError),
    Fail(EngineError),
}

pub struct HttpEngine {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpEngine {
    pub fn new(config: HttpConfig) -> Result<Self, EngineError> {
        if !config.endpoint.starts_with("http://") && !config.endpoint.starts_with("https://") {
            return Err(EngineError::Config(format!(
                "endpoint {:?} is not an http(s) URL",
                config.endpoint
            )));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn post_once(&self, body: &WireRequest<'_>) -> Result<WireChoice, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Attempt::Retry(EngineError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(EngineError::Transport(format!("HTTP {status}"))));
        }
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Attempt::Fail(EngineError::Engine(format!("HTTP {status}: {detail}"))));
        }
        let parsed: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fail(EngineError::Engine(format!("malformed response: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Attempt::Fail(EngineError::Engine("response has no choices".into())))
    }

    fn post(&self, body: &WireRequest<'_>) -> Result<WireChoice, EngineError> {
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.post_once(body) {
                Ok(choice) => return Ok(choice),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= self.config.max_retries {
                        return Err(e);
                    }
                    attempt += 1;
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }

    fn wire<'a>(&'a self, prompt: &'a str, params: &'a SamplingParams, logprobs: Option<usize>) -> WireRequest<'a> {
        WireRequest {
            model: self.config.model.as_deref(),
            prompt,
            max_tokens: params.max_new_tokens,
            temperature: params.temperature,
            top_p: params.top_p,
            top_k: params.top_k,
            stop: &params.stop,
            logprobs,
            seed: params.seed,
        }
    }
}

fn convert_logprobs(lp: WireLogprobs, top_n: usize) -> Vec<TokenLogprob> {
    let tops = lp.top_logprobs.unwrap_or_default();
    lp.tokens
        .into_iter()
        .enumerate()
        .map(|(i, token)| {
            let mut top: Vec<(String, f64)> = tops
                .get(i)
                .cloned()
                .flatten()
                .unwrap_or_default()
                .into_iter()
                .collect();
            top.sort_by(|a, b| b.1.total_cmp(&a.1));
            top.truncate(top_n);
            TokenLogprob {
                logprob: lp.token_logprobs.get(i).copied().flatten().unwrap_or(f64::NEG_INFINITY),
                token,
                top,
            }
        })
        .collect()
}

impl Engine for HttpEngine {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        req.validate()?;
        let logprobs = req.want_logprobs.then_some(req.logprob_top_n);
        let choice = self.post(&self.wire(&req.prompt, &req.params, logprobs))?;
        // Servers differ on whether the stop sequence is echoed.
        let (text, cut) = truncate_at_stop(&choice.text, &req.params.stop);
        let finish_reason = match choice.finish_reason.as_deref() {
            _ if cut => FinishReason::StopSequence,
            Some("length") => FinishReason::Length,
            Some("error") => FinishReason::Error,
            _ => FinishReason::StopSequence,
        };
        let token_logprobs = if req.want_logprobs {
            choice.logprobs.map(|lp| convert_logprobs(lp, req.logprob_top_n))
        } else {
            None
        };
        Ok(CompletionResponse {
            text,
            finish_reason,
            token_logprobs,
        })
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    /// Probes with a one-token greedy completion. Candidates missing from
    /// the reported alternatives get the smallest reported probability and
    /// the result is flagged as approximated.
    fn next_token_distribution(
        &self,
        prefix: &str,
        candidates: &[&str],
        temperature: f64,
    ) -> Result<NextTokenDistribution, EngineError> {
        if candidates.is_empty() {
            return Err(EngineError::InvalidRequest("no candidate tokens".into()));
        }
        if prefix.is_empty() {
            return Err(EngineError::InvalidRequest("prefix must be non-empty".into()));
        }
        let mut params = SamplingParams::greedy();
        params.max_new_tokens = 1;
        let top_n = self.config.probe_top_n.max(candidates.len());
        let choice = self.post(&self.wire(prefix, &params, Some(top_n)))?;
        let top = choice
            .logprobs
            .and_then(|lp| lp.top_logprobs)
            .and_then(|t| t.into_iter().next().flatten())
            .filter(|t| !t.is_empty())
            .ok_or_else(|| EngineError::Capability("server returned no top logprobs".into()))?;
        let floor = top.values().map(|lp| lp.exp()).fold(f64::INFINITY, f64::min);
        let mut approximated = false;
        let raw: Vec<(String, f64)> = candidates
            .iter()
            .map(|&c| {
                let p = top.get(c).map(|lp| lp.exp()).unwrap_or_else(|| {
                    approximated = true;
                    floor
                });
                (c.to_string(), p)
            })
            .collect();
        Ok(NextTokenDistribution {
            prefix: prefix.to_string(),
            candidates: renormalize(&raw, temperature),
            approximated,
        })
    }
}
