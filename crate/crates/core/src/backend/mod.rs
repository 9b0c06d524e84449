//! Text-completion engines.
//!
//! Everything that turns a prompt into a continuation implements [`Engine`]:
//! an HTTP client for completions servers, deterministic mocks used by the
//! test suite and the analyses, and a record/replay pair.

mod http;
mod replay;
mod scripted;
mod subtree;
mod umda;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::RngStream;

pub use http::{HttpConfig, HttpEngine};
pub use replay::{read_recording, write_recording, Recording, RecordingEngine, ReplayEngine};
pub use scripted::FnEngine;
pub use subtree::{make_subtree_mock, SubtreeMock};
pub use umda::{make_umda_mock, UmdaMock};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    /// Softmax temperature; `0` is greedy decoding.
    #[serde(default = "one")]
    pub temperature: f64,
    /// `None` leaves the vocabulary unrestricted.
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default = "one")]
    pub top_p: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub stop: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

fn default_max_new_tokens() -> usize {
    150
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k: None,
            top_p: 1.0,
            max_new_tokens: default_max_new_tokens(),
            stop: Vec::new(),
            seed: None,
        }
    }
}

impl SamplingParams {
    /// Nucleus + top-k sampling used for bitstrings: top-p 0.8, top-k 30,
    /// 150 new tokens.
    pub fn binary_defaults() -> Self {
        Self {
            top_p: 0.8,
            top_k: Some(30),
            ..Self::default()
        }
    }

    /// Temperature 0.8, otherwise engine defaults.
    pub fn symreg_defaults() -> Self {
        Self {
            temperature: 0.8,
            max_new_tokens: 256,
            ..Self::default()
        }
    }

    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(EngineError::InvalidRequest(
                "temperature must be a nonnegative real".into(),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(EngineError::InvalidRequest("top_p must lie in (0, 1]".into()));
        }
        if self.top_k == Some(0) {
            return Err(EngineError::InvalidRequest("top_k must be positive".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(EngineError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub params: SamplingParams,
    pub want_logprobs: bool,
    pub logprob_top_n: usize,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, params: SamplingParams) -> Self {
        Self {
            prompt: prompt.into(),
            params,
            want_logprobs: false,
            logprob_top_n: 5,
        }
    }

    pub fn with_logprobs(mut self, top_n: usize) -> Self {
        self.want_logprobs = true;
        self.logprob_top_n = top_n.max(1);
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.prompt.is_empty() {
            return Err(EngineError::InvalidRequest("prompt must be non-empty".into()));
        }
        self.params.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinishReason {
    /// A stop sequence was hit or the engine ended the text on its own.
    StopSequence,
    Length,
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    /// Most likely alternatives at this step, best first.
    pub top: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub token_logprobs: Option<Vec<TokenLogprob>>,
}

/// Probabilities of a fixed candidate set for the next token.
#[derive(Clone, Debug, PartialEq)]
pub struct NextTokenDistribution {
    pub prefix: String,
    pub candidates: BTreeMap<String, f64>,
    /// True when some candidate was missing from the engine's report and
    /// was assigned a floor probability.
    pub approximated: bool,
}

impl NextTokenDistribution {
    pub fn prob(&self, token: &str) -> f64 {
        self.candidates.get(token).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("engine failure: {0}")]
    Engine(String),
    #[error("engine lacks capability: {0}")]
    Capability(String),
    #[error("replay miss for prompt starting {0:?}")]
    ReplayMiss(String),
    #[error("engine configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl EngineError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EngineError::Transport(_))
    }
}

/// Autoregressive text completion.
///
/// Implementations must be safe to call concurrently and, at temperature 0,
/// must return the same text for the same prompt.
pub trait Engine: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError>;

    fn supports_logprobs(&self) -> bool {
        false
    }

    /// Renormalized probabilities of `candidates` as the token following
    /// `prefix`, at the given softmax temperature.
    fn next_token_distribution(
        &self,
        _prefix: &str,
        _candidates: &[&str],
        _temperature: f64,
    ) -> Result<NextTokenDistribution, EngineError> {
        Err(EngineError::Capability(format!(
            "{} does not expose next-token probabilities",
            self.name()
        )))
    }
}

macro_rules! forward_engine {
    ($($ty:ty),*) => {$(
        impl<E: Engine + ?Sized> Engine for $ty {
            fn name(&self) -> &str {
                (**self).name()
            }
            fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
                (**self).complete(req)
            }
            fn supports_logprobs(&self) -> bool {
                (**self).supports_logprobs()
            }
            fn next_token_distribution(
                &self,
                prefix: &str,
                candidates: &[&str],
                temperature: f64,
            ) -> Result<NextTokenDistribution, EngineError> {
                (**self).next_token_distribution(prefix, candidates, temperature)
            }
        }
    )*};
}

forward_engine!(&E, Box<E>, Arc<E>);

/// One unit of mock output.
#[derive(Clone, Debug)]
pub(crate) struct GeneratedToken {
    pub text: String,
    pub logprob: f64,
    pub top: Vec<(String, f64)>,
}

impl GeneratedToken {
    pub fn certain(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            top: vec![(text.clone(), 0.0)],
            text,
            logprob: 0.0,
        }
    }
}

/// Applies the token budget and stop sequences to a lazily generated token
/// stream. The stop sequence itself is never part of the returned text.
pub(crate) fn assemble<I>(tokens: I, req: &CompletionRequest) -> CompletionResponse
where
    I: IntoIterator<Item = GeneratedToken>,
{
    let mut text = String::new();
    let mut logprobs = Vec::new();
    let mut finish = FinishReason::StopSequence;
    for (count, tok) in tokens.into_iter().enumerate() {
        if count == req.params.max_new_tokens {
            finish = FinishReason::Length;
            break;
        }
        let start = text.len();
        text.push_str(&tok.text);
        if req.want_logprobs {
            let mut top = tok.top;
            top.truncate(req.logprob_top_n);
            logprobs.push(TokenLogprob {
                token: tok.text,
                logprob: tok.logprob,
                top,
            });
        }
        // Only search the region a new match could occupy.
        let window = start.saturating_sub(longest(&req.params.stop));
        if let Some(cut) = earliest_stop(&text, &req.params.stop, window) {
            text.truncate(cut);
            finish = FinishReason::StopSequence;
            break;
        }
    }
    CompletionResponse {
        text,
        finish_reason: finish,
        token_logprobs: req.want_logprobs.then_some(logprobs),
    }
}

fn longest(stops: &[String]) -> usize {
    stops.iter().map(String::len).max().unwrap_or(0)
}

fn earliest_stop(text: &str, stops: &[String], from: usize) -> Option<usize> {
    let mut from = from.min(text.len());
    while !text.is_char_boundary(from) {
        from -= 1;
    }
    stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text[from..].find(s.as_str()).map(|i| i + from))
        .min()
}

/// Cuts `text` at the first occurrence of any stop sequence.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> (String, bool) {
    match earliest_stop(text, stops, 0) {
        Some(cut) => (text[..cut].to_string(), true),
        None => (text.to_string(), false),
    }
}

/// Tempers and renormalizes candidate probabilities.
///
/// Temperature `t` maps `p` to `p^(1/t)`, which is softmax of `log p / t`.
/// At `t = 0` the mass goes to the first most likely candidate. If every
/// candidate has zero mass the result is uniform.
pub fn renormalize(raw: &[(String, f64)], temperature: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if raw.is_empty() {
        return out;
    }
    let weights: Vec<f64> = if temperature == 0.0 {
        let best = argmax_first(raw.iter().map(|(_, p)| *p));
        (0..raw.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect()
    } else if temperature == 1.0 {
        raw.iter().map(|(_, p)| p.max(0.0)).collect()
    } else {
        raw.iter().map(|(_, p)| p.max(0.0).powf(1.0 / temperature)).collect()
    };
    let total: f64 = weights.iter().sum();
    for ((tok, _), w) in raw.iter().zip(&weights) {
        let p = if total > 0.0 && total.is_finite() {
            w / total
        } else {
            1.0 / raw.len() as f64
        };
        *out.entry(tok.clone()).or_insert(0.0) += p;
    }
    out
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Draws an index from `probs` after temperature, top-k and top-p
/// truncation. Greedy decoding breaks ties toward the lower index.
pub fn sample_index(probs: &[f64], params: &SamplingParams, rng: &mut RngStream) -> usize {
    if params.temperature == 0.0 || probs.len() == 1 {
        return argmax_first(probs.iter().copied());
    }
    let tempered: Vec<f64> = probs
        .iter()
        .map(|p| p.max(0.0).powf(1.0 / params.temperature))
        .collect();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| tempered[b].total_cmp(&tempered[a]).then(a.cmp(&b)));
    if let Some(k) = params.top_k {
        order.truncate(k.max(1));
    }
    let total: f64 = order.iter().map(|&i| tempered[i]).sum();
    if !(total > 0.0) {
        return order[0];
    }
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for &i in &order {
        kept.push(i);
        mass += tempered[i] / total;
        if mass >= params.top_p {
            break;
        }
    }
    let kept_total: f64 = kept.iter().map(|&i| tempered[i]).sum();
    let mut u = rng.gen::<f64>() * kept_total;
    for &i in &kept {
        u -= tempered[i];
        if u < 0.0 {
            return i;
        }
    }
    *kept.last().expect("at least one candidate kept")
}

/// Per-request stream for mock engines: keyed by the request seed and a
/// digest of the prompt, so concurrent calls stay reproducible.
pub(crate) fn request_stream(engine: &str, req: &CompletionRequest) -> RngStream {
    let digest = Sha256::digest(req.prompt.as_bytes());
    let tag: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let seed = if req.params.temperature == 0.0 {
        0
    } else {
        req.params.seed.unwrap_or(0)
    };
    RngStream::new(seed, format!("{engine}/{tag}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(parts: &[&str]) -> Vec<GeneratedToken> {
        parts.iter().map(|p| GeneratedToken::certain(*p)).collect()
    }

    #[test]
    fn assemble_respects_token_budget() {
        let mut req = CompletionRequest::new("p", SamplingParams::default());
        req.params.max_new_tokens = 2;
        let r = assemble(toks(&["a", "b", "c"]), &req);
        assert_eq!(r.text, "ab");
        assert_eq!(r.finish_reason, FinishReason::Length);
    }

    #[test]
    fn assemble_cuts_stop_sequences_spanning_tokens() {
        let mut req = CompletionRequest::new("p", SamplingParams::default()).with_logprobs(2);
        req.params.stop = vec!["\n\n".into()];
        let r = assemble(toks(&["ab", "\n", "\ncd"]), &req);
        assert_eq!(r.text, "ab");
        assert_eq!(r.finish_reason, FinishReason::StopSequence);
        assert_eq!(r.token_logprobs.unwrap().len(), 3);
    }

    #[test]
    fn natural_end_is_stop() {
        let req = CompletionRequest::new("p", SamplingParams::default());
        let r = assemble(toks(&["abc"]), &req);
        assert_eq!(r.text, "abc");
        assert_eq!(r.finish_reason, FinishReason::StopSequence);
        assert!(r.token_logprobs.is_none());
    }

    #[test]
    fn renormalize_single_and_zero_mass() {
        let one = renormalize(&[("1".into(), 0.0)], 1.0);
        assert_eq!(one["1"], 1.0);
        let d = renormalize(&[("0".into(), 0.2), ("1".into(), 0.6)], 1.0);
        assert!((d["0"] - 0.25).abs() < 1e-15 && (d["1"] - 0.75).abs() < 1e-15);
        let g = renormalize(&[("0".into(), 0.5), ("1".into(), 0.5)], 0.0);
        assert_eq!((g["0"], g["1"]), (1.0, 0.0));
    }

    #[test]
    fn tempering_sharpens() {
        let cold = renormalize(&[("a".into(), 0.25), ("b".into(), 0.75)], 0.5);
        // 0.25^2 : 0.75^2 = 1 : 9
        assert!((cold["a"] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn top_p_keeps_only_the_nucleus() {
        let params = SamplingParams {
            top_p: 0.8,
            ..SamplingParams::default()
        };
        let mut rng = RngStream::new(3, "t");
        for _ in 0..200 {
            assert_eq!(sample_index(&[0.1, 0.9], &params, &mut rng), 1);
        }
    }

    #[test]
    fn top_k_one_is_greedy() {
        let params = SamplingParams {
            top_k: Some(1),
            ..SamplingParams::default()
        };
        let mut rng = RngStream::new(3, "t");
        assert!((0..100).all(|_| sample_index(&[0.3, 0.2, 0.5], &params, &mut rng) == 2));
    }

    #[test]
    fn greedy_ties_to_lowest_index() {
        let mut rng = RngStream::new(0, "t");
        assert_eq!(sample_index(&[0.5, 0.5], &SamplingParams::greedy(), &mut rng), 0);
    }

    #[test]
    fn sampling_frequencies_track_probabilities() {
        let mut rng = RngStream::new(11, "freq");
        let params = SamplingParams::default();
        let ones = (0..20_000)
            .filter(|_| sample_index(&[0.7, 0.3], &params, &mut rng) == 1)
            .count();
        let rate = ones as f64 / 20_000.0;
        assert!((rate - 0.3).abs() < 0.015, "{rate}");
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SamplingParams::default();
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        assert!(CompletionRequest::new("", SamplingParams::default())
            .validate()
            .is_err());
    }
}
