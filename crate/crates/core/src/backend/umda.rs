//! A completion engine that behaves exactly like UMDA.
//!
//! Each bit of every emitted line is sampled independently from the
//! per-position frequency of `1` among the parents. Parents are either fixed
//! at construction or read from the prompt's complete lines, which is how
//! the engine plugs into an evolution loop unchanged.

use super::{
    assemble, renormalize, request_stream, sample_index, CompletionRequest, CompletionResponse,
    Engine, EngineError, GeneratedToken, NextTokenDistribution,
};
use crate::binary::Codec;

#[derive(Clone, Debug)]
pub struct UmdaMock {
    codec: Codec,
    fixed: Option<Vec<String>>,
    lines_per_completion: usize,
}

/// Engine sampling from the marginals of a fixed parent set.
pub fn make_umda_mock(parents: &[String], codec: Codec) -> Result<UmdaMock, EngineError> {
    let Some(first) = parents.first() else {
        return Err(EngineError::Config("UMDA mock needs at least one parent".into()));
    };
    for p in parents {
        if !crate::binary::is_bits(p) {
            return Err(EngineError::Config(format!("parent {p:?} is not a bitstring")));
        }
        if p.len() != first.len() {
            return Err(EngineError::Config("parents differ in length".into()));
        }
    }
    Ok(UmdaMock {
        codec,
        fixed: Some(parents.to_vec()),
        lines_per_completion: 3,
    })
}

impl UmdaMock {
    /// Engine that takes its parents from each prompt.
    pub fn from_prompt(codec: Codec) -> Self {
        Self {
            codec,
            fixed: None,
            lines_per_completion: 3,
        }
    }

    pub fn with_lines(mut self, lines: usize) -> Self {
        self.lines_per_completion = lines.max(1);
        self
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    /// Parents in effect for `prompt`, and the number of bits already
    /// written on the prompt's trailing partial line.
    fn context(&self, prompt: &str) -> (Vec<String>, usize) {
        let (complete, partial) = match prompt.rfind('\n') {
            Some(i) => (&prompt[..i], &prompt[i + 1..]),
            None => ("", prompt),
        };
        let position = partial.bytes().filter(|b| matches!(b, b'0' | b'1')).count();
        if let Some(fixed) = &self.fixed {
            return (fixed.clone(), position);
        }
        let mut parents: Vec<String> = Vec::new();
        for line in complete.lines() {
            let Some(bits) = self.decode_line(line) else { continue };
            if parents.first().map_or(true, |p| p.len() == bits.len()) {
                parents.push(bits);
            }
        }
        (parents, position)
    }

    fn decode_line(&self, line: &str) -> Option<String> {
        let line = line.trim();
        self.codec.decode(line).or_else(|| {
            // Tolerate an item prefix such as "Parent: 0101".
            let tail = line.rsplit([' ', ':']).next()?;
            self.codec.decode(tail)
        })
    }

    /// Per-position probability of a `1`.
    fn frequencies(parents: &[String]) -> Vec<(usize, usize)> {
        let len = parents.first().map_or(0, String::len);
        (0..len)
            .map(|j| {
                let ones = parents.iter().filter(|p| p.as_bytes()[j] == b'1').count();
                (ones, parents.len())
            })
            .collect()
    }

    fn bit_probs((ones, total): (usize, usize)) -> [f64; 2] {
        [(total - ones) as f64 / total as f64, ones as f64 / total as f64]
    }
}

impl Engine for UmdaMock {
    fn name(&self) -> &str {
        "umda-mock"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        req.validate()?;
        let (parents, start) = self.context(&req.prompt);
        if parents.is_empty() {
            return Ok(assemble(std::iter::empty(), req));
        }
        let freqs = Self::frequencies(&parents);
        let mut rng = request_stream(self.name(), req);
        let mut tokens = Vec::new();
        for line in 0..self.lines_per_completion {
            let first = if line == 0 { start.min(freqs.len()) } else { 0 };
            for &f in &freqs[first..] {
                if self.codec == Codec::Underscore {
                    tokens.push(GeneratedToken::certain("_"));
                }
                let probs = Self::bit_probs(f);
                let bit = sample_index(&probs, &req.params, &mut rng);
                let mut top: Vec<(String, f64)> = vec![
                    ("0".to_string(), probs[0].ln()),
                    ("1".to_string(), probs[1].ln()),
                ];
                top.sort_by(|a, b| b.1.total_cmp(&a.1));
                tokens.push(GeneratedToken {
                    text: bit.to_string(),
                    logprob: probs[bit].ln(),
                    top,
                });
            }
            tokens.push(GeneratedToken::certain("\n"));
        }
        Ok(assemble(tokens, req))
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    fn next_token_distribution(
        &self,
        prefix: &str,
        candidates: &[&str],
        temperature: f64,
    ) -> Result<NextTokenDistribution, EngineError> {
        if candidates.is_empty() {
            return Err(EngineError::InvalidRequest("no candidate tokens".into()));
        }
        let (parents, position) = self.context(prefix);
        if parents.is_empty() {
            return Err(EngineError::Engine("no bitstring parents in prompt".into()));
        }
        let freqs = Self::frequencies(&parents);
        let probs = freqs.get(position).map(|&f| Self::bit_probs(f));
        let raw: Vec<(String, f64)> = candidates
            .iter()
            .map(|&c| {
                let p = match (c, probs) {
                    ("0", Some(p)) => p[0],
                    ("1", Some(p)) => p[1],
                    _ => 0.0,
                };
                (c.to_string(), p)
            })
            .collect();
        Ok(NextTokenDistribution {
            prefix: prefix.to_string(),
            candidates: renormalize(&raw, temperature),
            approximated: false,
        })
    }
}
