//! A completion engine that performs subtree crossover on the expressions
//! found in its prompt. It lets symbolic-regression loops run end to end
//! without a language model.

use rand::Rng;

use super::{assemble, request_stream, CompletionRequest, CompletionResponse, Engine, EngineError, GeneratedToken};
use crate::rng::RngStream;
use crate::symreg::{parse_expression, subtree_crossover, Expr};

/// Characters per mock token.
const CHARS_PER_TOKEN: usize = 4;

#[derive(Clone, Debug)]
pub struct SubtreeMock {
    base: RngStream,
    lines_per_completion: usize,
}

pub fn make_subtree_mock(rng: RngStream) -> SubtreeMock {
    SubtreeMock {
        base: rng,
        lines_per_completion: 1,
    }
}

impl SubtreeMock {
    pub fn with_lines(mut self, lines: usize) -> Self {
        self.lines_per_completion = lines.max(1);
        self
    }

    /// Parseable complete lines of the prompt, in order.
    fn parents(prompt: &str) -> Vec<Expr> {
        let complete = prompt.rfind('\n').map_or("", |i| &prompt[..i]);
        complete
            .lines()
            .filter_map(|l| parse_expression(l.trim()).ok())
            .collect()
    }
}

impl Engine for SubtreeMock {
    fn name(&self) -> &str {
        "subtree-mock"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        req.validate()?;
        let parents = Self::parents(&req.prompt);
        if parents.is_empty() {
            return Ok(assemble(std::iter::empty(), req));
        }
        let call = request_stream(self.name(), req);
        let mut rng = self.base.child(format!("{}#{}", call.label(), call.seed()));
        let mut text = String::new();
        for _ in 0..self.lines_per_completion {
            let i = rng.gen_range(0..parents.len());
            let j = if parents.len() > 1 {
                (i + rng.gen_range(1..parents.len())) % parents.len()
            } else {
                i
            };
            text.push_str(&subtree_crossover(&parents[i], &parents[j], &mut rng).to_string());
            text.push('\n');
        }
        let chars: Vec<char> = text.chars().collect();
        let tokens = chars
            .chunks(CHARS_PER_TOKEN)
            .map(|c| GeneratedToken::certain(c.iter().collect::<String>()));
        Ok(assemble(tokens, req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SamplingParams;
    use crate::symreg::crossover_closure;

    fn engine() -> SubtreeMock {
        make_subtree_mock(RngStream::new(0, "mock"))
    }

    fn run(prompt: &str, seed: u64) -> String {
        let mut params = SamplingParams::symreg_defaults();
        params.seed = Some(seed);
        engine().complete(&CompletionRequest::new(prompt, params)).unwrap().text
    }

    #[test]
    fn single_node_parents() {
        for seed in 0..30 {
            let out = run("Header:\nx1\nx2\n", seed);
            assert!(out == "x1\n" || out == "x2\n", "{out:?}");
        }
    }

    #[test]
    fn children_come_from_swap_closure() {
        let a = parse_expression("sin(x1)").unwrap();
        let b = parse_expression("cos(x2)").unwrap();
        let mut closure: Vec<String> = crossover_closure(&a, &b)
            .iter()
            .chain(&crossover_closure(&b, &a))
            .map(ToString::to_string)
            .collect();
        closure.sort();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let out = run("Below:\nsin(x1)\ncos(x2)\n", seed);
            let child = out.trim_end().to_string();
            assert!(closure.binary_search(&child).is_ok(), "{child}");
            seen.insert(child);
        }
        assert!(seen.contains("sin(x2)"));
    }

    #[test]
    fn unparseable_prompt_gives_empty_completion() {
        assert_eq!(run("Header:\nx1 < 2\nAnswer:\n", 1), "");
    }

    #[test]
    fn seeded_requests_are_reproducible() {
        let p = "H\nx1 + x2*x1\nsin(x2) - x1**2\nexp(x1)\n";
        assert_eq!(run(p, 5), run(p, 5));
        let many = engine().with_lines(3);
        let r = many
            .complete(&CompletionRequest::new(p, SamplingParams::symreg_defaults()))
            .unwrap();
        assert_eq!(r.text.lines().count(), 3);
    }
}
