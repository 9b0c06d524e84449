//! Measurements of what an engine does to bitstring parents: how many of
//! its offspring are valid and new, and whether offspring resemble their
//! parents.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::RngCore;

use super::{hamming, neighborhood, Codec};
use crate::backend::{CompletionRequest, Engine, SamplingParams};
use crate::individual::{Individual, Provenance};
use crate::operator::{candidate_lines, format_prompt_encoded, OffspringParser, PromptTemplate, TextCodec};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct VariationMetrics {
    /// Percentage of offspring lines that decode to a bitstring of the
    /// parents' length; 0 when no lines were produced.
    pub valid_pct: f64,
    /// Distinct valid offspring that are not parents.
    pub novel_count: usize,
    pub lines: usize,
    pub valid: usize,
    /// Calls that failed or were skipped.
    pub failed_trials: usize,
}

/// Runs LMX `trials` times on one parent set, counting at most
/// `children_per_trial` offspring lines per call.
pub fn variation_metrics(
    parents: &[String],
    engine: &dyn Engine,
    trials: usize,
    children_per_trial: usize,
    codec: Codec,
    params: &SamplingParams,
    rng: &mut RngStream,
) -> VariationMetrics {
    let length = parents.first().map_or(0, String::len);
    let individuals: Vec<Individual> = parents
        .iter()
        .filter_map(|p| Individual::new(p.as_str(), Provenance::Seed).ok())
        .collect();
    let template = PromptTemplate::default();
    let parser = OffspringParser::pass_all(children_per_trial).for_template(&template);
    let parent_set: BTreeSet<&str> = parents.iter().map(String::as_str).collect();
    let mut novel: BTreeSet<String> = BTreeSet::new();
    let mut out = VariationMetrics {
        valid_pct: 0.0,
        novel_count: 0,
        lines: 0,
        valid: 0,
        failed_trials: 0,
    };
    for _ in 0..trials {
        let Ok(prompt) = format_prompt_encoded(&individuals, &template, TextCodec::Bits(codec), rng) else {
            out.failed_trials += 1;
            continue;
        };
        let mut params = params.clone();
        params.seed = Some(rng.next_u64());
        let Ok(response) = engine.complete(&CompletionRequest::new(prompt, params)) else {
            out.failed_trials += 1;
            continue;
        };
        for line in candidate_lines(&response.text, &parser).take(children_per_trial) {
            out.lines += 1;
            let Some(bits) = codec.decode(line).filter(|b| b.len() == length) else {
                continue;
            };
            out.valid += 1;
            if !parent_set.contains(bits.as_str()) {
                novel.insert(bits);
            }
        }
    }
    out.novel_count = novel.len();
    if out.lines > 0 {
        out.valid_pct = 100.0 * out.valid as f64 / out.lines as f64;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeritabilityReport {
    /// Mean Hamming distance to all-zeros of offspring whose parents are
    /// one bit away from all-ones.
    pub from_ones: f64,
    /// The same for parents one bit away from all-zeros.
    pub from_zeros: f64,
    pub children_from_ones: usize,
    pub children_from_zeros: usize,
}

/// Compares offspring of parents drawn (without replacement) from the
/// neighborhoods of the all-ones and all-zeros strings.
pub fn heritability(
    engine: &dyn Engine,
    length: usize,
    parents_per_set: usize,
    trials: usize,
    codec: Codec,
    params: &SamplingParams,
    rng: &mut RngStream,
) -> HeritabilityReport {
    let zeros = "0".repeat(length);
    let side = |reference: &str, rng: &mut RngStream| -> (f64, usize) {
        let pool = neighborhood(reference);
        let mut total = 0usize;
        let mut count = 0usize;
        for _ in 0..trials {
            let parents: Vec<String> = pool
                .choose_multiple(rng, parents_per_set.min(pool.len()))
                .cloned()
                .collect();
            let individuals: Vec<Individual> = parents
                .iter()
                .filter_map(|p| Individual::new(p.as_str(), Provenance::Seed).ok())
                .collect();
            let template = PromptTemplate::default();
            let parser = OffspringParser::new(3, move |b: &str| b.len() == length)
                .with_codec(TextCodec::Bits(codec));
            let rec = crate::operator::lmx(&individuals, engine, &template, &parser, params, rng);
            for child in rec.children {
                total += hamming(&child, &zeros).expect("validated length");
                count += 1;
            }
        }
        let mean = if count == 0 { f64::NAN } else { total as f64 / count as f64 };
        (mean, count)
    };
    let (from_ones, children_from_ones) = side(&"1".repeat(length), rng);
    let (from_zeros, children_from_zeros) = side(&zeros, rng);
    HeritabilityReport {
        from_ones,
        from_zeros,
        children_from_ones,
        children_from_zeros,
    }
}
