//! Language-model crossover.
//!
//! The operator is three steps: render the parents as a few-shot prompt
//! ([`format_prompt`]), let an [`Engine`] continue it, and read offspring
//! back out of the continuation ([`parse_offspring`]). [`lmx`] composes them
//! and [`Lmx`] packages the composition as a [`Variation`] for the loops.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CompletionRequest, Engine, EngineError, SamplingParams};
use crate::binary::Codec;
use crate::individual::{Individual, Provenance};
use crate::rng::RngStream;
use crate::runlog::{EventKind, LogEvent};

pub const DEFAULT_PROMPT_BUDGET: usize = 2000;

/// Header used for symbolic regression prompts. The count deliberately
/// differs from the seven parents that follow it.
pub const SYMREG_HEADER: &str = "Below are 10 expressions that approximate the dataset:";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParentOrdering {
    #[default]
    Random,
    AscendingFitness,
    DescendingFitness,
    Given,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    #[serde(default)]
    pub header: Option<String>,
    #[serde(default)]
    pub item_prefix: String,
    #[serde(default = "newline")]
    pub delimiter: String,
    #[serde(default)]
    pub trailer: Option<String>,
    /// Treat the trailer as the opening of the first child: it is prepended
    /// to the completion before parsing.
    #[serde(default)]
    pub trailer_starts_child: bool,
    #[serde(default)]
    pub ordering: ParentOrdering,
    #[serde(default = "default_budget")]
    pub max_prompt_chars: usize,
}

fn newline() -> String {
    "\n".to_string()
}

fn default_budget() -> usize {
    DEFAULT_PROMPT_BUDGET
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            header: None,
            item_prefix: String::new(),
            delimiter: newline(),
            trailer: None,
            trailer_starts_child: false,
            ordering: ParentOrdering::Random,
            max_prompt_chars: DEFAULT_PROMPT_BUDGET,
        }
    }
}

impl PromptTemplate {
    pub fn symreg() -> Self {
        Self {
            header: Some(SYMREG_HEADER.to_string()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        if self.delimiter.is_empty() {
            return Err(OperatorError::EmptyDelimiter);
        }
        Ok(())
    }
}

/// Maps genotypes to the text a model sees and back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TextCodec {
    #[default]
    Identity,
    Bits(Codec),
}

impl TextCodec {
    pub fn encode(self, genotype: &str) -> String {
        match self {
            TextCodec::Identity => genotype.to_string(),
            TextCodec::Bits(c) => c.encode(genotype),
        }
    }

    pub fn decode(self, text: &str) -> Option<String> {
        match self {
            TextCodec::Identity => Some(text.to_string()),
            TextCodec::Bits(c) => c.decode(text),
        }
    }
}

pub type Validator = Arc<dyn Fn(&str) -> bool + Send + Sync>;

/// Extracts offspring from a completion.
#[derive(Clone)]
pub struct OffspringParser {
    pub split_delimiter: String,
    pub item_prefix: String,
    pub codec: TextCodec,
    pub validator: Validator,
    pub max_children: usize,
    pub dedup_against_parents: bool,
}

impl fmt::Debug for OffspringParser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OffspringParser")
            .field("split_delimiter", &self.split_delimiter)
            .field("item_prefix", &self.item_prefix)
            .field("codec", &self.codec)
            .field("max_children", &self.max_children)
            .field("dedup_against_parents", &self.dedup_against_parents)
            .finish_non_exhaustive()
    }
}

impl OffspringParser {
    pub fn new(max_children: usize, validator: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        Self {
            split_delimiter: newline(),
            item_prefix: String::new(),
            codec: TextCodec::Identity,
            validator: Arc::new(validator),
            max_children: max_children.max(1),
            dedup_against_parents: false,
        }
    }

    pub fn pass_all(max_children: usize) -> Self {
        Self::new(max_children, |_| true)
    }

    /// Splitting and prefix conventions follow the template.
    pub fn for_template(mut self, template: &PromptTemplate) -> Self {
        self.split_delimiter = template.delimiter.clone();
        self.item_prefix = template.item_prefix.clone();
        self
    }

    pub fn with_codec(mut self, codec: TextCodec) -> Self {
        self.codec = codec;
        self
    }

    pub fn dedup(mut self, on: bool) -> Self {
        self.dedup_against_parents = on;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("LMX needs at least one parent")]
    NoParents,
    #[error("fitness ordering requires evaluated parents")]
    UnevaluatedParent,
    #[error("prompt of {len} characters exceeds the budget of {budget}")]
    BudgetExceeded { len: usize, budget: usize },
    #[error("prompt delimiter must be non-empty")]
    EmptyDelimiter,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Renders parents as a few-shot prompt.
///
/// Layout: optional header and delimiter, then each parent as
/// `item_prefix + encoded genotype` followed by the delimiter, then the
/// optional trailer.
pub fn format_prompt(
    parents: &[Individual],
    template: &PromptTemplate,
    rng: &mut RngStream,
) -> Result<String, OperatorError> {
    format_prompt_encoded(parents, template, TextCodec::Identity, rng)
}

pub fn format_prompt_encoded(
    parents: &[Individual],
    template: &PromptTemplate,
    codec: TextCodec,
    rng: &mut RngStream,
) -> Result<String, OperatorError> {
    template.validate()?;
    if parents.is_empty() {
        return Err(OperatorError::NoParents);
    }
    let mut ordered: Vec<&Individual> = parents.iter().collect();
    match template.ordering {
        ParentOrdering::Given => {}
        ParentOrdering::Random => ordered.shuffle(rng),
        ParentOrdering::AscendingFitness | ParentOrdering::DescendingFitness => {
            if ordered.iter().any(|p| !p.is_evaluated()) {
                return Err(OperatorError::UnevaluatedParent);
            }
            let key = |p: &&Individual| p.fitness().expect("checked above");
            if template.ordering == ParentOrdering::AscendingFitness {
                ordered.sort_by(|a, b| key(a).total_cmp(&key(b)));
            } else {
                ordered.sort_by(|a, b| key(b).total_cmp(&key(a)));
            }
        }
    }
    let mut prompt = String::new();
    if let Some(header) = &template.header {
        prompt.push_str(header);
        prompt.push_str(&template.delimiter);
    }
    for p in ordered {
        prompt.push_str(&template.item_prefix);
        prompt.push_str(&codec.encode(p.genotype()));
        prompt.push_str(&template.delimiter);
    }
    if let Some(trailer) = &template.trailer {
        prompt.push_str(trailer);
    }
    let len = prompt.chars().count();
    if len > template.max_prompt_chars {
        return Err(OperatorError::BudgetExceeded {
            len,
            budget: template.max_prompt_chars,
        });
    }
    Ok(prompt)
}

/// Splits a completion into trimmed candidate items with the item prefix
/// removed. Items shorter than two characters are dropped.
pub fn candidate_lines<'a>(completion: &'a str, parser: &'a OffspringParser) -> impl Iterator<Item = &'a str> + 'a {
    let prefix = parser.item_prefix.as_str();
    let short_prefix = prefix.trim();
    completion
        .split(parser.split_delimiter.as_str())
        .map(move |raw| {
            let mut line = raw.trim();
            if !prefix.is_empty() {
                if let Some(rest) = raw.strip_prefix(prefix) {
                    line = rest.trim();
                } else if !short_prefix.is_empty() {
                    if let Some(rest) = line.strip_prefix(short_prefix) {
                        line = rest.trim();
                    }
                }
            }
            line
        })
        .filter(|line| line.chars().count() >= 2)
}

/// Parsed children plus how many candidate items were examined to get them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedOffspring {
    pub children: Vec<String>,
    pub examined: usize,
}

pub fn parse_offspring(completion: &str, parser: &OffspringParser, parents: &[String]) -> Vec<String> {
    parse_offspring_counted(completion, parser, parents).children
}

pub fn parse_offspring_counted(
    completion: &str,
    parser: &OffspringParser,
    parents: &[String],
) -> ParsedOffspring {
    let parent_set: HashSet<&str> = parents.iter().map(String::as_str).collect();
    let mut out = ParsedOffspring::default();
    for line in candidate_lines(completion, parser) {
        if out.children.len() >= parser.max_children {
            break;
        }
        out.examined += 1;
        let Some(decoded) = parser.codec.decode(line) else {
            continue;
        };
        if !(parser.validator)(&decoded) {
            continue;
        }
        if parser.dedup_against_parents && parent_set.contains(decoded.as_str()) {
            continue;
        }
        out.children.push(decoded);
    }
    out
}

/// What one LMX call did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LmxRecord {
    pub prompt: Option<String>,
    pub completion: Option<String>,
    pub children: Vec<String>,
    pub examined: usize,
    /// Why the call produced nothing, when it was skipped.
    pub skipped: Option<String>,
}

impl LmxRecord {
    pub fn to_event(&self, generation: u64, stream: &str) -> LogEvent {
        let mut ev = LogEvent::new(generation, EventKind::LmxCall, stream);
        ev.prompt = self.prompt.clone();
        ev.completion = self.completion.clone();
        ev.children = Some(self.children.clone());
        ev.note = self.skipped.clone();
        ev
    }
}

/// One application of language-model crossover.
///
/// Errors never escape: an over-budget prompt or a failing engine yields an
/// empty child list with the cause in [`LmxRecord::skipped`]. The request
/// seed is drawn from `rng`, so mocks and seeded servers are reproducible.
pub fn lmx(
    parents: &[Individual],
    engine: &dyn Engine,
    template: &PromptTemplate,
    parser: &OffspringParser,
    params: &SamplingParams,
    rng: &mut RngStream,
) -> LmxRecord {
    let mut record = LmxRecord::default();
    let prompt = match format_prompt_encoded(parents, template, parser.codec, rng) {
        Ok(p) => p,
        Err(e) => {
            record.skipped = Some(e.to_string());
            return record;
        }
    };
    let mut params = params.clone();
    params.seed = Some(rng.next_u64());
    let req = CompletionRequest::new(prompt.clone(), params);
    record.prompt = Some(prompt);
    let response = match engine.complete(&req) {
        Ok(r) => r,
        Err(e) => {
            record.skipped = Some(e.to_string());
            return record;
        }
    };
    let text = match (&template.trailer, template.trailer_starts_child) {
        (Some(trailer), true) => format!("{trailer}{}", response.text),
        _ => response.text.clone(),
    };
    let parent_genotypes: Vec<String> = parents.iter().map(|p| p.genotype().to_string()).collect();
    let parsed = parse_offspring_counted(&text, parser, &parent_genotypes);
    record.completion = Some(response.text);
    record.children = parsed.children;
    record.examined = parsed.examined;
    record
}

/// Output of one variation call, consumed by the loops.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationOutput {
    pub children: Vec<String>,
    /// Candidate children examined, valid or not; the denominator of the
    /// validity rate.
    pub proposed: usize,
    pub provenance: Provenance,
    pub event: Option<LmxRecord>,
}

impl VariationOutput {
    pub fn empty(provenance: Provenance) -> Self {
        Self {
            children: Vec::new(),
            proposed: 0,
            provenance,
            event: None,
        }
    }
}

/// A variation operator that turns parents into child genotype texts.
pub trait Variation: Send + Sync {
    fn name(&self) -> &str;

    /// Parents to hand to one call, given the configured count.
    fn parents_wanted(&self, configured: usize) -> usize {
        configured
    }

    /// Most children one call can return.
    fn max_children(&self) -> usize {
        1
    }

    fn vary(&self, parents: &[Individual], rng: &mut RngStream) -> VariationOutput;
}

/// LMX bound to an engine and its prompt conventions.
#[derive(Clone)]
pub struct Lmx {
    pub engine: Arc<dyn Engine>,
    pub template: PromptTemplate,
    pub parser: OffspringParser,
    pub params: SamplingParams,
}

impl fmt::Debug for Lmx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lmx")
            .field("engine", &self.engine.name())
            .field("template", &self.template)
            .field("parser", &self.parser)
            .field("params", &self.params)
            .finish()
    }
}

impl Lmx {
    pub fn new(
        engine: Arc<dyn Engine>,
        template: PromptTemplate,
        parser: OffspringParser,
        params: SamplingParams,
    ) -> Self {
        let parser = parser.for_template(&template);
        Self {
            engine,
            template,
            parser,
            params,
        }
    }

    pub fn apply(&self, parents: &[Individual], rng: &mut RngStream) -> LmxRecord {
        lmx(
            parents,
            self.engine.as_ref(),
            &self.template,
            &self.parser,
            &self.params,
            rng,
        )
    }
}

impl Variation for Lmx {
    fn name(&self) -> &str {
        "lmx"
    }

    fn max_children(&self) -> usize {
        self.parser.max_children
    }

    fn vary(&self, parents: &[Individual], rng: &mut RngStream) -> VariationOutput {
        let record = self.apply(parents, rng);
        VariationOutput {
            children: record.children.clone(),
            proposed: record.examined,
            provenance: Provenance::Lmx,
            event: Some(record),
        }
    }
}
