//! Binary strings: codecs, OneMax / LeadingOnes, the one-point-crossover
//! baseline and the variation / heritability measurements.

mod metrics;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;
use crate::individual::{Evaluation, Individual, Provenance};
use crate::operator::{Variation, VariationOutput};
use crate::rng::RngStream;

pub use metrics::{heritability, variation_metrics, HeritabilityReport, VariationMetrics};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BinaryError {
    #[error("bitstrings differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("not a bitstring: {0:?}")]
    NotBits(String),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
}

/// How bitstrings are rendered for a language model.
///
/// `Underscore` puts `_` before every bit so that each bit is its own token
/// (`0011` becomes `_0_0_1_1`); many tokenizers would otherwise merge runs
/// like `00` or `111`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Codec {
    #[default]
    Plain,
    Underscore,
}

impl Codec {
    pub fn encode(self, bits: &str) -> String {
        match self {
            Codec::Plain => bits.to_string(),
            Codec::Underscore => bits.chars().flat_map(|c| ['_', c]).collect(),
        }
    }

    /// Inverse of [`Codec::encode`]; `None` for malformed or empty text.
    pub fn decode(self, text: &str) -> Option<String> {
        match self {
            Codec::Plain => is_bits(text).then(|| text.to_string()),
            Codec::Underscore => {
                let chars: Vec<char> = text.chars().collect();
                if chars.is_empty() || chars.len() % 2 != 0 {
                    return None;
                }
                chars
                    .chunks(2)
                    .map(|pair| match pair {
                        ['_', b @ ('0' | '1')] => Some(*b),
                        _ => None,
                    })
                    .collect()
            }
        }
    }

    /// Text a model sees before it emits bit number `bits.len()` of an
    /// offspring that starts with `bits`.
    pub fn partial_prefix(self, bits: &str) -> String {
        match self {
            Codec::Plain => bits.to_string(),
            Codec::Underscore => format!("{}_", self.encode(bits)),
        }
    }
}

pub fn encode_underscore(bits: &str) -> String {
    Codec::Underscore.encode(bits)
}

pub fn decode_underscore(text: &str) -> Option<String> {
    Codec::Underscore.decode(text)
}

/// Non-empty and only `0`/`1`.
pub fn is_bits(text: &str) -> bool {
    !text.is_empty() && text.bytes().all(|b| b == b'0' || b == b'1')
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitstringSpec {
    pub length: usize,
    #[serde(default)]
    pub codec: Codec,
}

impl BitstringSpec {
    pub fn new(length: usize, codec: Codec) -> Self {
        Self { length, codec }
    }

    pub fn is_valid(&self, bits: &str) -> bool {
        bits.len() == self.length && is_bits(bits)
    }

    /// Validity of model output: decode with the codec, then check length.
    pub fn decode_valid(&self, text: &str) -> Option<String> {
        self.codec.decode(text).filter(|b| self.is_valid(b))
    }
}

pub fn onemax(bits: &str) -> usize {
    bits.bytes().filter(|&b| b == b'1').count()
}

pub fn leading_ones(bits: &str) -> usize {
    bits.bytes().take_while(|&b| b == b'1').count()
}

pub fn hamming(a: &str, b: &str) -> Result<usize, BinaryError> {
    if a.len() != b.len() {
        return Err(BinaryError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count())
}

/// All strings one bit-flip away from `reference`.
pub fn neighborhood(reference: &str) -> Vec<String> {
    (0..reference.len())
        .map(|i| {
            let mut bytes = reference.as_bytes().to_vec();
            bytes[i] = if bytes[i] == b'1' { b'0' } else { b'1' };
            String::from_utf8(bytes).expect("ascii")
        })
        .collect()
}

pub fn random_bits(length: usize, rng: &mut RngStream) -> String {
    (0..length)
        .map(|_| if rng.gen::<bool>() { '1' } else { '0' })
        .collect()
}

/// Draws a bitstring with independent per-position probabilities of `1`.
pub fn sample_bits(p_one: &[f64], rng: &mut RngStream) -> String {
    p_one
        .iter()
        .map(|&p| if rng.gen::<f64>() < p { '1' } else { '0' })
        .collect()
}

/// One-point crossover followed by independent bit-flip mutation.
///
/// The cut is uniform in `[1, L-1]`; the child takes `p1` before the cut and
/// `p2` from it on.
pub fn one_point_crossover_mutate(
    p1: &str,
    p2: &str,
    flip_prob: f64,
    rng: &mut RngStream,
) -> Result<String, BinaryError> {
    if p1.len() != p2.len() {
        return Err(BinaryError::LengthMismatch(p1.len(), p2.len()));
    }
    for p in [p1, p2] {
        if !is_bits(p) {
            return Err(BinaryError::NotBits(p.to_string()));
        }
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(BinaryError::Probability(flip_prob));
    }
    let len = p1.len();
    let cut = if len < 2 { len } else { rng.gen_range(1..len) };
    let child: String = p1[..cut]
        .chars()
        .chain(p2[cut..].chars())
        .map(|c| {
            if rng.gen::<f64>() < flip_prob {
                if c == '1' {
                    '0'
                } else {
                    '1'
                }
            } else {
                c
            }
        })
        .collect();
    Ok(child)
}

/// The classical recombination baseline: two random parents, one child.
#[derive(Clone, Debug)]
pub struct OnePointCrossover {
    pub flip_prob: f64,
}

impl Default for OnePointCrossover {
    fn default() -> Self {
        Self { flip_prob: 0.1 }
    }
}

impl Variation for OnePointCrossover {
    fn name(&self) -> &str {
        "one-point-crossover"
    }

    fn parents_wanted(&self, _configured: usize) -> usize {
        2
    }

    fn vary(&self, parents: &[Individual], rng: &mut RngStream) -> VariationOutput {
        let (a, b) = match parents {
            [a, b, ..] => (a.genotype(), b.genotype()),
            [a] => (a.genotype(), a.genotype()),
            [] => return VariationOutput::empty(Provenance::BaselineOp),
        };
        match one_point_crossover_mutate(a, b, self.flip_prob, rng) {
            Ok(child) => VariationOutput {
                children: vec![child],
                proposed: 1,
                provenance: Provenance::BaselineOp,
                event: None,
            },
            Err(_) => VariationOutput {
                proposed: 1,
                ..VariationOutput::empty(Provenance::BaselineOp)
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryFitness {
    OneMax,
    LeadingOnes,
}

impl BinaryFitness {
    pub fn score(self, bits: &str) -> usize {
        match self {
            BinaryFitness::OneMax => onemax(bits),
            BinaryFitness::LeadingOnes => leading_ones(bits),
        }
    }
}

/// Behavior coordinates for MAP-Elites over bitstrings, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryDescriptor {
    OnesFraction,
    LeadingOnesFraction,
}

#[derive(Clone, Debug)]
pub struct BinaryDomain {
    pub spec: BitstringSpec,
    pub fitness: BinaryFitness,
    pub descriptor: Option<BinaryDescriptor>,
}

impl BinaryDomain {
    pub fn onemax(length: usize) -> Self {
        Self {
            spec: BitstringSpec::new(length, Codec::Plain),
            fitness: BinaryFitness::OneMax,
            descriptor: None,
        }
    }
}

impl Domain for BinaryDomain {
    fn name(&self) -> &str {
        match self.fitness {
            BinaryFitness::OneMax => "onemax",
            BinaryFitness::LeadingOnes => "leading-ones",
        }
    }

    fn initialize(&self, count: usize, rng: &mut RngStream) -> Vec<String> {
        (0..count).map(|_| random_bits(self.spec.length, rng)).collect()
    }

    fn normalize(&self, text: &str) -> Option<String> {
        let text = text.trim();
        self.spec.is_valid(text).then(|| text.to_string())
    }

    fn evaluate(&self, genotype: &str) -> Option<Evaluation> {
        if !self.spec.is_valid(genotype) {
            return None;
        }
        let fitness = self.fitness.score(genotype) as f64;
        let len = self.spec.length as f64;
        Some(match self.descriptor {
            None => Evaluation::new(fitness),
            Some(BinaryDescriptor::OnesFraction) => {
                Evaluation::with_descriptor(fitness, vec![onemax(genotype) as f64 / len])
            }
            Some(BinaryDescriptor::LeadingOnesFraction) => {
                Evaluation::with_descriptor(fitness, vec![leading_ones(genotype) as f64 / len])
            }
        })
    }
}
