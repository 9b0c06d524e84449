//! How closely LMX behaves like an estimation-of-distribution algorithm,
//! and how parent order biases its offspring.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Engine, EngineError, SamplingParams};
use crate::binary::{is_bits, leading_ones, onemax, random_bits, sample_bits, Codec};
use crate::individual::{Individual, Provenance};
use crate::operator::{format_prompt_encoded, lmx, OffspringParser, ParentOrdering, PromptTemplate, TextCodec};
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("parent set is empty")]
    NoParents,
    #[error("parents must be equal-length bitstrings")]
    BadParents,
    #[error("distributions differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("prompt: {0}")]
    Prompt(String),
}

/// Probability of a `1` at each bit position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalDistribution {
    pub p_one: Vec<f64>,
}

fn check_parents(parents: &[String]) -> Result<usize, AnalysisError> {
    let first = parents.first().ok_or(AnalysisError::NoParents)?;
    if parents.iter().any(|p| !is_bits(p) || p.len() != first.len()) {
        return Err(AnalysisError::BadParents);
    }
    Ok(first.len())
}

/// Per-position relative frequency of `1` among the parents.
pub fn umda_marginals(parents: &[String]) -> Result<MarginalDistribution, AnalysisError> {
    let len = check_parents(parents)?;
    let m = parents.len() as f64;
    let p_one = (0..len)
        .map(|j| parents.iter().filter(|p| p.as_bytes()[j] == b'1').count() as f64 / m)
        .collect();
    Ok(MarginalDistribution { p_one })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalReport {
    pub marginals: MarginalDistribution,
    /// The offspring prefix committed while querying.
    pub committed: String,
    /// Some probability was estimated from a truncated report.
    pub approximated: bool,
}

/// Marginals implied by an engine continuing the parent prompt.
///
/// At each position the engine is asked for the probabilities of `0` and
/// `1` (softmax temperature 1), conditioned on the prompt plus the bits
/// committed so far; the more likely bit is then committed, ties to `0`.
pub fn lmx_marginals(
    parents: &[String],
    engine: &dyn Engine,
    template: &PromptTemplate,
    codec: Codec,
    rng: &mut RngStream,
) -> Result<MarginalReport, AnalysisError> {
    let len = check_parents(parents)?;
    let individuals: Vec<Individual> = parents
        .iter()
        .map(|p| Individual::new(p.as_str(), Provenance::Seed).expect("non-empty"))
        .collect();
    let prompt = format_prompt_encoded(&individuals, template, TextCodec::Bits(codec), rng)
        .map_err(|e| AnalysisError::Prompt(e.to_string()))?;
    let mut committed = String::new();
    let mut p_one = Vec::with_capacity(len);
    let mut approximated = false;
    for _ in 0..len {
        let prefix = format!("{prompt}{}", codec.partial_prefix(&committed));
        let d = engine.next_token_distribution(&prefix, &["0", "1"], 1.0)?;
        approximated |= d.approximated;
        let p = d.prob("1");
        p_one.push(p);
        committed.push(if p > d.prob("0") { '1' } else { '0' });
    }
    Ok(MarginalReport {
        marginals: MarginalDistribution { p_one },
        committed,
        approximated,
    })
}

pub fn mean_abs_diff(a: &MarginalDistribution, b: &MarginalDistribution) -> Result<f64, AnalysisError> {
    if a.p_one.len() != b.p_one.len() {
        return Err(AnalysisError::LengthMismatch(a.p_one.len(), b.p_one.len()));
    }
    if a.p_one.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a.p_one.iter().zip(&b.p_one).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.p_one.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdaRow {
    pub parents: usize,
    pub mean_abs_diff: f64,
    pub std_dev: f64,
    pub repeats: usize,
    /// Repeats in which some probability was approximated.
    pub approximated: usize,
}

/// For each repeat, draws a random generating distribution, samples `m`
/// parents from it for each parent count, and compares the explicit and
/// engine-implied marginals. Reports the mean and sample standard
/// deviation of the difference per parent count.
pub fn eda_compare_experiment(
    length: usize,
    parent_counts: &[usize],
    repeats: usize,
    engine: &dyn Engine,
    codec: Codec,
    seed: u64,
) -> Result<Vec<EdaRow>, AnalysisError> {
    let root = RngStream::new(seed, "eda-compare");
    let template = PromptTemplate::default();
    let per_repeat: Vec<Vec<(f64, bool)>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.child(format!("repeat{r}"));
            let probs: Vec<f64> = (0..length).map(|_| rng.gen::<f64>()).collect();
            parent_counts
                .iter()
                .map(|&m| {
                    let parents: Vec<String> = (0..m).map(|_| sample_bits(&probs, &mut rng)).collect();
                    let explicit = umda_marginals(&parents)?;
                    let implied = lmx_marginals(&parents, engine, &template, codec, &mut rng)?;
                    Ok((mean_abs_diff(&explicit, &implied.marginals)?, implied.approximated))
                })
                .collect::<Result<Vec<_>, AnalysisError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(parent_counts
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let diffs: Vec<f64> = per_repeat.iter().map(|r| r[i].0).collect();
            let n = diffs.len();
            let mean = if n == 0 { 0.0 } else { diffs.iter().sum::<f64>() / n as f64 };
            let var = if n < 2 {
                0.0
            } else {
                diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            };
            EdaRow {
                parents: m,
                mean_abs_diff: mean,
                std_dev: var.sqrt(),
                repeats: n,
                approximated: per_repeat.iter().filter(|r| r[i].1).count(),
            }
        })
        .collect())
}

pub fn write_eda_csv<W: Write>(rows: &[EdaRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortKey {
    Ones,
    LeadingOnes,
}

impl SortKey {
    pub fn score(self, bits: &str) -> usize {
        match self {
            SortKey::Ones => onemax(bits),
            SortKey::LeadingOnes => leading_ones(bits),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParentOrder {
    Ascending,
    Descending,
    Random,
}

impl ParentOrder {
    pub const ALL: [ParentOrder; 3] = [ParentOrder::Ascending, ParentOrder::Descending, ParentOrder::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            ParentOrder::Ascending => "ascending",
            ParentOrder::Descending => "descending",
            ParentOrder::Random => "random",
        }
    }

    fn ordering(self) -> ParentOrdering {
        match self {
            ParentOrder::Ascending => ParentOrdering::AscendingFitness,
            ParentOrder::Descending => ParentOrdering::DescendingFitness,
            ParentOrder::Random => ParentOrdering::Random,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OrderBiasSetup {
    pub length: usize,
    pub sort_key: SortKey,
    pub experiments: usize,
    pub children_per_experiment: usize,
    pub parents_per_set: usize,
    #[serde(default)]
    pub codec: Codec,
}

/// Offspring score counts per parent order: `counts[order][s]` is the
/// number of children scoring `s` under the sort key.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderBiasTable {
    pub sort_key: SortKey,
    pub counts: BTreeMap<ParentOrder, Vec<usize>>,
    /// LMX calls that returned nothing usable.
    pub empty_calls: usize,
}

impl OrderBiasTable {
    pub fn total(&self, order: ParentOrder) -> usize {
        self.counts.get(&order).map_or(0, |c| c.iter().sum())
    }

    pub fn mean_score(&self, order: ParentOrder) -> Option<f64> {
        let c = self.counts.get(&order)?;
        let total: usize = c.iter().sum();
        (total > 0).then(|| c.iter().enumerate().map(|(s, n)| s * n).sum::<usize>() as f64 / total as f64)
    }

    /// `order,score,count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["order", "score", "count"])?;
        for (order, counts) in &self.counts {
            for (score, n) in counts.iter().enumerate() {
                w.write_record([order.as_str().to_string(), score.to_string(), n.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs LMX on the same random parent set under each ordering and tallies
/// the children's scores. Each experiment gathers up to
/// `children_per_experiment` children per order, giving up after
/// `4 * children_per_experiment` calls.
pub fn ordering_bias_experiment(
    setup: &OrderBiasSetup,
    orders: &[ParentOrder],
    engine: &dyn Engine,
    params: &SamplingParams,
    seed: u64,
) -> OrderBiasTable {
    let root = RngStream::new(seed, "order-bias");
    let length = setup.length;
    let parser = OffspringParser::new(3, move |b: &str| b.len() == length).with_codec(TextCodec::Bits(setup.codec));
    let results: Vec<(ParentOrder, Vec<usize>, usize)> = (0..setup.experiments)
        .into_par_iter()
        .flat_map_iter(|e| {
            let mut rng = root.child(format!("experiment{e}"));
            let parents: Vec<Individual> = (0..setup.parents_per_set)
                .map(|_| {
                    let bits = random_bits(length, &mut rng);
                    let score = setup.sort_key.score(&bits) as f64;
                    Individual::scored(bits, score, Provenance::Seed).expect("finite score")
                })
                .collect();
            let parser = parser.clone();
            orders
                .iter()
                .map(|&order| {
                    let mut rng = rng.child(order.as_str());
                    let template = PromptTemplate {
                        ordering: order.ordering(),
                        ..PromptTemplate::default()
                    };
                    let mut counts = vec![0usize; length + 1];
                    let (mut got, mut empty) = (0, 0);
                    for _ in 0..4 * setup.children_per_experiment {
                        if got >= setup.children_per_experiment {
                            break;
                        }
                        let rec = lmx(&parents, engine, &template, &parser, params, &mut rng);
                        if rec.children.is_empty() {
                            empty += 1;
                        }
                        for child in rec.children.iter().take(setup.children_per_experiment - got) {
                            counts[setup.sort_key.score(child)] += 1;
                            got += 1;
                        }
                    }
                    (order, counts, empty)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut table = OrderBiasTable {
        sort_key: setup.sort_key,
        counts: orders.iter().map(|&o| (o, vec![0; length + 1])).collect(),
        empty_calls: 0,
    };
    for (order, counts, empty) in results {
        let slot = table.counts.get_mut(&order).expect("order listed");
        for (s, n) in counts.into_iter().enumerate() {
            slot[s] += n;
        }
        table.empty_calls += empty;
    }
    table
}

#[cfg(test)]
mod tests;
