//! The experiment config document.
//!
//! One JSON object per experiment. Unknown keys are rejected everywhere and
//! every error names the config file and the line it points at. Relative
//! paths inside the document resolve against the document's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use lmx::analysis::{OrderBiasSetup, SortKey};
use lmx::backend::SamplingParams;
use lmx::binary::{BinaryDescriptor, BinaryFitness, Codec};
use lmx::evolve::{MapDim, ParentStrategy};
use lmx::operator::PromptTemplate;
use lmx::RunConfig;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: EngineConfig,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(rename = "loop", default)]
    pub run_loop: Option<LoopConfig>,
    #[serde(default)]
    pub variation: VariationKind,
    /// Overrides the domain's prompt template.
    #[serde(default)]
    pub template: Option<PromptTemplate>,
    /// Overrides the domain's sampling defaults.
    #[serde(default)]
    pub sampling: Option<SamplingParams>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Master seed; `--seed` wins over it, and it wins over `loop.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub eda: Option<EdaConfig>,
    #[serde(default)]
    pub order_bias: Option<OrderBiasConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Http,
    UmdaMock,
    SubtreeMock,
    Replay,
}

impl EngineKind {
    pub fn parse(text: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(text.to_string())).ok()
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    /// Completions URL, for `http`.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token, for `http`.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    /// JSONL file of `{prompt, response}` records, for `replay`.
    #[serde(default)]
    pub recording: Option<PathBuf>,
    /// Lines emitted per completion by the mocks.
    #[serde(default)]
    pub lines_per_completion: Option<usize>,
    /// Bit encoding the UMDA mock reads; defaults to the domain's codec.
    #[serde(default)]
    pub codec: Option<Codec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Binary {
        length: usize,
        #[serde(default = "default_fitness")]
        fitness: BinaryFitness,
        /// Underscore for `http` engines, plain otherwise.
        #[serde(default)]
        codec: Option<Codec>,
        /// Behavior descriptor, needed by MAP-Elites.
        #[serde(default)]
        descriptor: Option<BinaryDescriptor>,
    },
    Symreg {
        /// CSV with header `x1,...,xd,y`.
        #[serde(default)]
        dataset: Option<PathBuf>,
        #[serde(default)]
        synthetic: Option<SyntheticData>,
        /// `arity<TAB>expression` lines; the bundled set when absent.
        #[serde(default)]
        benchmarks: Option<PathBuf>,
        #[serde(default)]
        test_fraction: f64,
    },
}

fn default_fitness() -> BinaryFitness {
    BinaryFitness::OneMax
}

/// Generated regression data `y = expression(x)`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub expression: String,
    pub samples: usize,
    /// Defaults to the largest variable index in `expression`.
    #[serde(default)]
    pub variables: Option<usize>,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
}

fn default_low() -> f64 {
    -1.0
}

fn default_high() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoopConfig {
    Ga(RunConfig),
    MapElites(MapElitesLoop),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapElitesLoop {
    pub dims: Vec<MapDim>,
    pub budget: usize,
    #[serde(default)]
    pub strategy: ParentStrategy,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub initial_size: usize,
    #[serde(default = "default_parents")]
    pub parents_per_call: usize,
}

fn default_batch() -> usize {
    8
}

fn default_parents() -> usize {
    3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationKind {
    #[default]
    Lmx,
    OnePointCrossover,
    SubtreeCrossover,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_out_dir(),
            plot: true,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

/// Parent-count sweep for the `variation` command.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "one")]
    pub min_parents: usize,
    pub max_parents: usize,
    #[serde(default = "twenty")]
    pub trials: usize,
    #[serde(default = "three")]
    pub children_per_trial: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdaConfig {
    pub length: usize,
    pub parent_counts: Vec<usize>,
    #[serde(default = "twenty")]
    pub repeats: usize,
    #[serde(default)]
    pub codec: Option<Codec>,
}

/// Parent-order experiment; see [`OrderBiasSetup`].
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderBiasConfig {
    pub length: usize,
    pub sort_key: SortKey,
    pub experiments: usize,
    pub children_per_experiment: usize,
    pub parents_per_set: usize,
    #[serde(default)]
    pub codec: Option<Codec>,
}

impl OrderBiasConfig {
    pub fn setup(&self, default_codec: Codec) -> OrderBiasSetup {
        OrderBiasSetup {
            length: self.length,
            sort_key: self.sort_key,
            experiments: self.experiments,
            children_per_experiment: self.children_per_experiment,
            parents_per_set: self.parents_per_set,
            codec: self.codec.unwrap_or(default_codec),
        }
    }
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

fn twenty() -> usize {
    20
}

/// A parsed config plus where it came from, for diagnostics.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub text: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        Ok(Self {
            config,
            path: path.to_path_buf(),
            text,
        })
    }

    /// A validation error about `field`, anchored at the line where the
    /// field's key appears (the document start when it is absent).
    pub fn field_error(&self, field: &str, reason: impl std::fmt::Display) -> CliError {
        let key = field.rsplit('.').next().unwrap_or(field);
        let line = locate(&self.text, key).unwrap_or(1);
        CliError::config(format!("{}:{line}: {field}: {reason}", self.path.display()))
    }

    /// Resolves a path from the document against its directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        match self.path.parent() {
            Some(dir) => dir.join(p),
            None => p.to_path_buf(),
        }
    }
}

/// 1-based line of the first `"key":` in `text`.
pub fn locate(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| {
        l.find(&quoted)
            .is_some_and(|i| l[i + quoted.len()..].trim_start().starts_with(':'))
    })
    .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedConfig, CliError> {
        LoadedConfig::parse(Path::new("exp.json"), text.to_string())
    }

    #[test]
    fn minimal_document() {
        let c = parse(r#"{"engine": {"kind": "umda-mock"}}"#).unwrap().config;
        assert_eq!(c.engine.kind, EngineKind::UmdaMock);
        assert_eq!(c.variation, VariationKind::Lmx);
        assert!(c.output.plot);
        assert_eq!(c.output.directory, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_point_at_their_line() {
        let err = parse("{\n  \"engine\": {\"kind\": \"umda-mock\"},\n  \"bogus\": 1\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("exp.json:3:"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
        assert_eq!(err.exit_code(), 2);

        let err = parse(r#"{"engine": {"kind": "umda-mock", "endpont": "x"}}"#).unwrap_err();
        assert!(err.to_string().contains("endpont"));
        let nested = r#"{"engine": {"kind": "umda-mock"},
            "loop": {"kind": "ga", "population_size": 10, "parents_per_crossover": 2,
                     "generations": 1, "selection": {"kind": "tournament", "size": 2}, "extra": 0}}"#;
        assert!(parse(nested).unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn loop_and_domain_variants() {
        let text = r#"{
            "engine": {"kind": "subtree-mock", "lines_per_completion": 3},
            "domain": {"kind": "symreg", "synthetic": {"expression": "x1 + x2", "samples": 20}},
            "loop": {"kind": "map-elites", "dims": [{"lower": 0, "upper": 1.5, "bins": 30}],
                     "budget": 100, "initial_size": 10, "strategy": {"kind": "near", "radius": 3}}
        }"#;
        let c = parse(text).unwrap().config;
        assert!(matches!(c.domain, Some(DomainConfig::Symreg { .. })));
        match c.run_loop {
            Some(LoopConfig::MapElites(m)) => {
                assert_eq!(m.dims[0].bins, 30);
                assert_eq!(m.parents_per_call, 3);
                assert_eq!(m.strategy, ParentStrategy::Near { radius: 3 });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn field_errors_are_line_anchored() {
        let text = "{\n \"engine\": {\"kind\": \"umda-mock\"},\n \"loop\": {\n  \"kind\": \"ga\",\n  \"parents_per_crossover\": 0\n }\n}";
        let loaded = LoadedConfig {
            config: parse(r#"{"engine": {"kind": "umda-mock"}}"#).unwrap().config,
            path: PathBuf::from("exp.json"),
            text: text.into(),
        };
        let msg = loaded.field_error("parents_per_crossover", "must be at least 1").to_string();
        assert_eq!(msg, "config error: exp.json:5: parents_per_crossover: must be at least 1");
        assert_eq!(locate(text, "kind"), Some(2));
        assert_eq!(locate("\"kind\" is not a key", "kind"), None);
    }

    #[test]
    fn engine_kind_from_flag_text() {
        assert_eq!(EngineKind::parse("replay"), Some(EngineKind::Replay));
        assert_eq!(EngineKind::parse("gpt"), None);
    }

    #[test]
    fn relative_paths_follow_the_document() {
        let loaded = LoadedConfig::parse(Path::new("/tmp/exp/a.json"), r#"{"engine": {"kind": "replay"}}"#.into()).unwrap();
        assert_eq!(loaded.resolve(Path::new("rec.jsonl")), PathBuf::from("/tmp/exp/rec.jsonl"));
        assert_eq!(loaded.resolve(Path::new("/abs.csv")), PathBuf::from("/abs.csv"));
    }
}
