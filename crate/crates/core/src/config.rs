//! Run configuration shared by the evolution loops.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Survivor / parent selection policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Selection {
    /// Parents are drawn uniformly from the population; the merged pool is
    /// culled back to `n` with repeated tournaments (the pool's best always
    /// survives).
    Tournament { size: usize },
    /// Parents are the top `fraction` of the population plus the all-time
    /// elite; the next population is the best `n` of children plus elite.
    TruncationWithElitism { fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    /// Children whose genotype already appears in the population are
    /// dropped before evaluation.
    Discard,
    Allow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub population_size: usize,
    pub parents_per_crossover: usize,
    pub generations: usize,
    #[serde(default)]
    pub seed: u64,
    pub selection: Selection,
    #[serde(default)]
    pub prior_injection_probability: f64,
    #[serde(default = "default_offspring_cap")]
    pub offspring_cap: usize,
    #[serde(default = "default_duplicate_policy")]
    pub duplicate_policy: DuplicatePolicy,
    /// Size of the first population, when it differs from `population_size`.
    #[serde(default)]
    pub initial_population_size: Option<usize>,
    /// Variation calls allowed per generation, as a multiple of
    /// `population_size`, before the generation closes with what it has.
    #[serde(default = "default_attempt_factor")]
    pub max_attempts_factor: usize,
    /// Stop early once the best fitness reaches this value.
    #[serde(default)]
    pub target_fitness: Option<f64>,
}

fn default_offspring_cap() -> usize {
    3
}

fn default_duplicate_policy() -> DuplicatePolicy {
    DuplicatePolicy::Allow
}

fn default_attempt_factor() -> usize {
    20
}

impl RunConfig {
    /// OneMax setup: pop 10, 10 generations, truncation top-50% + elite.
    pub fn onemax_defaults() -> Self {
        Self {
            population_size: 10,
            parents_per_crossover: 6,
            generations: 10,
            seed: 0,
            selection: Selection::TruncationWithElitism { fraction: 0.5 },
            prior_injection_probability: 0.0,
            offspring_cap: 3,
            duplicate_policy: DuplicatePolicy::Allow,
            initial_population_size: None,
            max_attempts_factor: default_attempt_factor(),
            target_fitness: None,
        }
    }

    /// Symbolic-regression setup: 7 parents, pop 50 after a 1000-candidate
    /// seed population, tournament culling, 0.05 prior injection.
    pub fn symreg_defaults() -> Self {
        Self {
            population_size: 50,
            parents_per_crossover: 7,
            generations: 200,
            seed: 0,
            selection: Selection::Tournament { size: 3 },
            prior_injection_probability: 0.05,
            offspring_cap: 3,
            duplicate_policy: DuplicatePolicy::Discard,
            initial_population_size: Some(1000),
            max_attempts_factor: default_attempt_factor(),
            target_fitness: None,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.population_size == 0 {
            return Err(CoreError::config("population_size", "must be at least 1"));
        }
        if self.parents_per_crossover == 0 {
            return Err(CoreError::config("parents_per_crossover", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.prior_injection_probability) {
            return Err(CoreError::config(
                "prior_injection_probability",
                "must lie in [0, 1]",
            ));
        }
        if self.offspring_cap == 0 {
            return Err(CoreError::config("offspring_cap", "must be at least 1"));
        }
        if self.max_attempts_factor == 0 {
            return Err(CoreError::config("max_attempts_factor", "must be at least 1"));
        }
        if self.initial_population_size == Some(0) {
            return Err(CoreError::config("initial_population_size", "must be at least 1"));
        }
        if self.target_fitness.is_some_and(|t| !t.is_finite()) {
            return Err(CoreError::config("target_fitness", "must be finite"));
        }
        match self.selection {
            Selection::Tournament { size } => {
                if size == 0 || size > self.population_size {
                    return Err(CoreError::config(
                        "selection.size",
                        format!("must lie in [1, {}]", self.population_size),
                    ));
                }
            }
            Selection::TruncationWithElitism { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(CoreError::config("selection.fraction", "must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }
}
