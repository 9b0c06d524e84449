//! Individuals, populations and fitness evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// How an individual came to exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Seed,
    Lmx,
    BaselineOp,
    PriorInjection,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Seed => "seed",
            Provenance::Lmx => "lmx",
            Provenance::BaselineOp => "baseline-op",
            Provenance::PriorInjection => "prior-injection",
        }
    }
}

/// Result of scoring one genotype.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub descriptor: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn new(fitness: f64) -> Self {
        Self {
            fitness,
            descriptor: None,
        }
    }

    pub fn with_descriptor(fitness: f64, descriptor: Vec<f64>) -> Self {
        Self {
            fitness,
            descriptor: Some(descriptor),
        }
    }
}

/// A text genotype plus its cached score.
///
/// Fitness is `None` until evaluated and is always finite once set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    genotype: String,
    fitness: Option<f64>,
    descriptor: Option<Vec<f64>>,
    provenance: Provenance,
}

impl Individual {
    pub fn new(genotype: impl Into<String>, provenance: Provenance) -> Result<Self, CoreError> {
        let genotype = genotype.into();
        if genotype.is_empty() {
            return Err(CoreError::EmptyGenotype);
        }
        Ok(Self {
            genotype,
            fitness: None,
            descriptor: None,
            provenance,
        })
    }

    /// Builds an already-scored individual. Convenient in tests and when
    /// fitness comes from an external source.
    pub fn scored(
        genotype: impl Into<String>,
        fitness: f64,
        provenance: Provenance,
    ) -> Result<Self, CoreError> {
        let mut ind = Self::new(genotype, provenance)?;
        ind.set_evaluation(Evaluation::new(fitness))?;
        Ok(ind)
    }

    pub fn set_evaluation(&mut self, eval: Evaluation) -> Result<(), CoreError> {
        if !eval.fitness.is_finite() {
            return Err(CoreError::NonFiniteFitness(eval.fitness));
        }
        if let Some(d) = &eval.descriptor {
            if d.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFiniteDescriptor);
            }
        }
        self.fitness = Some(eval.fitness);
        self.descriptor = eval.descriptor;
        Ok(())
    }

    pub fn genotype(&self) -> &str {
        &self.genotype
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    pub fn descriptor(&self) -> Option<&[f64]> {
        self.descriptor.as_deref()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_evaluated(&self) -> bool {
        self.fitness.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: u64,
}

impl Population {
    pub fn new(members: Vec<Individual>) -> Self {
        Self {
            members,
            generation: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Highest-fitness evaluated member; ties go to the earliest index.
    pub fn best(&self) -> Option<&Individual> {
        let mut best: Option<&Individual> = None;
        for ind in &self.members {
            let Some(f) = ind.fitness() else { continue };
            if best.and_then(Individual::fitness).map_or(true, |b| f > b) {
                best = Some(ind);
            }
        }
        best
    }

    pub fn mean_fitness(&self) -> Option<f64> {
        let scores: Vec<f64> = self.members.iter().filter_map(Individual::fitness).collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }

    pub fn contains_genotype(&self, genotype: &str) -> bool {
        self.members.iter().any(|m| m.genotype() == genotype)
    }
}

/// Scores every unevaluated member and drops those the fitness function
/// rejects. Survivor order is preserved; already-scored members are kept
/// untouched.
pub fn evaluate_population<F>(pop: Population, fitness: F) -> Population
where
    F: Fn(&str) -> Option<Evaluation> + Sync,
{
    evaluate_population_counted(pop, fitness).0
}

/// Like [`evaluate_population`], also returning how many members were dropped.
pub fn evaluate_population_counted<F>(pop: Population, fitness: F) -> (Population, usize)
where
    F: Fn(&str) -> Option<Evaluation> + Sync,
{
    let before = pop.members.len();
    let members: Vec<Individual> = pop
        .members
        .into_par_iter()
        .filter_map(|mut ind| {
            if ind.is_evaluated() {
                return Some(ind);
            }
            let eval = fitness(ind.genotype())?;
            ind.set_evaluation(eval).ok()?;
            Some(ind)
        })
        .collect();
    let dropped = before - members.len();
    (
        Population {
            members,
            generation: pop.generation,
        },
        dropped,
    )
}
