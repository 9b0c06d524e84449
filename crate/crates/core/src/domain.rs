//! The problem-side contract consumed by the evolution loops.

use crate::individual::Evaluation;
use crate::rng::RngStream;

/// A search domain over text genotypes.
///
/// `normalize` is the validity gate: it maps raw text (a parsed LMX line, a
/// baseline child) to the canonical genotype, or `None` if the text is not a
/// member of the domain. `evaluate` returning `None` marks an individual
/// unevaluable; loops drop those rather than storing a poisoned fitness.
pub trait Domain: Send + Sync {
    fn name(&self) -> &str;

    fn initialize(&self, count: usize, rng: &mut RngStream) -> Vec<String>;

    fn normalize(&self, text: &str) -> Option<String>;

    fn evaluate(&self, genotype: &str) -> Option<Evaluation>;

    /// A fresh draw from the domain's prior, used for prior injection.
    fn sample_prior(&self, _rng: &mut RngStream) -> Option<String> {
        None
    }
}

type Normalizer = Box<dyn Fn(&str) -> Option<String> + Send + Sync>;
type Scorer = Box<dyn Fn(&str) -> Option<Evaluation> + Send + Sync>;

/// A domain assembled from closures, for fitness functions that live
/// outside this crate (a sentiment model, a simulator, a human rater).
///
/// Initialization cycles through the supplied seed genotypes.
pub struct ExternalDomain {
    name: String,
    seeds: Vec<String>,
    normalize: Normalizer,
    fitness: Scorer,
}

impl ExternalDomain {
    pub fn new<N, F>(name: impl Into<String>, seeds: Vec<String>, normalize: N, fitness: F) -> Self
    where
        N: Fn(&str) -> Option<String> + Send + Sync + 'static,
        F: Fn(&str) -> Option<Evaluation> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            seeds,
            normalize: Box::new(normalize),
            fitness: Box::new(fitness),
        }
    }
}

impl Domain for ExternalDomain {
    fn name(&self) -> &str {
        &self.name
    }

    fn initialize(&self, count: usize, _rng: &mut RngStream) -> Vec<String> {
        self.seeds.iter().cycle().take(count).cloned().collect()
    }

    fn normalize(&self, text: &str) -> Option<String> {
        (self.normalize)(text)
    }

    fn evaluate(&self, genotype: &str) -> Option<Evaluation> {
        (self.fitness)(genotype)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn external_domain_delegates() {
        let d = ExternalDomain::new(
            "len",
            vec!["ab".into(), "abc".into()],
            |t| (!t.is_empty()).then(|| t.to_string()),
            |g| Some(Evaluation::new(g.len() as f64)),
        );
        let mut rng = RngStream::new(0, "t");
        assert_eq!(d.initialize(3, &mut rng), ["ab", "abc", "ab"]);
        assert_eq!(d.normalize(""), None);
        assert_eq!(d.evaluate("abcd").unwrap().fitness, 4.0);
        assert!(d.sample_prior(&mut rng).is_none());
    }
}
