//! Symbolic regression over arithmetic expressions.
//!
//! Genotypes are expression texts in a small Python-compatible grammar.
//! Fitness is R² on the training split and the descriptor is the parse-tree
//! size, so runs can be reported as an accuracy/size front.

mod crossover;
mod dataset;
mod eval;
mod expr;
mod pareto;
mod parser;
mod seed;
mod simplify;

use thiserror::Error;

pub use crossover::{crossover_closure, subtree_crossover, SubtreeCrossover, MAX_DEPTH};
pub use dataset::RegressionDataset;
pub use eval::{evaluate, r2, EvalError, Matrix};
pub use expr::{format_constant, BinaryOp, Expr, UnaryOp};
pub use pareto::{dominates, pareto_front, write_pareto_csv, ParetoEntry};
pub use parser::{parse_expression, ParseError};
pub use seed::{parse_benchmarks, sample_benchmark, seed_population, Benchmark};
pub use simplify::simplify;

use crate::domain::Domain;
use crate::individual::{Evaluation, Individual};
use crate::rng::RngStream;

/// The benchmark expressions bundled with the crate.
pub const BUNDLED_BENCHMARKS: &str = include_str!("../../data/benchmarks.tsv");

#[derive(Debug, Error)]
pub enum SymregError {
    #[error("benchmark file line {line}: {reason}")]
    Benchmark { line: usize, reason: String },
    #[error("benchmark list is empty")]
    NoBenchmarks,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn expression_size(expr: &Expr) -> usize {
    expr.size()
}

/// Parses and simplifies `text`, returning the canonical rendering.
pub fn canonicalize(text: &str) -> Option<String> {
    parse_expression(text).ok().map(|e| simplify(&e).to_string())
}

pub fn bundled_benchmarks() -> Vec<Benchmark> {
    parse_benchmarks(BUNDLED_BENCHMARKS).expect("bundled benchmark file is valid")
}

pub struct SymregDomain {
    train: (Matrix, Vec<f64>),
    test: Option<(Matrix, Vec<f64>)>,
    var_count: usize,
    benchmarks: Vec<Benchmark>,
}

impl SymregDomain {
    pub fn new(dataset: &RegressionDataset, benchmarks: Vec<Benchmark>) -> Result<Self, SymregError> {
        if benchmarks.is_empty() {
            return Err(SymregError::NoBenchmarks);
        }
        let train = dataset.train();
        let test = dataset.test();
        Ok(Self {
            train,
            test: (test.1.len() >= 2).then_some(test),
            var_count: dataset.var_count(),
            benchmarks,
        })
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    fn score(&self, expr: &Expr, (x, y): &(Matrix, Vec<f64>)) -> Option<f64> {
        r2(y, &evaluate(expr, x).ok()?).ok()
    }

    pub fn test_r2(&self, genotype: &str) -> Option<f64> {
        let expr = parse_expression(genotype).ok()?;
        self.score(&expr, self.test.as_ref()?)
    }

    /// Front over the evaluated members of `population`.
    pub fn pareto_report(&self, population: &[Individual]) -> Vec<ParetoEntry> {
        let entries: Vec<ParetoEntry> = population
            .iter()
            .filter_map(|ind| {
                let r2_train = ind.fitness()?;
                let expr = parse_expression(ind.genotype()).ok()?;
                Some(ParetoEntry {
                    r2_train,
                    r2_test: self.test_r2(ind.genotype()),
                    size: expr.size(),
                    expression: ind.genotype().to_string(),
                })
            })
            .collect();
        pareto_front(&entries)
    }
}

impl Domain for SymregDomain {
    fn name(&self) -> &str {
        "symreg"
    }

    fn initialize(&self, count: usize, rng: &mut RngStream) -> Vec<String> {
        (0..count)
            .filter_map(|_| self.sample_prior(rng))
            .collect()
    }

    fn normalize(&self, text: &str) -> Option<String> {
        let expr = simplify(&parse_expression(text).ok()?);
        (expr.max_var() <= self.var_count).then(|| expr.to_string())
    }

    fn evaluate(&self, genotype: &str) -> Option<Evaluation> {
        let expr = parse_expression(genotype).ok()?;
        let fitness = self.score(&expr, &self.train)?;
        Some(Evaluation::with_descriptor(fitness, vec![expr.size() as f64]))
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Option<String> {
        let expr = sample_benchmark(&self.benchmarks, self.var_count, rng);
        Some(simplify(&expr).to_string())
    }
}
