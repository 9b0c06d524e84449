//! Benchmark expressions and benchmark-seeded initialization.
//!
//! File format: one benchmark per line, `arity<TAB>expression`, with the
//! expression written over `x1..x<arity>`. Blank lines and lines starting
//! with `#` are ignored.

use rand::Rng;

use super::expr::Expr;
use super::parser::parse_expression;
use super::SymregError;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub arity: usize,
    pub expr: Expr,
}

impl Benchmark {
    pub fn new(expr: Expr) -> Self {
        Self {
            arity: expr.max_var(),
            expr,
        }
    }
}

pub fn parse_benchmarks(text: &str) -> Result<Vec<Benchmark>, SymregError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| SymregError::Benchmark {
            line: n + 1,
            reason,
        };
        let (arity, expr) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `arity<TAB>expression`".into()))?;
        let arity: usize = arity
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad arity {arity:?}")))?;
        let expr = parse_expression(expr.trim()).map_err(|e| bad(e.to_string()))?;
        if expr.max_var() > arity {
            return Err(bad(format!(
                "uses x{} but declares arity {arity}",
                expr.max_var()
            )));
        }
        out.push(Benchmark { arity, expr });
    }
    if out.is_empty() {
        return Err(SymregError::NoBenchmarks);
    }
    Ok(out)
}

/// Draws a benchmark uniformly and maps each of its variables,
/// independently and uniformly, onto `x1..x<var_count>`.
pub fn sample_benchmark(benchmarks: &[Benchmark], var_count: usize, rng: &mut RngStream) -> Expr {
    let b = &benchmarks[rng.gen_range(0..benchmarks.len())];
    let mapping: Vec<usize> = (0..b.arity.max(b.expr.max_var()))
        .map(|_| rng.gen_range(1..=var_count.max(1)))
        .collect();
    b.expr.map_vars(&mut |i| mapping[i - 1])
}

pub fn seed_population(
    benchmarks: &[Benchmark],
    n: usize,
    var_count: usize,
    rng: &mut RngStream,
) -> Result<Vec<Expr>, SymregError> {
    if benchmarks.is_empty() {
        return Err(SymregError::NoBenchmarks);
    }
    Ok((0..n)
        .map(|_| sample_benchmark(benchmarks, var_count, rng))
        .collect())
}
