//! Subtree-exchange crossover, the genetic-programming baseline.

use rand::Rng;

use super::expr::Expr;
use super::parser::parse_expression;
use crate::individual::{Individual, Provenance};
use crate::operator::{Variation, VariationOutput};
use crate::rng::RngStream;

pub const MAX_DEPTH: usize = 17;

/// Replaces a uniformly chosen node of a copy of `p1` with a uniformly
/// chosen subtree of `p2`. Children deeper than [`MAX_DEPTH`] fall back to
/// a copy of `p1`.
pub fn subtree_crossover(p1: &Expr, p2: &Expr, rng: &mut RngStream) -> Expr {
    let target = rng.gen_range(0..p1.size());
    let donor = p2
        .node(rng.gen_range(0..p2.size()))
        .expect("index within size")
        .clone();
    let mut child = p1.clone();
    child.replace_node(target, donor);
    if child.depth() > MAX_DEPTH {
        p1.clone()
    } else {
        child
    }
}

/// Every child [`subtree_crossover`] can produce from `p1` and `p2`.
pub fn crossover_closure(p1: &Expr, p2: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    for target in 0..p1.size() {
        for source in 0..p2.size() {
            let mut child = p1.clone();
            child.replace_node(target, p2.node(source).expect("in range").clone());
            if child.depth() > MAX_DEPTH {
                child = p1.clone();
            }
            if !out.contains(&child) {
                out.push(child);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct SubtreeCrossover;

impl Variation for SubtreeCrossover {
    fn name(&self) -> &str {
        "subtree-crossover"
    }

    fn parents_wanted(&self, _configured: usize) -> usize {
        2
    }

    fn vary(&self, parents: &[Individual], rng: &mut RngStream) -> VariationOutput {
        let trees: Vec<Expr> = parents
            .iter()
            .filter_map(|p| parse_expression(p.genotype()).ok())
            .collect();
        let (a, b) = match trees.as_slice() {
            [a, b, ..] => (a, b),
            [a] => (a, a),
            [] => {
                return VariationOutput {
                    proposed: 1,
                    ..VariationOutput::empty(Provenance::BaselineOp)
                }
            }
        };
        VariationOutput {
            children: vec![subtree_crossover(a, b, rng).to_string()],
            proposed: 1,
            provenance: Provenance::BaselineOp,
            event: None,
        }
    }
}
