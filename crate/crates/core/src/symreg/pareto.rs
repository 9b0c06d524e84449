//! Accuracy/size trade-off reporting.

use std::io::Write;

use serde::Serialize;

use super::SymregError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoEntry {
    pub r2_train: f64,
    pub r2_test: Option<f64>,
    pub size: usize,
    pub expression: String,
}

/// `a` dominates `b` when it is no worse on training R² and size and
/// strictly better on one of them.
pub fn dominates(a: &ParetoEntry, b: &ParetoEntry) -> bool {
    a.r2_train >= b.r2_train && a.size <= b.size && (a.r2_train > b.r2_train || a.size < b.size)
}

/// Non-dominated entries ordered by size. Among entries with the same
/// (R², size) pair only the first is kept.
pub fn pareto_front(entries: &[ParetoEntry]) -> Vec<ParetoEntry> {
    let mut front: Vec<ParetoEntry> = Vec::new();
    for e in entries {
        if entries.iter().any(|o| dominates(o, e)) {
            continue;
        }
        if front.iter().any(|f| f.size == e.size && f.r2_train == e.r2_train) {
            continue;
        }
        front.push(e.clone());
    }
    front.sort_by(|a, b| a.size.cmp(&b.size).then(b.r2_train.total_cmp(&a.r2_train)));
    front
}

pub fn write_pareto_csv<W: Write>(front: &[ParetoEntry], out: W) -> Result<(), SymregError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r2_train", "r2_test", "size", "expression"])?;
    for e in front {
        w.write_record([
            e.r2_train.to_string(),
            e.r2_test.map(|v| v.to_string()).unwrap_or_default(),
            e.size.to_string(),
            e.expression.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
