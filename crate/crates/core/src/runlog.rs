//! JSONL run log.
//!
//! Events are buffered in memory and written in one go so that two runs with
//! the same configuration produce byte-identical files. Nothing time-dependent
//! is recorded.

use std::io::{self, Write};

use serde::Serialize;

use crate::individual::{Individual, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Evaluation,
    LmxCall,
    Selection,
    Invalid,
    Approximation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEvent {
    pub generation: u64,
    pub event: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub genotype: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub stream: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl LogEvent {
    pub fn new(generation: u64, event: EventKind, stream: impl Into<String>) -> Self {
        Self {
            generation,
            event,
            genotype: None,
            fitness: None,
            provenance: None,
            stream: stream.into(),
            prompt: None,
            completion: None,
            children: None,
            note: None,
        }
    }

    pub fn individual(mut self, ind: &Individual) -> Self {
        self.genotype = Some(ind.genotype().to_string());
        self.fitness = ind.fitness();
        self.provenance = Some(ind.provenance());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunLog {
    events: Vec<LogEvent>,
    disabled: bool,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// A log that drops everything; used by analyses that make many
    /// thousands of calls.
    pub fn disabled() -> Self {
        Self {
            events: Vec::new(),
            disabled: true,
        }
    }

    pub fn push(&mut self, event: LogEvent) {
        if !self.disabled {
            self.events.push(event);
        }
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut out, ev)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_is_one_object_per_line() {
        let mut log = RunLog::new();
        let ind = Individual::scored("0101", 2.0, Provenance::Lmx).unwrap();
        log.push(LogEvent::new(3, EventKind::Evaluation, "ga/eval").individual(&ind));
        log.push(LogEvent::new(3, EventKind::Selection, "ga/select"));
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["generation"], 3);
        assert_eq!(first["event"], "evaluation");
        assert_eq!(first["genotype"], "0101");
        assert_eq!(first["provenance"], "lmx");
        assert_eq!(first["stream"], "ga/eval");
    }

    #[test]
    fn disabled_log_keeps_nothing() {
        let mut log = RunLog::disabled();
        log.push(LogEvent::new(0, EventKind::LmxCall, "x"));
        assert!(log.events().is_empty());
    }
}
