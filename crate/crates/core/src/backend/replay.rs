//! Record/replay of completion traffic.

use std::io::{self, BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    truncate_at_stop, CompletionRequest, CompletionResponse, Engine, EngineError, FinishReason,
    NextTokenDistribution,
};

/// One recorded exchange; a line of a recording file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub prompt: String,
    pub response: String,
}

pub fn read_recording<R: BufRead>(reader: R) -> io::Result<Vec<Recording>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Recording = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_recording<W: Write>(records: &[Recording], mut out: W) -> io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Answers each prompt with the first not-yet-used recorded response for
/// exactly that prompt.
pub struct ReplayEngine {
    entries: Mutex<Vec<(Recording, bool)>>,
}

impl ReplayEngine {
    pub fn new(recording: Vec<Recording>) -> Self {
        Self {
            entries: Mutex::new(recording.into_iter().map(|r| (r, false)).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries
            .lock()
            .expect("replay lock")
            .iter()
            .filter(|(_, used)| !used)
            .count()
    }
}

impl Engine for ReplayEngine {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        let mut entries = self.entries.lock().expect("replay lock");
        let hit = entries
            .iter_mut()
            .find(|(rec, used)| !used && rec.prompt == req.prompt);
        match hit {
            Some((rec, used)) => {
                *used = true;
                let (text, _) = truncate_at_stop(&rec.response, &req.params.stop);
                Ok(CompletionResponse {
                    text,
                    finish_reason: FinishReason::StopSequence,
                    token_logprobs: None,
                })
            }
            None => Err(EngineError::ReplayMiss(req.prompt.chars().take(40).collect())),
        }
    }
}

/// Wraps an engine and records every successful exchange verbatim.
pub struct RecordingEngine<E> {
    inner: E,
    log: Mutex<Vec<Recording>>,
}

impl<E: Engine> RecordingEngine<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn recording(&self) -> Vec<Recording> {
        self.log.lock().expect("recording lock").clone()
    }
}

impl<E: Engine> Engine for RecordingEngine<E> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        let response = self.inner.complete(req)?;
        self.log.lock().expect("recording lock").push(Recording {
            prompt: req.prompt.clone(),
            response: response.text.clone(),
        });
        Ok(response)
    }

    fn supports_logprobs(&self) -> bool {
        self.inner.supports_logprobs()
    }

    fn next_token_distribution(
        &self,
        prefix: &str,
        candidates: &[&str],
        temperature: f64,
    ) -> Result<NextTokenDistribution, EngineError> {
        self.inner.next_token_distribution(prefix, candidates, temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FnEngine, SamplingParams};

    fn req(p: &str) -> CompletionRequest {
        CompletionRequest::new(p, SamplingParams::default())
    }

    #[test]
    fn replays_by_prompt_then_misses() {
        let engine = ReplayEngine::new(vec![Recording {
            prompt: "p".into(),
            response: "r".into(),
        }]);
        let r = engine.complete(&req("p")).unwrap();
        assert_eq!(r.text, "r");
        assert_eq!(r.finish_reason, FinishReason::StopSequence);
        assert!(matches!(engine.complete(&req("p")), Err(EngineError::ReplayMiss(_))));
        assert!(matches!(engine.complete(&req("q")), Err(EngineError::ReplayMiss(_))));
    }

    #[test]
    fn primed_text_comes_back() {
        let engine = ReplayEngine::new(vec![Recording {
            prompt: "x".into(),
            response: "abc".into(),
        }]);
        assert_eq!(engine.complete(&req("x")).unwrap().text, "abc");
    }

    #[test]
    fn same_prompt_answers_in_recorded_order() {
        let recs = vec![
            Recording { prompt: "p".into(), response: "1".into() },
            Recording { prompt: "q".into(), response: "2".into() },
            Recording { prompt: "p".into(), response: "3".into() },
        ];
        let engine = ReplayEngine::new(recs);
        assert_eq!(engine.complete(&req("p")).unwrap().text, "1");
        assert_eq!(engine.complete(&req("p")).unwrap().text, "3");
        assert_eq!(engine.remaining(), 1);
    }

    #[test]
    fn recorder_captures_verbatim_and_round_trips() {
        let rec = RecordingEngine::new(FnEngine::new("echo", |r| format!("{}!", r.prompt)));
        rec.complete(&req("a")).unwrap();
        rec.complete(&req("b\nc")).unwrap();
        let log = rec.recording();
        assert_eq!(log[1], Recording { prompt: "b\nc".into(), response: "b\nc!".into() });
        let mut buf = Vec::new();
        write_recording(&log, &mut buf).unwrap();
        assert_eq!(read_recording(buf.as_slice()).unwrap(), log);
        let replay = ReplayEngine::new(log);
        assert_eq!(replay.complete(&req("a")).unwrap().text, "a!");
    }

    #[test]
    fn malformed_recording_names_line() {
        let err = read_recording("{\"prompt\":\"a\",\"response\":\"b\"}\nnot json\n".as_bytes())
            .unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
