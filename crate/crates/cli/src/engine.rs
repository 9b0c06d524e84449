//! Building the configured completion engine.

use std::fs::File;
use std::io::BufReader;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use lmx::backend::{
    make_subtree_mock, read_recording, CompletionRequest, CompletionResponse, Engine, EngineError,
    HttpConfig, HttpEngine, NextTokenDistribution, ReplayEngine, UmdaMock,
};
use lmx::binary::Codec;
use lmx::RngStream;

use crate::config::{EngineConfig, EngineKind, LoadedConfig};
use crate::error::CliError;

/// Consecutive transport failures after which the engine is declared
/// unreachable and later calls fail without touching the network.
const TRIP_AFTER: usize = 3;

/// Wraps the real engine and remembers whether it became unreachable.
pub struct GuardedEngine {
    inner: Box<dyn Engine>,
    consecutive: AtomicUsize,
    tripped: Mutex<Option<EngineError>>,
}

impl GuardedEngine {
    pub fn new(inner: Box<dyn Engine>) -> Self {
        Self {
            inner,
            consecutive: AtomicUsize::new(0),
            tripped: Mutex::new(None),
        }
    }

    /// The error that made the engine unreachable, if any.
    pub fn failure(&self) -> Option<EngineError> {
        self.tripped.lock().expect("guard lock").clone()
    }

    fn observe<T>(&self, result: Result<T, EngineError>) -> Result<T, EngineError> {
        match &result {
            Ok(_) => self.consecutive.store(0, Ordering::SeqCst),
            Err(e @ EngineError::Transport(_)) => {
                if self.consecutive.fetch_add(1, Ordering::SeqCst) + 1 >= TRIP_AFTER {
                    self.tripped.lock().expect("guard lock").get_or_insert_with(|| e.clone());
                }
            }
            Err(_) => {}
        }
        result
    }
}

impl Engine for GuardedEngine {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        if let Some(e) = self.failure() {
            return Err(e);
        }
        self.observe(self.inner.complete(req))
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
        if let Some(e) = self.failure() {
            return Err(e);
        }
        self.observe(self.inner.next_token_distribution(prefix, candidates, temperature))
    }
}

/// Applies `--engine-override`: either a bare kind (`umda-mock`) or a full
/// JSON engine object.
pub fn apply_override(base: &EngineConfig, spec: &str) -> Result<EngineConfig, CliError> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        return serde_json::from_str(spec)
            .map_err(|e| CliError::config(format!("--engine-override: {e}")));
    }
    let kind = EngineKind::parse(spec).ok_or_else(|| {
        CliError::config(format!(
            "--engine-override: unknown engine kind {spec:?} (expected http, umda-mock, subtree-mock or replay)"
        ))
    })?;
    Ok(EngineConfig { kind, ..base.clone() })
}

pub fn build_engine(
    loaded: &LoadedConfig,
    cfg: &EngineConfig,
    domain_codec: Codec,
    seed: u64,
) -> Result<GuardedEngine, CliError> {
    let lines = cfg.lines_per_completion;
    let inner: Box<dyn Engine> = match cfg.kind {
        EngineKind::UmdaMock => {
            let mut mock = UmdaMock::from_prompt(cfg.codec.unwrap_or(domain_codec));
            if let Some(n) = lines {
                mock = mock.with_lines(n);
            }
            Box::new(mock)
        }
        EngineKind::SubtreeMock => {
            let mock = make_subtree_mock(RngStream::new(seed, "subtree-mock"));
            Box::new(mock.with_lines(lines.unwrap_or(1)))
        }
        EngineKind::Replay => {
            let Some(path) = &cfg.recording else {
                return Err(loaded.field_error("engine.recording", "required for the replay engine"));
            };
            let path = loaded.resolve(path);
            let file = File::open(&path)
                .map_err(|e| CliError::config(format!("cannot open recording {}: {e}", path.display())))?;
            let records = read_recording(BufReader::new(file))
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            Box::new(ReplayEngine::new(records))
        }
        EngineKind::Http => {
            let Some(endpoint) = &cfg.endpoint else {
                return Err(loaded.field_error("engine.endpoint", "required for the http engine"));
            };
            let mut http = HttpConfig::new(endpoint.clone());
            http.model = cfg.model.clone();
            if let Some(var) = &cfg.auth_env {
                let key = std::env::var(var).map_err(|_| {
                    loaded.field_error("engine.auth_env", format!("environment variable {var} is not set"))
                })?;
                http.api_key = Some(key);
            }
            if let Some(s) = cfg.timeout_secs {
                http.timeout = Duration::from_secs(s);
            }
            if let Some(r) = cfg.max_retries {
                http.max_retries = r;
            }
            Box::new(HttpEngine::new(http).map_err(|e| loaded.field_error("engine.endpoint", e))?)
        }
    };
    Ok(GuardedEngine::new(inner))
}
