use super::{assemble, CompletionRequest, CompletionResponse, Engine, EngineError, GeneratedToken};

type Script = Box<dyn Fn(&CompletionRequest) -> String + Send + Sync>;

/// An engine whose continuation is computed by a closure. Stop sequences
/// and the token budget (one token per character) still apply.
pub struct FnEngine {
    name: String,
    script: Script,
}

impl FnEngine {
    pub fn new<F>(name: impl Into<String>, script: F) -> Self
    where
        F: Fn(&CompletionRequest) -> String + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            script: Box::new(script),
        }
    }

    /// Always answers with `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new("constant", move |_| text.clone())
    }
}

impl Engine for FnEngine {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        req.validate()?;
        let text = (self.script)(req);
        let tokens = text.chars().map(|c| GeneratedToken::certain(c.to_string()));
        Ok(assemble(tokens, req))
    }
}
