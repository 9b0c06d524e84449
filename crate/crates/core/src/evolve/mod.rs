//! Evolution loops: a generational GA and MAP-Elites, both driven by any
//! [`Variation`](crate::operator::Variation) operator.

mod ga;
mod map_elites;
mod selection;

use thiserror::Error;

pub use ga::{ga_run, GaHistory, GaOutcome, GenerationRecord};
pub use map_elites::{
    map_elites_run, EliteMap, MapCheckpoint, MapDim, MapElitesConfig, MapElitesOutcome, ParentStrategy,
};
pub use selection::{tournament_cull, tournament_select, tournament_winner, truncation_step};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("selection needs evaluated individuals")]
    Unevaluated,
    #[error("initialization produced no valid, evaluable individuals")]
    Initialization,
    #[error("descriptor has {got} dimensions, map has {want}")]
    DescriptorDims { got: usize, want: usize },
    #[error("individual has no descriptor")]
    MissingDescriptor,
    #[error("configuration: {0}")]
    Config(String),
}

impl From<crate::error::CoreError> for EvolveError {
    fn from(e: crate::error::CoreError) -> Self {
        EvolveError::Config(e.to_string())
    }
}
