//! Evolutionary search where recombination is done by a language model.
//!
//! Parents are written into a few-shot prompt, the model continues it, and
//! the new lines are parsed back into offspring. The crate provides that
//! operator, the completion engines it talks to (an HTTP client plus
//! deterministic mocks), a GA loop and MAP-Elites, and two domains: binary
//! strings and symbolic regression.
//!
//! ```
//! use lmx::backend::{SamplingParams, UmdaMock};
//! use lmx::binary::Codec;
//! use lmx::operator::{lmx, OffspringParser, PromptTemplate};
//! use lmx::{Individual, Provenance, RngStream};
//!
//! let parents: Vec<Individual> = ["0110", "0111"]
//!     .iter()
//!     .map(|g| Individual::new(*g, Provenance::Seed).unwrap())
//!     .collect();
//! let engine = UmdaMock::from_prompt(Codec::Plain);
//! let mut rng = RngStream::new(1, "doc");
//! let record = lmx(
//!     &parents,
//!     &engine,
//!     &PromptTemplate::default(),
//!     &OffspringParser::pass_all(3),
//!     &SamplingParams::default(),
//!     &mut rng,
//! );
//! assert_eq!(record.children.len(), 3);
//! assert!(record.children.iter().all(|c| c.starts_with("011")));
//! ```

pub mod analysis;
pub mod backend;
pub mod binary;
pub mod config;
pub mod domain;
pub mod error;
pub mod evolve;
pub mod individual;
pub mod operator;
pub mod rng;
pub mod runlog;
pub mod symreg;

pub use config::{DuplicatePolicy, RunConfig, Selection};
pub use domain::Domain;
pub use error::CoreError;
pub use individual::{Evaluation, Individual, Population, Provenance};
pub use rng::RngStream;
pub use runlog::{EventKind, LogEvent, RunLog};
