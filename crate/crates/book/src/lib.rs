//! The chapters of the guide in `book/`, compiled so that every Rust
//! snippet runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/lmx-operator.md")]
pub mod lmx_operator {}

#[doc = include_str!("../../../book/src/engines.md")]
pub mod engines {}

#[doc = include_str!("../../../book/src/binary.md")]
pub mod binary {}

#[doc = include_str!("../../../book/src/eda.md")]
pub mod eda {}

#[doc = include_str!("../../../book/src/symbolic-regression.md")]
pub mod symbolic_regression {}

#[doc = include_str!("../../../book/src/map-elites.md")]
pub mod map_elites {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
