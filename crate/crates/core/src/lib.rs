//! Building blocks for quantifying input and output uncertainty of
//! black-box language models on molecular tasks.

pub mod cluster;
pub mod datasets;
pub mod eval;
pub mod fingerprint;
pub mod molgraph;
pub mod prompts;
pub mod uq;
