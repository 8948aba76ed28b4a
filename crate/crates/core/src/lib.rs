//! Compositional under-approximate analysis of information-flow
//! insecurity and memory errors for a small imperative language.

pub mod assertions;
pub mod cli;
pub mod lang;
pub mod oracle;
pub mod semantics;
pub mod summaries;
pub mod symex;
