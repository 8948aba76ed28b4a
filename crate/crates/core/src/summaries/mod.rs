//! Function summaries: extraction from explored paths, instantiation at
//! call sites, and the whole-program drivers.

mod apply;
mod cache;
mod driver;
mod summary;

pub use apply::{apply_summary, relevant_slice, Applied};
pub use cache::{CachedFunction, SummaryCache};
pub use driver::{analyze_program, Driver, Finding, FunctionResult, ProgramAnalysis};
pub use summary::{externalize, Summary};
