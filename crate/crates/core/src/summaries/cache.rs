use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::driver::FunctionResult;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CachedFunction {
    #[serde(flatten)]
    pub result: FunctionResult,
    /// Human-readable rendering of each summary.
    #[serde(default)]
    pub pretty: Vec<String>,
}

/// Per-function analysis results keyed by function name, stored as JSON.
/// An entry is reused when its hash matches the function's current hash.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SummaryCache {
    pub functions: BTreeMap<String, CachedFunction>,
}

impl SummaryCache {
    /// `Ok(None)` when the file does not exist.
    pub fn load(path: &Path) -> io::Result<Option<SummaryCache>> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }
}
