use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lang::Pos;
use crate::summaries::{Finding, ProgramAnalysis};

use super::config::Config;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl From<Pos> for Span {
    fn from(p: Pos) -> Self {
        Span {
            line: p.line,
            column: p.column,
        }
    }
}

/// One reported finding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub file: String,
    pub function: String,
    pub label: String,
    pub span: Span,
    /// `insec` or `err`.
    pub status: String,
    pub presumption: String,
    pub result: String,
    pub engine: String,
    pub driver: String,
    /// Oracle verdict, or `off`.
    pub oracle: String,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionEntry {
    pub name: String,
    pub summaries: Vec<String>,
    pub diagnostics: Vec<String>,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub file: String,
    pub findings: Vec<Entry>,
    pub functions: Vec<FunctionEntry>,
}

fn entry(file: &str, f: &Finding, a: &ProgramAnalysis, cfg: &Config) -> Entry {
    let (pre, post) = f.summary.readable();
    let elapsed_ms = a
        .functions
        .iter()
        .find(|r| r.function == f.function)
        .map_or(0, |r| r.elapsed_ms);
    Entry {
        file: file.to_string(),
        function: f.function.clone(),
        label: f.label().to_string(),
        span: f.pos.into(),
        status: f.status.kind().to_string(),
        presumption: pre.to_string(),
        result: post.to_string(),
        engine: cfg.engine.name().to_string(),
        driver: cfg.driver.name().to_string(),
        oracle: match (&f.verdict, cfg.oracle) {
            (Some(v), true) => v.name().to_string(),
            _ => "off".to_string(),
        },
        elapsed_ms,
    }
}

impl Report {
    pub fn new(file: &str, a: &ProgramAnalysis, cfg: &Config) -> Report {
        Report {
            file: file.to_string(),
            findings: a.findings.iter().map(|f| entry(file, f, a, cfg)).collect(),
            functions: a
                .functions
                .iter()
                .map(|r| FunctionEntry {
                    name: r.function.clone(),
                    summaries: r.summaries.iter().map(|s| s.to_string()).collect(),
                    diagnostics: r.diagnostics.iter().map(|d| d.to_string()).collect(),
                    elapsed_ms: r.elapsed_ms,
                })
                .collect(),
        }
    }

    pub fn refuted(&self) -> bool {
        self.findings.iter().any(|e| e.oracle == "refuted")
    }

    /// 0 without findings, 1 with findings, 2 if the oracle refuted one.
    pub fn exit_code(&self) -> i32 {
        if self.refuted() {
            2
        } else if self.findings.is_empty() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.findings {
            let _ = writeln!(
                out,
                "{}:{}:{}: {}({}) in {} [oracle: {}]",
                e.file, e.span.line, e.span.column, e.status, e.label, e.function, e.oracle
            );
            let _ = writeln!(out, "  presumption: {}", e.presumption);
            let _ = writeln!(out, "  result:      {}", e.result);
        }
        for f in &self.functions {
            for d in &f.diagnostics {
                let _ = writeln!(out, "note: {}: {}", f.name, d);
            }
        }
        let n = self.findings.len();
        let _ = writeln!(out, "{} finding{}", n, if n == 1 { "" } else { "s" });
        out
    }
}
