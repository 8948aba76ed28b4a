use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assertions::{PureAtom, SymState, VarGen};
use crate::lang::{print_program, Expr, FunDef, Label, Pos, Program};
use crate::oracle::Verdict;
use crate::symex::{analyze_function, execute, Callees, Diagnostic, FunctionRun, Judgement, Options, Status};

use super::apply::relevant_slice;
use super::cache::{CachedFunction, SummaryCache};
use super::summary::{externalize, Summary};

/// Order in which functions are analysed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Driver {
    /// Callees first; callers only use precomputed summaries.
    BottomUp,
    /// Entry points first; callees are analysed in their calling context
    /// whenever no existing summary applies.
    TopDown,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::BottomUp => "bottom-up",
            Driver::TopDown => "top-down",
        }
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Driver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bottom-up" => Ok(Driver::BottomUp),
            "top-down" => Ok(Driver::TopDown),
            _ => Err(format!("unknown driver `{s}` (expected bottom-up or top-down)")),
        }
    }
}

/// A reported insecurity or manifest error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Finding {
    /// Function whose analysis produced the finding.
    pub function: String,
    pub status: Status,
    /// Position of the labelled command.
    pub pos: Pos,
    pub summary: Arc<Summary>,
    #[serde(skip)]
    pub judgement: Option<Judgement>,
    pub verdict: Option<Verdict>,
}

impl Finding {
    pub fn label(&self) -> &Label {
        self.status.label().expect("findings never have status ok")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionResult {
    pub function: String,
    pub summaries: Vec<Arc<Summary>>,
    pub findings: Vec<Finding>,
    pub diagnostics: Vec<Diagnostic>,
    pub elapsed_ms: u64,
    pub hash: String,
    #[serde(skip)]
    pub cached: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ProgramAnalysis {
    pub functions: Vec<FunctionResult>,
    /// Deduplicated by status, in analysis order.
    pub findings: Vec<Finding>,
}

impl ProgramAnalysis {
    pub fn to_cache(&self) -> SummaryCache {
        SummaryCache {
            functions: self
                .functions
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    for f in &mut r.findings {
                        if let Some(v) = self
                            .findings
                            .iter()
                            .find(|g| g.status == f.status && g.function == f.function)
                        {
                            f.verdict = v.verdict.clone();
                        }
                    }
                    let pretty = r.summaries.iter().map(|s| s.to_string()).collect();
                    (r.function.clone(), CachedFunction { result: r, pretty })
                })
                .collect(),
        }
    }

    pub fn summaries(&self, function: &str) -> Vec<Arc<Summary>> {
        self.functions
            .iter()
            .filter(|r| r.function == function)
            .flat_map(|r| r.summaries.iter().cloned())
            .collect()
    }
}

const MAX_SUMMARIES: usize = 64;

fn label_positions(p: &Program) -> BTreeMap<Label, Pos> {
    p.functions.iter().flat_map(|f| f.body.label_positions()).collect()
}

fn options_fingerprint(opts: &Options) -> String {
    format!(
        "{}|{:?}|{}|{}|{}|{:?}",
        opts.engine.name(),
        opts.bounds,
        opts.ct,
        opts.setting.attacker.name(),
        opts.setting.domain.bits(),
        opts.setting.lattice.levels().map(|l| l.name().to_string()).collect::<Vec<_>>()
    )
}

/// Hash of a function's text, its callees' hashes and the options.
fn function_hashes(p: &Program, opts: &Options, driver: Driver) -> BTreeMap<String, String> {
    let fp = options_fingerprint(opts);
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for f in p.bottom_up_order() {
        let mut h = Sha256::new();
        h.update(fp.as_bytes());
        h.update(driver.name().as_bytes());
        h.update(
            print_program(&Program {
                functions: vec![f.clone()],
            })
            .as_bytes(),
        );
        for g in f.body.callees() {
            if let Some(hg) = out.get(&g) {
                h.update(hg.as_bytes());
            }
        }
        out.insert(f.name.clone(), format!("{:x}", h.finalize()));
    }
    out
}

fn push_summary(list: &mut Vec<Arc<Summary>>, sm: Summary) {
    let dup = list.iter().any(|s| {
        s.pre == sm.pre && s.post == sm.post && s.status == sm.status && s.latent == sm.latent
    });
    if !dup && list.len() < MAX_SUMMARIES {
        list.push(Arc::new(sm));
    }
}

/// Summaries and findings of one explored function.
fn harvest(run: &FunctionRun, f: &FunDef, opts: &Options, labels: &BTreeMap<Label, Pos>) -> (Vec<Arc<Summary>>, Vec<Finding>) {
    let attacker = opts.setting.attacker.name().to_string();
    let mut sums = Vec::new();
    let mut findings: Vec<Finding> = Vec::new();
    for (i, o) in run.outcomes.iter().enumerate() {
        let sm = externalize(run, i, f, &attacker);
        let report = match &o.post.status {
            Status::Ok => false,
            Status::Err(_) => !o.latent,
            Status::Insec(_) => true,
        };
        if report && !findings.iter().any(|g| g.status == o.post.status) {
            let pos = o.post.status.label().and_then(|l| labels.get(l)).copied().unwrap_or(f.pos);
            findings.push(Finding {
                function: f.name.clone(),
                status: o.post.status.clone(),
                pos,
                summary: Arc::new(sm.clone()),
                judgement: Some(run.judgement(o)),
                verdict: None,
            });
        }
        push_summary(&mut sums, sm);
    }
    (sums, findings)
}

fn dedupe(results: &[FunctionResult]) -> Vec<Finding> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in results {
        for f in &r.findings {
            if seen.insert(f.status.clone()) {
                out.push(f.clone());
            }
        }
    }
    out
}

/// Analyse every function of `p`. Functions whose hash matches an entry
/// of `cache` are not re-analysed.
pub fn analyze_program(p: &Program, opts: &Options, driver: Driver, cache: Option<&SummaryCache>) -> ProgramAnalysis {
    let hashes = function_hashes(p, opts, driver);
    let functions = match driver {
        Driver::BottomUp => bottom_up(p, opts, &hashes, cache),
        Driver::TopDown => {
            let all_cached = cache.is_some_and(|c| {
                hashes
                    .iter()
                    .all(|(f, h)| c.functions.get(f).is_some_and(|e| &e.result.hash == h))
            });
            if all_cached {
                let c = cache.expect("checked above");
                p.functions
                    .iter()
                    .map(|f| {
                        let mut r = c.functions[&f.name].result.clone();
                        r.cached = true;
                        r
                    })
                    .collect()
            } else {
                top_down(p, opts, &hashes)
            }
        }
    };
    let findings = dedupe(&functions);
    ProgramAnalysis { functions, findings }
}

struct Env<'a>(&'a BTreeMap<String, Vec<Arc<Summary>>>);

impl Callees for Env<'_> {
    fn summaries(&mut self, callee: &str) -> Vec<Arc<Summary>> {
        self.0.get(callee).cloned().unwrap_or_default()
    }
}

/// Distance from the leaves of the call graph.
fn heights(p: &Program) -> BTreeMap<String, usize> {
    let mut h: BTreeMap<String, usize> = BTreeMap::new();
    for f in p.bottom_up_order() {
        let v = f
            .body
            .callees()
            .iter()
            .filter_map(|g| h.get(g))
            .map(|x| x + 1)
            .max()
            .unwrap_or(0);
        h.insert(f.name.clone(), v);
    }
    h
}

fn bottom_up(
    p: &Program,
    opts: &Options,
    hashes: &BTreeMap<String, String>,
    cache: Option<&SummaryCache>,
) -> Vec<FunctionResult> {
    let labels = label_positions(p);
    let h = heights(p);
    let order = p.bottom_up_order();
    let max = h.values().copied().max().unwrap_or(0);
    let mut env: BTreeMap<String, Vec<Arc<Summary>>> = BTreeMap::new();
    let mut results = Vec::new();
    for level in 0..=max {
        let fs: Vec<&FunDef> = order.iter().copied().filter(|f| h[&f.name] == level).collect();
        let done: Vec<FunctionResult> = fs
            .par_iter()
            .map(|f| {
                let hash = hashes[&f.name].clone();
                if let Some(c) = cache.and_then(|c| c.functions.get(&f.name)) {
                    if c.result.hash == hash {
                        let mut r = c.result.clone();
                        r.cached = true;
                        return r;
                    }
                }
                let start = Instant::now();
                let run = analyze_function(f, opts, &mut Env(&env));
                let (summaries, findings) = harvest(&run, f, opts, &labels);
                FunctionResult {
                    function: f.name.clone(),
                    summaries,
                    findings,
                    diagnostics: run.diagnostics,
                    elapsed_ms: start.elapsed().as_millis() as u64,
                    hash,
                    cached: false,
                }
            })
            .collect();
        for r in done {
            env.insert(r.function.clone(), r.summaries.clone());
            results.push(r);
        }
    }
    results
}

struct TopDown<'a> {
    program: &'a Program,
    opts: &'a Options,
    labels: BTreeMap<Label, Pos>,
    hashes: &'a BTreeMap<String, String>,
    results: BTreeMap<String, FunctionResult>,
    order: Vec<String>,
    isolated: BTreeSet<String>,
}

impl TopDown<'_> {
    fn record(&mut self, f: &FunDef, run: &FunctionRun, elapsed_ms: u64) -> Vec<Arc<Summary>> {
        let (sums, findings) = harvest(run, f, self.opts, &self.labels);
        if !self.results.contains_key(&f.name) {
            self.order.push(f.name.clone());
        }
        let r = self.results.entry(f.name.clone()).or_insert_with(|| FunctionResult {
            function: f.name.clone(),
            summaries: Vec::new(),
            findings: Vec::new(),
            diagnostics: Vec::new(),
            elapsed_ms: 0,
            hash: self.hashes[&f.name].clone(),
            cached: false,
        });
        let mut added = Vec::new();
        for s in sums {
            let before = r.summaries.len();
            push_summary(&mut r.summaries, (*s).clone());
            if r.summaries.len() > before {
                added.push(r.summaries[before].clone());
            }
        }
        for g in findings {
            if !r.findings.iter().any(|x| x.status == g.status) {
                r.findings.push(g);
            }
        }
        for d in &run.diagnostics {
            if !r.diagnostics.contains(d) {
                r.diagnostics.push(d.clone());
            }
        }
        r.elapsed_ms += elapsed_ms;
        added
    }

    fn isolated(&mut self, f: &FunDef) -> Vec<Arc<Summary>> {
        self.isolated.insert(f.name.clone());
        let start = Instant::now();
        let opts = self.opts;
        let run = analyze_function(f, opts, self);
        self.record(f, &run, start.elapsed().as_millis() as u64)
    }
}

impl Callees for TopDown<'_> {
    fn summaries(&mut self, callee: &str) -> Vec<Arc<Summary>> {
        self.results.get(callee).map(|r| r.summaries.clone()).unwrap_or_default()
    }

    fn on_miss(&mut self, callee: &str, ctx: &SymState, args: &[Expr]) -> Vec<Arc<Summary>> {
        let Some(f) = self.program.function(callee) else {
            return Vec::new();
        };
        let start = Instant::now();
        let mut slice = relevant_slice(ctx, args);
        slice.stack.clear();
        let mut seen = slice.all_vars();
        for a in args {
            a.collect_vars(&mut seen);
        }
        let mut gen = VarGen::avoiding(&seen);
        let mut init = slice;
        let mut formals = Vec::new();
        for (param, arg) in f.params.iter().zip(args) {
            let v = gen.fresh(param.as_str());
            init.stack.insert(param.clone(), Expr::Var(v.clone()));
            init.add_pure(PureAtom::Expr(Expr::eq(Expr::Var(v.clone()), arg.clone())));
            formals.push((param.clone(), v));
        }
        for l in f.locals() {
            init.stack.insert(l, Expr::Const(0));
        }
        let opts = self.opts;
        let run = execute(f, init, formals, gen, opts, self);
        let added = self.record(f, &run, start.elapsed().as_millis() as u64);
        if added.is_empty() && !self.isolated.contains(callee) {
            return self.isolated(f);
        }
        added
    }
}

fn top_down(p: &Program, opts: &Options, hashes: &BTreeMap<String, String>) -> Vec<FunctionResult> {
    let called: BTreeSet<String> = p.functions.iter().flat_map(|f| f.body.callees()).collect();
    let mut td = TopDown {
        program: p,
        opts,
        labels: label_positions(p),
        hashes,
        results: BTreeMap::new(),
        order: Vec::new(),
        isolated: BTreeSet::new(),
    };
    for f in p.functions.iter().filter(|f| !called.contains(&f.name)) {
        td.isolated(f);
    }
    for f in &p.functions {
        if !td.results.contains_key(&f.name) {
            td.isolated(f);
        }
    }
    let TopDown { mut results, order, .. } = td;
    order.iter().filter_map(|n| results.remove(n)).collect()
}
