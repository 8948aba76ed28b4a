mod common;

use std::collections::BTreeSet;

use common::*;
use insecscan::assertions::{entails, PureAtom, Engine, Setting, SymState, VarGen};
use insecscan::lang::{parse_program, Expr, Program, Var};
use insecscan::summaries::{analyze_program, apply_summary, relevant_slice, Driver, ProgramAnalysis, Summary};
use insecscan::symex::{Options, Status};

const CORPUS: [&str; 5] = ["auction", "ctselect", "kremlib", "uaf", "ct_lookup"];

fn opts(engine: Engine, ct: bool) -> Options {
    let mut o = Options::new(Setting::two_point(4));
    o.engine = engine;
    o.ct = ct;
    o
}

fn analyze(p: &Program, engine: Engine, driver: Driver, ct: bool) -> ProgramAnalysis {
    analyze_program(p, &opts(engine, ct), driver, None)
}

fn findings(a: &ProgramAnalysis) -> BTreeSet<(String, String)> {
    a.findings
        .iter()
        .map(|f| (f.label().to_string(), f.status.to_string()))
        .collect()
}

fn summaries_of(src: &str, f: &str) -> Vec<Summary> {
    let p = parse_program(src).unwrap();
    let a = analyze(&p, Engine::Relational, Driver::BottomUp, false);
    a.summaries(f).iter().map(|s| (**s).clone()).collect()
}

fn equivalent(a: &SymState, b: &SymState) -> bool {
    let set = Setting::two_point(4);
    entails(a, b, &set).unwrap() && entails(b, a, &set).unwrap()
}

/// Moves stack bindings into the pure part.
fn flatten(st: &SymState) -> SymState {
    let mut out = SymState { stack: Default::default(), ..st.clone() };
    for (v, t) in &st.stack {
        out.add_pure(PureAtom::Expr(Expr::eq(Expr::Var(v.clone()), t.clone())));
    }
    out
}

fn args(names: &[&str]) -> Vec<Expr> {
    names.iter().map(|n| ex(n)).collect()
}

#[test]
fn increment_returns_its_argument_plus_one() {
    let sms = summaries_of("fun inc(a) { ret = a + 1; }", "inc");
    assert_eq!(sms.len(), 1);
    let sm = &sms[0];
    assert_eq!(sm.status, Status::Ok);
    assert!(sm.pre.spatial.is_empty() && sm.post.spatial.is_empty());
    let ret = sm.ret().expect("inc returns a value");
    assert_eq!(ret.to_string(), "a + 1");
}

#[test]
fn identity_on_a_cell() {
    let sms = summaries_of("fun id(p) { v = [p]; [p] = v; }", "id");
    let ok: Vec<&Summary> = sms.iter().filter(|s| s.status == Status::Ok).collect();
    assert_eq!(ok.len(), 1);
    assert!(equivalent(&ok[0].pre, &ok[0].post), "{}", ok[0]);
    assert_eq!(ok[0].pre.spatial.len(), 1);
}

fn update_max_insec() -> Summary {
    let p = sample_program("auction");
    let a = analyze(&p, Engine::Relational, Driver::BottomUp, false);
    let sms: Vec<Summary> = a
        .summaries("update_max")
        .iter()
        .filter(|s| matches!(s.status, Status::Insec(_)))
        .map(|s| (**s).clone())
        .collect();
    assert_eq!(sms.len(), 1);
    sms[0].clone()
}

#[test]
fn insecure_comparison_needs_quotes_that_can_differ() {
    let sm = update_max_insec();
    let set = Setting::two_point(4);
    let call = args(&["i", "a", "j", "b"]);
    let equal = A::emp().pure("i != 0").pure("j != 0").pto("a", "3").pto("b", "3").0;
    assert!(apply_summary(&sm, &equal, &call, None, &mut VarGen::new(), &set, Engine::Relational).is_none());
    let unknown = A::emp().pto("a", "u").pto("b", "w").0;
    let app = apply_summary(&sm, &unknown, &call, None, &mut VarGen::new(), &set, Engine::Relational)
        .expect("applies when the quotes are unconstrained");
    assert!(matches!(app.status, Status::Insec(_)));
    assert!(app.anti_frame.is_empty());
}

#[test]
fn cell_summary_applies_to_a_concrete_cell() {
    let sms = summaries_of("fun get(p) { ret = [p]; }", "get");
    let ok = sms.iter().find(|s| s.status == Status::Ok).unwrap();
    let set = Setting::two_point(4);
    let caller = A::emp().pto("q", "7").0;
    let target = Var::new("r");
    let app = apply_summary(ok, &caller, &args(&["q"]), Some(&target), &mut VarGen::new(), &set, Engine::Unary)
        .expect("summary applies");
    assert!(app.anti_frame.is_empty());
    assert_eq!(app.post.spatial.len(), 1);
    let want = A::emp().pto("q", "7").pure("r == 7").0;
    assert!(entails(&flatten(&app.post), &want, &set).unwrap(), "{}", app.post);

    // a missing cell is abduced
    let empty = SymState::emp();
    let app = apply_summary(ok, &empty, &args(&["q"]), Some(&target), &mut VarGen::new(), &set, Engine::Unary).unwrap();
    assert_eq!(app.anti_frame.len(), 1);
    // an invalid cell contradicts the footprint
    let freed = A::emp().inv("q").0;
    assert!(apply_summary(ok, &freed, &args(&["q"]), Some(&target), &mut VarGen::new(), &set, Engine::Unary).is_none());
}

#[test]
fn slice_keeps_only_what_arguments_reach() {
    let st = A::emp()
        .pure("a == b + 1")
        .pure("c == 2")
        .pto("b", "v")
        .pto("v", "w")
        .pto("c", "1")
        .0;
    let sl = relevant_slice(&st, &args(&["a"]));
    assert_eq!(sl.pure.len(), 1);
    assert_eq!(sl.spatial.len(), 2);
    let sl = relevant_slice(&st, &args(&["c"]));
    assert_eq!(sl.pure.len(), 1);
    assert_eq!(sl.spatial.len(), 1);
    assert!(relevant_slice(&st, &args(&["z"])).spatial.is_empty());
}

#[test]
fn summaries_mention_only_formals_and_logical_variables() {
    for name in CORPUS {
        let p = sample_program(name);
        let a = analyze(&p, Engine::Relational, Driver::BottomUp, false);
        for r in &a.functions {
            let f = p.function(&r.function).unwrap();
            for sm in &r.summaries {
                assert!(sm.pre.stack.is_empty(), "{sm}");
                let locals = f.locals();
                for v in sm.logical_vars() {
                    assert!(!locals.contains(&v) || v.as_str().starts_with('$'), "{name}: {v} in {sm}");
                }
            }
        }
    }
}

#[test]
fn analysis_is_deterministic() {
    for name in CORPUS {
        let p = sample_program(name);
        let a = analyze(&p, Engine::Relational, Driver::BottomUp, false);
        let b = analyze(&p, Engine::Relational, Driver::BottomUp, false);
        for (x, y) in a.functions.iter().zip(&b.functions) {
            assert_eq!(x.summaries, y.summaries, "{name}");
        }
    }
}

#[test]
fn corpus_findings() {
    let expect = [("auction", 1), ("ctselect", 1), ("kremlib", 0), ("uaf", 1), ("ct_lookup", 0)];
    for (name, n) in expect {
        let p = sample_program(name);
        for engine in [Engine::Unary, Engine::Relational] {
            for driver in [Driver::BottomUp, Driver::TopDown] {
                let a = analyze(&p, engine, driver, false);
                assert_eq!(a.findings.len(), n, "{name} {engine:?} {driver}");
            }
        }
    }
    let p = sample_program("ct_lookup");
    assert_eq!(analyze(&p, Engine::Relational, Driver::BottomUp, true).findings.len(), 1);
}

#[test]
fn engines_and_drivers_agree_on_the_corpus() {
    for name in CORPUS {
        let p = sample_program(name);
        let reference = findings(&analyze(&p, Engine::Relational, Driver::BottomUp, false));
        assert_eq!(findings(&analyze(&p, Engine::Unary, Driver::BottomUp, false)), reference, "{name}");
        assert_eq!(findings(&analyze(&p, Engine::Relational, Driver::TopDown, false)), reference, "{name}");
    }
}

#[test]
fn cached_results_are_reused() {
    let p = sample_program("auction");
    let o = opts(Engine::Unary, false);
    let first = analyze_program(&p, &o, Driver::BottomUp, None);
    let cache = first.to_cache();
    let second = analyze_program(&p, &o, Driver::BottomUp, Some(&cache));
    assert!(second.functions.iter().all(|r| r.cached));
    assert_eq!(findings(&first), findings(&second));
    // a different engine invalidates the cache
    let third = analyze_program(&p, &opts(Engine::Relational, false), Driver::BottomUp, Some(&cache));
    assert!(third.functions.iter().all(|r| !r.cached));
}
