mod common;

use common::*;
use insecscan::assertions::{Engine, Setting, SpatialAtom, SymState};
use insecscan::lang::{parse_program, Cmd};
use insecscan::oracle::{check_judgement, check_witness, Verdict};
use insecscan::symex::{analyze_function, NoCallees, Options, Outcome, PostAssertion, Status};
use proptest::prelude::*;

const ATOMIC: [&str; 8] = [
    "x = y + 1;",
    "x = [a];",
    "[a] = x;",
    "free(b);",
    "v = alloc(1);",
    "output(low, y);",
    "w = input(high);",
    "skip;",
];

fn atomic() -> impl Strategy<Value = Cmd> {
    prop::sample::select(ATOMIC.to_vec()).prop_map(body)
}

fn cell() -> impl Strategy<Value = SpatialAtom> {
    (
        prop::sample::select(vec!["a", "b", "c"]),
        prop::option::of(prop::sample::select(vec!["v", "w", "1"])),
    )
        .prop_map(|(a, v)| match v {
            Some(v) => SpatialAtom::PointsTo(ex(a), ex(v)),
            None => SpatialAtom::Invalid(ex(a)),
        })
}

fn state() -> impl Strategy<Value = SymState> {
    prop::collection::vec(cell(), 0..2).prop_map(|cells| SymState::from_parts(Vec::new(), cells))
}

proptest! {
    #[test]
    fn backprop_frames_every_element(
        elems in prop::collection::vec((atomic(), state()), 0..=6),
        frame in prop::collection::vec(cell(), 0..3),
    ) {
        if let Err(e) = check_backprop(&elems, &frame) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn framing_preserves_confirmed_axioms() {
    let (axioms, _) = axioms();
    for a in axioms {
        let mut pre = a.pre.clone();
        let mut post = a.post.clone();
        // a cell at an address no axiom mentions
        pre = pre.pto("f", "g");
        post.state.spatial.push(SpatialAtom::PointsTo(ex("f"), ex("g")));
        let v = check_witness(&pre.0, &body(a.cmd), &post, None, &oracle(2));
        assert_eq!(v, Verdict::Confirmed, "{} framed: {v}", a.name);
    }
}

fn run(src: &str, engine: Engine) -> (insecscan::lang::Program, Vec<Outcome>, insecscan::symex::FunctionRun) {
    let p = parse_program(src).unwrap();
    let mut opts = Options::new(Setting::two_point(2));
    opts.engine = engine;
    let f = p.functions.last().unwrap();
    let r = analyze_function(f, &opts, &mut NoCallees);
    (p.clone(), r.outcomes.clone(), r)
}

fn statuses(outcomes: &[Outcome]) -> Vec<String> {
    let mut v: Vec<String> = outcomes.iter().map(|o| o.post.status.to_string()).collect();
    v.sort();
    v.dedup();
    v
}

#[test]
fn load_explores_ok_invalid_and_null() {
    let (_, outs, _) = run("fun f(a) { L: x = [a]; }", Engine::Relational);
    assert_eq!(statuses(&outs), vec!["err(L)", "ok"]);
    assert_eq!(outs.len(), 3);
    // errors about the caller's pointer are latent
    assert!(outs.iter().filter(|o| !o.post.status.is_ok()).all(|o| o.latent));
}

#[test]
fn use_after_free_is_manifest() {
    let (_, outs, _) = run("fun f() { p = alloc(1); free(p); L: x = [p]; }", Engine::Unary);
    let errs: Vec<&Outcome> = outs.iter().filter(|o| matches!(o.post.status, Status::Err(_))).collect();
    assert_eq!(errs.len(), 1);
    assert!(!errs[0].latent);
}

#[test]
fn null_dereference_of_a_local_is_manifest() {
    let (_, outs, _) = run("fun f() { L: x = [p]; }", Engine::Unary);
    assert_eq!(outs.len(), 1);
    assert_eq!(outs[0].post.status.to_string(), "err(L)");
    assert!(!outs[0].latent);
}

#[test]
fn secret_branch_is_insecure_public_branch_is_not() {
    let (_, outs, _) = run("fun f() { h = input(high); L: if (h) { x = 1; } else { x = 2; } }", Engine::Relational);
    assert!(statuses(&outs).contains(&"insec(L)".to_string()));
    let (_, outs, _) = run("fun f() { h = input(low); L: if (h) { x = 1; } else { x = 2; } }", Engine::Relational);
    assert!(!statuses(&outs).contains(&"insec(L)".to_string()));
    // identical branches leak nothing
    let (_, outs, _) = run("fun f() { h = input(high); L: if (h) { x = 1; } else { x = 1; } }", Engine::Relational);
    assert_eq!(statuses(&outs), vec!["ok"]);
}

#[test]
fn secret_output_is_insecure() {
    for engine in [Engine::Unary, Engine::Relational] {
        let (_, outs, _) = run("fun f() { h = input(high); L: output(low, h); }", engine);
        assert_eq!(statuses(&outs), vec!["insec(L)", "ok"], "{engine:?}");
        let (_, outs, _) = run("fun f() { h = input(high); L: output(high, h); }", engine);
        assert_eq!(statuses(&outs), vec!["ok"], "{engine:?}");
    }
}

#[test]
fn every_judgement_of_small_functions_is_confirmed() {
    let cases = [
        "fun f(a, b) { x = [a]; [b] = x + 1; free(a); }",
        "fun f(a) { h = input(high); if (h > 1) { [a] = h; } else { skip; } }",
        "fun f(n) { while (n) { n = n - 1; output(low, n); } }",
        "fun f(p) { q = alloc(p); r = [q]; output(low, r); free(q); }",
        "fun f(a) { s = input(high); t = input(low); output(low, t); if (t) { output(low, s); } else { skip; } }",
    ];
    for src in cases {
        for engine in [Engine::Unary, Engine::Relational] {
            let (p, _, r) = run(src, engine);
            for j in r.judgements() {
                let v = check_judgement(&j, Some(&p), &oracle(2));
                assert!(!v.is_refuted(), "{src} {engine:?}\n{j}\n{v}");
            }
        }
    }
}

#[test]
fn loops_are_unrolled_to_the_bound() {
    let p = parse_program("fun f(n) { while (n) { n = n - 1; } }").unwrap();
    let f = &p.functions[0];
    let mut opts = Options::new(Setting::two_point(2));
    let one = analyze_function(f, &opts, &mut NoCallees).outcomes.len();
    opts.bounds.unroll = 3;
    let three = analyze_function(f, &opts, &mut NoCallees).outcomes.len();
    assert!(three > one, "{one} vs {three}");
}

#[test]
fn post_assertion_display() {
    let post = PostAssertion::ok(A::emp().pto("a", "1").0);
    assert!(post.to_string().starts_with("[ok: "), "{post}");
}
