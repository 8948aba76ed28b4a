mod common;

use common::{body, ex, sample};
use insecscan::lang::{
    parse_program, parse_program_with, print_program, Lattice, LatticeError, ParseError, Value, ValueDomain,
};
use insecscan::semantics::{Cell, Config, Event, Heap, Machine, Store};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn round_trips(src: &str) {
    let p = parse_program(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let printed = print_program(&p);
    let q = parse_program(&printed).unwrap_or_else(|e| panic!("{e}\n{printed}"));
    assert_eq!(p.functions.len(), q.functions.len());
    for (f, g) in p.functions.iter().zip(&q.functions) {
        assert_eq!((&f.name, &f.params, &f.body), (&g.name, &g.params, &g.body), "{printed}");
    }
    assert_eq!(printed, print_program(&q));
}

#[test]
fn samples_round_trip() {
    for name in ["auction", "ctselect", "kremlib", "uaf", "ct_lookup"] {
        round_trips(&sample(name));
    }
}

proptest! {
    #[test]
    fn generated_programs_round_trip(seed in any::<u64>(), params in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        round_trips(&common::gen::program(&mut rng, 12, params));
    }

    #[test]
    fn arithmetic_wraps(a in 0u64..16, b in 0u64..16) {
        let dom = ValueDomain::new(4);
        let s = Store::new().with("a", a).with("b", b);
        let eval = |src: &str| ex(src).eval(&s, &dom).unwrap().0;
        prop_assert_eq!(eval("a + b"), (a + b) % 16);
        prop_assert_eq!(eval("a - b"), (a + 16 - b) % 16);
        prop_assert_eq!(eval("a * b"), (a * b) % 16);
        prop_assert_eq!(eval("a < b"), u64::from(a < b));
        prop_assert_eq!(eval("a && b"), u64::from(a != 0 && b != 0));
        prop_assert_eq!(eval("a || b"), u64::from(a != 0 || b != 0));
        prop_assert_eq!(eval("!a"), u64::from(a == 0));
    }
}

#[test]
fn precedence_and_associativity() {
    let dom = ValueDomain::new(4);
    let s = Store::new();
    let eval = |src: &str| ex(src).eval(&s, &dom).unwrap().0;
    assert_eq!(eval("1 + 2 * 3"), 7);
    assert_eq!(eval("7 - 2 - 1"), 4);
    assert_eq!(eval("1 < 2 == 1"), 1);
    assert_eq!(eval("0 || 1 && 0"), 0);
    assert_eq!(eval("-1"), 15);
}

#[test]
fn parse_errors_carry_positions() {
    let err = |src: &str| parse_program(src).unwrap_err();
    assert!(matches!(err("x = ;"), ParseError::Syntax { .. }));
    assert_eq!(err("skip;\nx = ;").pos().line, 2);
    assert!(matches!(err("L: skip; L: skip;"), ParseError::DuplicateLabel { .. }));
    assert!(matches!(err("fun f() { skip; } fun f() { skip; }"), ParseError::DuplicateFunction { .. }));
    assert!(matches!(err("g(1);"), ParseError::UnknownFunction { .. }));
    assert!(matches!(err("fun f(a) { skip; } f(1, 2);"), ParseError::Arity { expected: 1, got: 2, .. }));
    assert!(matches!(
        err("fun f() { g(); } fun g() { f(); }"),
        ParseError::Recursion { .. }
    ));
    assert!(matches!(err("x = input(secret);"), ParseError::Syntax { .. }));
}

#[test]
fn custom_lattices() {
    let l = Lattice::chain(&["public", "internal", "secret"]).unwrap();
    let p = parse_program_with("x = input(internal); output(public, x);", &l).unwrap();
    assert_eq!(p.functions.len(), 1);
    assert!(parse_program_with("x = input(low);", &l).is_err());
    assert_eq!(Lattice::chain(&["only"]).unwrap_err(), LatticeError::TooSmall);
    assert!(matches!(Lattice::chain(&["a", "a"]), Err(LatticeError::Duplicate(_))));
    assert!(matches!(l.level("nope"), Err(LatticeError::Unknown(_))));
    assert!(l.leq(&l.level("public").unwrap(), &l.level("secret").unwrap()));
    assert!(!l.leq(&l.level("secret").unwrap(), &l.level("internal").unwrap()));
}

#[test]
fn auto_labels_are_stable_and_unique() {
    let p = parse_program(&sample("auction")).unwrap();
    let mut labels: Vec<String> = p
        .functions
        .iter()
        .flat_map(|f| f.body.labels())
        .map(|l| l.to_string())
        .collect();
    let n = labels.len();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), n);
    assert!(labels.contains(&"L3".to_string()));
}

fn run(src: &str, s: Store, h: Heap, ct: bool) -> Vec<(Vec<Event>, Config)> {
    let l = Lattice::two_point();
    let m = Machine::new(ValueDomain::new(2), &l).with_ct(ct);
    m.run_bounded(Config::Run(body(src), s, h), 64)
        .reached
        .into_iter()
        .filter(|(_, k)| k.is_terminal())
        .collect()
}

#[test]
fn machine_inputs_branch_over_the_domain() {
    let finals = run("x = input(high);", Store::new(), Heap::new(), false);
    assert_eq!(finals.len(), 4);
    let xs: Vec<u64> = finals.iter().map(|(_, k)| k.store().get(&"x".into()).0).collect();
    assert_eq!(xs.len(), 4);
}

#[test]
fn machine_heap_errors_abort() {
    let mut h = Heap::new();
    h.insert(Value(1), Cell::Val(Value(2)));
    let finals = run("free(p); x = [p];", Store::new().with("p", 1), h, false);
    assert_eq!(finals.len(), 1);
    assert!(matches!(finals[0].1, Config::Abort(..)));
    let finals = run("x = [p];", Store::new(), Heap::new(), false);
    assert!(matches!(finals[0].1, Config::Abort(..)));
}

#[test]
fn machine_allocation_reuses_freed_cells() {
    let mut h = Heap::new();
    h.insert(Value(1), Cell::Val(Value(0)));
    h.insert(Value(2), Cell::Val(Value(0)));
    h.insert(Value(3), Cell::Invalid);
    let finals = run("p = alloc(7);", Store::new(), h, false);
    assert_eq!(finals.len(), 1);
    assert_eq!(finals[0].1.store().get(&"p".into()), Value(3));
    assert_eq!(finals[0].0, vec![Event::Alloc(Value(3))]);
}

#[test]
fn machine_records_accesses_only_in_ct_mode() {
    let mut h = Heap::new();
    h.insert(Value(2), Cell::Val(Value(1)));
    let s = Store::new().with("p", 2);
    let plain = run("x = [p];", s.clone(), h.clone(), false);
    assert_eq!(plain[0].0, vec![Event::Tau]);
    let ct = run("x = [p];", s, h, true);
    assert_eq!(ct[0].0, vec![Event::Access(Value(2))]);
}

#[test]
fn machine_calls_see_only_their_arguments() {
    let p = parse_program("fun inc(a) { ret = a + 1; } x = 2; y = inc(x); z = a;").unwrap();
    let l = Lattice::two_point();
    let m = Machine::new(ValueDomain::new(2), &l).with_program(&p);
    let main = p.function("main").unwrap().body.clone();
    let r = m.run_bounded(Config::Run(main, Store::new(), Heap::new()), 64);
    let finals: Vec<_> = r.reached.iter().filter(|(_, k)| k.is_terminal()).collect();
    assert_eq!(finals.len(), 1);
    let s = finals[0].1.store();
    assert_eq!(s.get(&"y".into()), Value(3));
    assert_eq!(s.get(&"z".into()), Value(0));
}

#[test]
fn machine_loops_are_cut_at_the_step_bound() {
    let l = Lattice::two_point();
    let m = Machine::new(ValueDomain::new(2), &l);
    let r = m.run_bounded(Config::Run(body("while (1) { skip; }"), Store::new(), Heap::new()), 10);
    assert!(r.cut_off);
    assert!(r.reached.iter().all(|(_, k)| !k.is_terminal()));
}
