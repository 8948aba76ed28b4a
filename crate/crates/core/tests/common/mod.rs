#![allow(dead_code)]

use std::collections::BTreeSet;

use insecscan::assertions::{biabduce, entails, Mode, PureAtom, Setting, SpatialAtom, SymState};
use insecscan::lang::{parse_expr, parse_program, Cmd, Expr, Label, Lattice, Program, Var};
use insecscan::semantics::Store;
use insecscan::symex::{backprop, Trace};
use insecscan::oracle::{check_witness, OracleConfig, Verdict};
use insecscan::symex::{PostAssertion, Status};

pub fn ex(s: &str) -> Expr {
    parse_expr(s, &Lattice::two_point()).unwrap_or_else(|e| panic!("{s}: {e}"))
}

/// Body of the implicit `main` of `src`.
pub fn body(src: &str) -> Cmd {
    let p = parse_program(src).unwrap();
    p.function("main").unwrap().body.clone()
}

pub fn sample(name: &str) -> String {
    std::fs::read_to_string(format!("{}/samples/{name}.mc", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

pub fn sample_program(name: &str) -> Program {
    parse_program(&sample(name)).unwrap()
}

/// Compact assertion builder.
#[derive(Clone, Default)]
pub struct A(pub SymState);

impl A {
    pub fn emp() -> A {
        A(SymState::emp())
    }
    pub fn pure(mut self, e: &str) -> A {
        self.0.add_pure(PureAtom::Expr(ex(e)));
        self
    }
    pub fn sec(mut self, e: &str, l: &str) -> A {
        self.0.add_pure(PureAtom::Sec(ex(e), ex(l)));
        self
    }
    pub fn insec(mut self, e: &str, l: &str) -> A {
        self.0.add_pure(PureAtom::Insec(ex(e), ex(l)));
        self
    }
    pub fn pto(mut self, a: &str, v: &str) -> A {
        self.0.spatial.push(SpatialAtom::PointsTo(ex(a), ex(v)));
        self
    }
    pub fn inv(mut self, a: &str) -> A {
        self.0.spatial.push(SpatialAtom::Invalid(ex(a)));
        self
    }
}

pub fn ok(a: A) -> PostAssertion {
    PostAssertion {
        status: Status::Ok,
        state: a.0,
    }
}

pub fn err(l: &str, a: A) -> PostAssertion {
    PostAssertion {
        status: Status::Err(Label::new(l)),
        state: a.0,
    }
}

pub fn insec(l: &str, a: A) -> PostAssertion {
    PostAssertion {
        status: Status::Insec(Label::new(l)),
        state: a.0,
    }
}

pub fn oracle(bits: u32) -> OracleConfig {
    OracleConfig::new(Setting::two_point(bits))
}

pub struct Axiom {
    pub name: &'static str,
    pub pre: A,
    pub cmd: &'static str,
    pub post: PostAssertion,
}

/// One instance of each small-step proof rule, plus the insecure-output
/// rule with its result weakened to a secure one.
pub fn axioms() -> (Vec<Axiom>, Axiom) {
    let ax = |name, pre, cmd, post| Axiom { name, pre, cmd, post };
    let list = vec![
        ax("Skip", A::emp().pure("y == 1"), "skip;", ok(A::emp().pure("y == 1"))),
        ax("Assign", A::emp().pure("y == a"), "x = y + 1;", ok(A::emp().pure("x == a + 1").pure("y == a"))),
        ax("Input", A::emp(), "x = input(low);", ok(A::emp().sec("x", "low"))),
        ax("LoadOK", A::emp().pto("a", "v"), "L: x = [a];", ok(A::emp().pure("x == v").pto("a", "v"))),
        ax("LoadErr", A::emp().inv("a"), "L: x = [a];", err("L", A::emp().inv("a"))),
        ax("StoreOK", A::emp().pto("a", "v"), "L: [a] = y;", ok(A::emp().pto("a", "y"))),
        ax("StoreErr", A::emp().inv("a"), "L: [a] = y;", err("L", A::emp().inv("a"))),
        ax("Alloc1", A::emp(), "x = alloc(y);", ok(A::emp().pto("x", "y"))),
        ax("Alloc2", A::emp().inv("a"), "x = alloc(y);", ok(A::emp().pure("x == a").pto("x", "y"))),
        ax("FreeOK", A::emp().pto("a", "v"), "L: free(a);", ok(A::emp().inv("a"))),
        ax("FreeErr", A::emp().inv("a"), "L: free(a);", err("L", A::emp().inv("a"))),
        ax("OutOK", A::emp().sec("x", "low"), "L: output(low, x);", ok(A::emp().sec("x", "low"))),
        ax("OutInsec", A::emp(), "L: output(low, x);", insec("L", A::emp().insec("x", "low"))),
    ];
    let mutant = ax("OutInsec-weakened", A::emp(), "L: output(low, x);", insec("L", A::emp().sec("x", "low")));
    (list, mutant)
}

pub fn check_axiom(a: &Axiom, bits: u32) -> Verdict {
    check_witness(&a.pre.0, &body(a.cmd), &a.post, None, &oracle(bits))
}

/// Random straight-line and structured programs over a few variables.
pub mod gen {
    use rand::Rng;

    const VARS: [&str; 4] = ["x", "y", "z", "p"];

    fn atom(rng: &mut impl Rng) -> String {
        if rng.gen_bool(0.6) {
            VARS[rng.gen_range(0..VARS.len())].to_string()
        } else {
            rng.gen_range(0..4u8).to_string()
        }
    }

    pub fn expr(rng: &mut impl Rng, depth: u32) -> String {
        if depth == 0 || rng.gen_bool(0.4) {
            return atom(rng);
        }
        let op = ["+", "-", "==", "!=", "<", ">", "&&"][rng.gen_range(0..7)];
        format!("({} {op} {})", expr(rng, depth - 1), expr(rng, depth - 1))
    }

    fn level(rng: &mut impl Rng) -> &'static str {
        if rng.gen_bool(0.5) {
            "low"
        } else {
            "high"
        }
    }

    fn var(rng: &mut impl Rng) -> &'static str {
        VARS[rng.gen_range(0..3)]
    }

    fn block(rng: &mut impl Rng, budget: &mut usize, out: &mut String, indent: usize) {
        let n = rng.gen_range(1..=3);
        for _ in 0..n {
            if *budget == 0 {
                break;
            }
            stmt(rng, budget, out, indent);
        }
        if out.ends_with("{\n") {
            out.push_str(&format!("{}skip;\n", " ".repeat(indent)));
        }
    }

    fn stmt(rng: &mut impl Rng, budget: &mut usize, out: &mut String, indent: usize) {
        *budget -= 1;
        let pad = " ".repeat(indent);
        let s = match rng.gen_range(0..11) {
            0 | 1 => format!("{} = {};", var(rng), expr(rng, 2)),
            2 => format!("{} = input({});", var(rng), level(rng)),
            3 => format!("output({}, {});", level(rng), expr(rng, 1)),
            4 => format!("p = alloc({});", expr(rng, 1)),
            5 => format!("{} = [p];", var(rng)),
            6 => format!("[p] = {};", expr(rng, 1)),
            7 => "free(p);".to_string(),
            8 | 9 => {
                out.push_str(&format!("{pad}if ({}) {{\n", expr(rng, 2)));
                block(rng, budget, out, indent + 2);
                out.push_str(&format!("{pad}}} else {{\n"));
                block(rng, budget, out, indent + 2);
                out.push_str(&format!("{pad}}}\n"));
                return;
            }
            _ => {
                out.push_str(&format!("{pad}while ({}) {{\n", expr(rng, 1)));
                block(rng, budget, out, indent + 2);
                out.push_str(&format!("{pad}}}\n"));
                return;
            }
        };
        out.push_str(&format!("{pad}{s}\n"));
    }

    /// Statements totalling at most `max_cmds` commands (compound
    /// statements count once, plus their bodies).
    pub fn statements(rng: &mut impl Rng, max_cmds: usize) -> String {
        let mut budget = rng.gen_range(1..=max_cmds);
        let mut out = String::new();
        while budget > 0 {
            stmt(rng, &mut budget, &mut out, 2);
        }
        out
    }

    /// A single function `f`. With `params`, its variables start out
    /// unknown instead of zero.
    pub fn program(rng: &mut impl Rng, max_cmds: usize, params: bool) -> String {
        let sig = if params { "x, y, z, p" } else { "" };
        format!("fun f({sig}) {{\n{}}}\n", statements(rng, max_cmds))
    }

    /// A callee `g` and a caller `f` that calls it once between two runs
    /// of random statements.
    pub fn program_with_call(rng: &mut impl Rng, max_cmds: usize) -> String {
        let half = (max_cmds / 2).max(1);
        let callee = statements(rng, half);
        let before = statements(rng, half);
        let after = statements(rng, half);
        format!(
            "fun g(x, y, z, p) {{\n{callee}  ret = x;\n}}\nfun f(x, y, z, p) {{\n{before}  x = g(x, y, z, p);\n{after}}}\n"
        )
    }
}

/// Outcome counts of checking every derived judgement of random programs
/// against the oracle.
#[derive(Debug, Default)]
pub struct Tally {
    pub programs: usize,
    pub confirmed: usize,
    pub inconclusive: usize,
    /// Program, judgement and counterexample of each refutation.
    pub refuted: Vec<String>,
}

/// Analyse the program generated from `seed` at 2 bits and check all its
/// judgements. Seeds alternate between the two engines; every fourth
/// program starts from zeroed locals, and with `calls` the program has a
/// callee that is used through its summaries.
pub fn check_random(seed: u64, max_cmds: usize, calls: bool, tally: &mut Tally) {
    use insecscan::assertions::Engine;
    use insecscan::summaries::{analyze_program, Driver};
    use insecscan::symex::{analyze_function, NoCallees, Options};
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let src = if calls {
        gen::program_with_call(&mut rng, max_cmds)
    } else {
        gen::program(&mut rng, max_cmds, !seed.is_multiple_of(4))
    };
    let p = parse_program(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let mut opts = Options::new(Setting::two_point(2));
    opts.engine = if seed.is_multiple_of(2) { Engine::Relational } else { Engine::Unary };
    let f = p.function("f").unwrap();
    let run = if calls {
        let a = analyze_program(&p, &opts, Driver::BottomUp, None);
        let mut env = BTreeMap::new();
        env.insert("g".to_string(), a.summaries("g"));
        analyze_function(f, &opts, &mut env)
    } else {
        analyze_function(f, &opts, &mut NoCallees)
    };
    tally.programs += 1;
    for j in run.judgements() {
        match insecscan::oracle::check_judgement(&j, Some(&p), &oracle(2)) {
            Verdict::Confirmed => tally.confirmed += 1,
            Verdict::Inconclusive { .. } => tally.inconclusive += 1,
            v @ Verdict::Refuted { .. } => tally.refuted.push(format!("seed {seed}\n{src}\n{j}\n{v}")),
        }
    }
}

/// Every store over `vars` with `bits`-bit values.
pub fn stores(vars: &[&str], bits: u32) -> Vec<Store> {
    let n = 1u64 << bits;
    let mut out = vec![Store::new()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|s| (0..n).map(move |k| s.clone().with(v, k)))
            .collect();
    }
    out
}

/// Boolean expressions over `x`, `y` and `z`: every comparison between
/// two operands, and the conjunctions, disjunctions and negations of a
/// fixed sample of them.
pub fn booleans() -> Vec<String> {
    let operands: Vec<String> = ["x", "y", "z"]
        .iter()
        .map(|v| v.to_string())
        .chain((0..4).map(|k| k.to_string()))
        .collect();
    let mut atoms = Vec::new();
    for a in &operands {
        for op in ["==", "!=", "<", "<=", ">", ">="] {
            for b in &operands {
                atoms.push(format!("{a} {op} {b}"));
            }
        }
    }
    let mut out = atoms.clone();
    let sample: Vec<&String> = atoms.iter().step_by(11).collect();
    for a in &sample {
        out.push(format!("!({a})"));
        for b in &sample {
            out.push(format!("({a}) && ({b})"));
            out.push(format!("({a}) || ({b})"));
        }
    }
    out.extend(["x", "y + z", "x - 1", "x && y", "x || (y == z)"].map(String::from));
    out
}

/// Framing a trace adds the frame to every presumption and leaves the
/// commands alone; it fails exactly when a command modifies a variable
/// of the frame.
pub fn check_backprop(elems: &[(Cmd, SymState)], frame: &[SpatialAtom]) -> Result<(), String> {
    let mut tr = Trace::new();
    for (c, pre) in elems {
        tr.push(c.clone(), pre.clone());
    }
    let mut fv: BTreeSet<Var> = BTreeSet::new();
    for a in frame {
        a.collect_vars(&mut fv);
    }
    let clash = elems.iter().any(|(c, _)| c.mods().iter().any(|m| fv.contains(m)));
    match backprop(frame, &tr) {
        Err(_) if clash => Ok(()),
        Err(e) => Err(format!("unexpected clash: {e:?}")),
        Ok(_) if clash => Err("clash not detected".into()),
        Ok(out) => {
            if out.len() != tr.len() {
                return Err(format!("length {} became {}", tr.len(), out.len()));
            }
            for (before, after) in tr.recent_first().zip(out.recent_first()) {
                let mut expected = before.pre.clone();
                expected.spatial.extend(frame.iter().cloned());
                if before.cmd != after.cmd || after.pre != expected {
                    return Err(format!("{} framed as {}", before.pre, after.pre));
                }
            }
            Ok(())
        }
    }
}

/// When `need` can be located in `st`, the located cell with the frame
/// describes the same states as `st` grown by the anti-frame.
pub fn check_biabduction(st: &SymState, need: &SpatialAtom, set: &Setting) -> Result<(), String> {
    for mode in [Mode::Unary, Mode::Relational] {
        let Some(b) = biabduce(need, st, set, mode) else { continue };
        let mut grown = st.clone();
        grown.spatial.extend(b.anti_frame.iter().cloned());
        for e in &b.equalities {
            grown.add_pure(e.clone());
        }
        let mut used = SymState { spatial: b.frame.clone(), ..grown.clone() };
        used.spatial.insert(0, need.clone());
        if !entails(&used, &grown, set).map_err(|e| e.to_string())? {
            return Err(format!("{mode:?}: {used} does not entail {grown}"));
        }
        if !entails(&grown, &used, set).map_err(|e| e.to_string())? {
            return Err(format!("{mode:?}: {grown} does not entail {used}"));
        }
    }
    Ok(())
}
