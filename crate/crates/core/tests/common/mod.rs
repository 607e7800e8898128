//! Seeded generators shared by the property and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use caretprob::caret::{Formula, Path};
use caretprob::format::{bundled_pvpa, parse_pvpa, parse_vpa, BUNDLED};
use caretprob::lasso::{is_pump_safe, LassoWord};
use caretprob::pvpa::Pvpa;
use caretprob::vpa::Vpa;
use caretprob::{Class, Symbol};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bundled_models() -> Vec<(String, Pvpa)> {
    BUNDLED
        .iter()
        .filter(|(n, _)| n.ends_with(".pvpa"))
        .map(|(n, _)| (n.to_string(), bundled_pvpa(n).unwrap()))
        .collect()
}

/// Positive weights normalised to a distribution, rendered as fractions.
fn split(r: &mut ChaCha8Rng, k: usize) -> Vec<String> {
    let w: Vec<u32> = (0..k).map(|_| r.gen_range(1..=4)).collect();
    let total: u32 = w.iter().sum();
    w.iter().map(|x| format!("{x}/{total}")).collect()
}

fn pick(r: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(r);
    all.truncate(k.min(n));
    all
}

/// A random model with at most `max_states` states and one or two stack
/// symbols, written in the text format and parsed back.
pub fn random_pvpa_text(seed: u64, max_states: usize) -> String {
    let mut r = rng(seed);
    let n = r.gen_range(1..=max_states);
    let stack: Vec<&str> = if r.gen_bool(0.5) { vec!["Z"] } else { vec!["Z", "Y"] };
    let classes: Vec<&str> = (0..n).map(|_| *["call", "int", "ret"].choose(&mut r).unwrap()).collect();
    let mut out = format!("pvpa\nstack {}\n", stack.join(" "));
    for (q, c) in classes.iter().enumerate() {
        let p = if r.gen_bool(0.3) { "p" } else { "" };
        out += &format!("state q{q} {c}{{{p}}}\n");
    }
    out += "init q0\n";
    for (q, c) in classes.iter().enumerate() {
        match *c {
            "call" => {
                let pairs: Vec<(usize, usize)> = (0..n).flat_map(|t| (0..stack.len()).map(move |z| (t, z))).collect();
                let k = r.gen_range(1..=3.min(pairs.len()));
                let chosen = pick(&mut r, pairs.len(), k);
                let ps = split(&mut r, chosen.len());
                for (i, p) in chosen.iter().zip(ps) {
                    let (t, z) = pairs[*i];
                    out += &format!("call q{q} -> q{t} {} {p}\n", stack[z]);
                }
            }
            "int" => {
                let k = r.gen_range(1..=3);
                let ts = pick(&mut r, n, k);
                for (t, p) in ts.iter().zip(split(&mut r, ts.len())) {
                    out += &format!("int q{q} -> q{t} {p}\n");
                }
            }
            _ => {
                for top in stack.iter().copied().chain(["bot"]) {
                    let k = r.gen_range(1..=2);
                    let ts = pick(&mut r, n, k);
                    for (t, p) in ts.iter().zip(split(&mut r, ts.len())) {
                        out += &format!("ret q{q} {top} -> q{t} {p}\n");
                    }
                }
            }
        }
    }
    out
}

pub fn random_pvpa(seed: u64) -> Pvpa {
    parse_pvpa(&random_pvpa_text(seed, 6), "random").unwrap()
}

/// A random complete deterministic automaton over the unlabelled classes
/// and the `p`-labelled ones, so it reads any random model's labels.
pub fn random_dvpa(seed: u64) -> Vpa {
    let mut r = rng(seed);
    let n = r.gen_range(1..=3);
    let syms = [("c", "call{}"), ("cp", "call{p}"), ("t", "int{}"), ("tp", "int{p}"), ("r", "ret{}"), ("rp", "ret{p}")];
    let mut out = String::from("dvpa\n");
    for (n, t) in syms {
        out += &format!("symbol {n} {t}\n");
    }
    out += "stack A B\n";
    for s in 0..n {
        out += &format!("state s{s} priority {}\n", r.gen_range(0..=2));
    }
    out += "init s0\n";
    for s in 0..n {
        for c in ["c", "cp"] {
            out += &format!("call s{s} {c} -> s{} {}\n", r.gen_range(0..n), ["A", "B"][r.gen_range(0..2)]);
        }
        for t in ["t", "tp"] {
            out += &format!("int s{s} {t} -> s{}\n", r.gen_range(0..n));
        }
        for rr in ["r", "rp"] {
            for top in ["A", "B", "bot"] {
                out += &format!("ret s{s} {rr} {top} -> s{}\n", r.gen_range(0..n));
            }
        }
    }
    parse_vpa(&out, "random").unwrap()
}

fn symbols() -> Vec<Symbol> {
    let mut v = Vec::new();
    for c in [Class::Call, Class::Int, Class::Ret] {
        v.push(Symbol::plain(c));
        v.push(Symbol::new(c, ["p"]));
    }
    v
}

pub fn random_lasso(r: &mut ChaCha8Rng, max_prefix: usize, max_period: usize) -> LassoWord {
    let syms = symbols();
    let u: Vec<Symbol> = (0..r.gen_range(0..=max_prefix)).map(|_| syms.choose(r).unwrap().clone()).collect();
    loop {
        let v: Vec<Symbol> = (0..r.gen_range(1..=max_period)).map(|_| syms.choose(r).unwrap().clone()).collect();
        if is_pump_safe(&v) {
            return LassoWord::new(u, v).unwrap();
        }
    }
}

pub fn lasso_corpus(seed: u64, count: usize) -> Vec<LassoWord> {
    let mut r = rng(seed);
    (0..count).map(|_| random_lasso(&mut r, 4, 4)).collect()
}

/// A random formula over `p` and the class atoms with nesting depth at most
/// `depth`.
pub fn random_formula(r: &mut ChaCha8Rng, depth: usize) -> Formula {
    let leaf = |r: &mut ChaCha8Rng| match r.gen_range(0..6) {
        0 | 1 => Formula::atom("p"),
        2 => Formula::Class(Class::Call),
        3 => Formula::Class(Class::Int),
        4 => Formula::Class(Class::Ret),
        _ => Formula::True,
    };
    if depth == 0 || r.gen_bool(0.2) {
        return leaf(r);
    }
    let path = *Path::ALL.choose(r).unwrap();
    let d = depth - 1;
    match r.gen_range(0..8) {
        0 => Formula::not(random_formula(r, d)),
        1 => Formula::and(random_formula(r, d), random_formula(r, d)),
        2 => Formula::or(random_formula(r, d), random_formula(r, d)),
        3 => Formula::implies(random_formula(r, d), random_formula(r, d)),
        4 => Formula::next(path, random_formula(r, d)),
        5 => Formula::until(path, random_formula(r, d), random_formula(r, d)),
        6 => Formula::eventually(path, random_formula(r, d)),
        _ => Formula::always(path, random_formula(r, d)),
    }
}

pub fn ap_p() -> BTreeSet<String> {
    ["p".to_string()].into()
}

pub mod inv {
    //! Invariant checks returning a description of the first violation.

    use caretprob::probsolve::{build_system, pvoc_div_signs, sign_of_return, PolySystem, ReturnTable, Sign, Value};
    use caretprob::pvpa::{validate_pvpa, Pvpa};
    use caretprob::stepchain::{build_step_chain, build_step_graph};
    use caretprob::Error;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    type Check = Result<(), String>;

    fn f64_of(x: &BigRational) -> f64 {
        x.to_f64().unwrap()
    }

    /// `iters` rounds of fixed-point iteration from zero in floating point.
    pub fn kleene(sys: &PolySystem, iters: usize) -> Vec<f64> {
        let mut x = vec![0.0; sys.len()];
        for _ in 0..iters {
            x = sys
                .equations
                .iter()
                .map(|e| {
                    let mut s = f64_of(&e.constant);
                    for (&v, c) in &e.linear {
                        s += f64_of(c) * x[v];
                    }
                    for (&(a, b), c) in &e.quadratic {
                        s += f64_of(c) * x[a] * x[b];
                    }
                    s
                })
                .collect();
        }
        x
    }

    fn var_values(sys: &PolySystem, t: &ReturnTable) -> Vec<Value> {
        sys.vars.iter().map(|&(q, i)| t.first_pop[q][i].clone()).collect()
    }

    /// Model rows and, when it can be built, step-chain rows sum to one.
    pub fn row_stochastic(m: &Pvpa, t: &ReturnTable) -> Check {
        let rep = validate_pvpa(m);
        if !rep.is_valid() {
            return Err(format!("model invalid: {:?}", rep.problems));
        }
        match build_step_chain(m, t) {
            Ok(c) => {
                let one = BigRational::one();
                for (v, s) in c.row_sums().iter().enumerate() {
                    let ok = match s {
                        Value::Exact(x) => *x == one,
                        Value::Interval(..) => s.contains(&one),
                    };
                    if !ok {
                        return Err(format!("chain row {} sums to {s:?}", c.names[v]));
                    }
                }
                Ok(())
            }
            Err(Error::Undecided(_)) => Ok(()),
            Err(e) => Err(format!("chain failed: {e}")),
        }
    }

    /// `1 - sum_r ret(q, Z, r)` is the same for every non-bottom `Z` and
    /// matches the reported divergence.
    pub fn z_independent(m: &Pvpa, t: &ReturnTable, tol: f64) -> Check {
        for q in 0..m.num_states() {
            for z in 1..m.stack.len() {
                let total = (0..m.num_states()).fold(Value::zero(), |a, r| a.add(&t.ret(q, z, r)));
                let d = Value::one().sub(&total);
                let ok = match (&d, &t.div[q]) {
                    (Value::Exact(a), Value::Exact(b)) => a == b,
                    _ => (d.to_f64() - t.div[q].to_f64()).abs() <= 2.0 * tol + d.width() + t.div[q].width(),
                };
                if !ok {
                    return Err(format!("state {}: via {} gives {d:?}, div {:?}", m.states[q], m.stack[z], t.div[q]));
                }
            }
        }
        Ok(())
    }

    /// The solution satisfies every equation and is not above the iteration
    /// from zero.
    pub fn lfp_residual(m: &Pvpa, t: &ReturnTable, tol: f64) -> Check {
        let sys = build_system(m);
        let vals = var_values(&sys, t);
        if vals.iter().all(Value::is_exact) {
            let x: Vec<BigRational> = vals.iter().map(|v| v.exact().unwrap().clone()).collect();
            for (i, e) in sys.equations.iter().enumerate() {
                if e.eval(&x) != x[i] {
                    return Err(format!("exact residual nonzero at variable {i}"));
                }
            }
        } else {
            let x: Vec<BigRational> = vals.iter().map(|v| (v.lo() + v.hi()) / BigRational::from_integer(2.into())).collect();
            for (i, e) in sys.equations.iter().enumerate() {
                let r = f64_of(&(e.eval(&x) - &x[i])).abs();
                if r >= 10.0 * tol.max(vals[i].width()) {
                    return Err(format!("residual {r:e} at variable {i}"));
                }
            }
        }
        let k = kleene(&sys, 2000);
        for (i, v) in vals.iter().enumerate() {
            if k[i] > f64_of(v.hi()) + 1e-9 {
                return Err(format!("variable {i}: iterate {} above solution {:?}", k[i], v));
            }
        }
        Ok(())
    }

    /// Structural return signs agree with the table and with iteration
    /// from zero; one-counter divergence signs agree with the generic ones.
    pub fn sign_agreement(m: &Pvpa, t: &ReturnTable) -> Check {
        let sys = build_system(m);
        let k = kleene(&sys, 2 * sys.len().max(1));
        for (i, &(q, j)) in sys.vars.iter().enumerate() {
            if sys.support[q][j] != (k[i] > 0.0) {
                return Err(format!("y({}, {}) support {} but iterate {}", m.states[q], m.states[sys.ret_states[j]], sys.support[q][j], k[i]));
            }
        }
        for q in 0..m.num_states() {
            for z in 1..m.stack.len() {
                for r in 0..m.num_states() {
                    let s = sign_of_return(m, q, z, r);
                    if s != t.ret_sign(q, z, r) {
                        return Err(format!("return sign ({q},{z},{r}) differs"));
                    }
                    let v = t.ret(q, z, r);
                    if (s == Sign::Positive) == v.hi().is_zero() {
                        return Err(format!("return ({q},{z},{r}) sign {s:?} value {v:?}"));
                    }
                }
            }
        }
        for (q, s) in t.div_sign.iter().enumerate() {
            let v = &t.div[q];
            let bad = match s {
                Sign::Zero => !v.hi().is_zero(),
                Sign::Positive => v.lo().is_zero() && v.hi().is_zero(),
                Sign::Undecided => v.is_exact(),
            };
            if bad {
                return Err(format!("div sign {s:?} of {} but value {v:?}", m.states[q]));
            }
        }
        if let Some(p) = pvoc_div_signs(m) {
            for q in 0..m.num_states() {
                let (a, b) = (t.div_sign[q], p[q]);
                if a != Sign::Undecided && b != Sign::Undecided && a != b {
                    return Err(format!("one-counter div sign of {} is {b:?}, generic {a:?}", m.states[q]));
                }
            }
        }
        Ok(())
    }

    /// Chain edges with positive probability are exactly the graph edges.
    pub fn support_equal(m: &Pvpa, t: &ReturnTable) -> Check {
        let c = match build_step_chain(m, t) {
            Ok(c) => c,
            Err(Error::Undecided(_)) => return Ok(()),
            Err(e) => return Err(e.to_string()),
        };
        let g = build_step_graph(m, &t.div_sign).map_err(|e| e.to_string())?;
        if c.states != g.states {
            return Err("vertex sets differ".into());
        }
        for (v, sup) in c.support().into_iter().enumerate() {
            let mut succ = g.succ[v].clone();
            succ.sort_unstable();
            if sup != succ {
                return Err(format!("edges of {} differ: {sup:?} vs {succ:?}", c.names[v]));
            }
            if c.rows[v].iter().any(|(_, x)| x.hi().is_zero()) {
                return Err(format!("zero edge materialised at {}", c.names[v]));
            }
        }
        Ok(())
    }
}

/// A pump-safe lasso over the unlabelled class symbols.
pub fn random_plain_lasso(r: &mut ChaCha8Rng, max_prefix: usize, max_period: usize) -> LassoWord {
    let syms: Vec<Symbol> = Class::ALL.iter().map(|&c| Symbol::plain(c)).collect();
    let u: Vec<Symbol> = (0..r.gen_range(0..=max_prefix)).map(|_| syms.choose(r).unwrap().clone()).collect();
    loop {
        let v: Vec<Symbol> = (0..r.gen_range(1..=max_period)).map(|_| syms.choose(r).unwrap().clone()).collect();
        if is_pump_safe(&v) {
            return LassoWord::new(u, v).unwrap();
        }
    }
}
