//! Visibly pushdown automata: explicit representation, validation, and the
//! deterministic-machine interface used by lasso evaluation and products.

use std::collections::HashMap;
use std::fmt;

use crate::alphabet::{Alphabet, Class};
use crate::error::{Error, Result};

/// Index of the bottom stack symbol in every stack alphabet.
pub const BOTTOM: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CallEdge {
    pub from: usize,
    pub sym: usize,
    pub to: usize,
    pub push: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntEdge {
    pub from: usize,
    pub sym: usize,
    pub to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RetEdge {
    pub from: usize,
    pub sym: usize,
    pub top: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Acceptance {
    /// Büchi set, one flag per state.
    Buchi(Vec<bool>),
    /// Priority per state; a word is accepted when the least priority seen
    /// infinitely often at steps is even.
    Parity(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vpa {
    pub alphabet: Alphabet,
    pub states: Vec<String>,
    pub initial: usize,
    /// Stack alphabet; entry [`BOTTOM`] is the bottom symbol.
    pub stack: Vec<String>,
    pub calls: Vec<CallEdge>,
    pub ints: Vec<IntEdge>,
    pub rets: Vec<RetEdge>,
    pub acceptance: Acceptance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    BottomPushed { state: String, symbol: String },
    ClassMismatch { relation: &'static str, symbol: String },
    NotTotal { relation: &'static str, missing: String },
    NotFunction { relation: &'static str, at: String },
    BadIndex(String),
    AcceptanceSize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BottomPushed { state, symbol } => {
                write!(f, "bottom pushed by call from {state} on {symbol}")
            }
            Violation::ClassMismatch { relation, symbol } => {
                write!(f, "symbol class mismatch: {symbol} used in {relation}")
            }
            Violation::NotTotal { relation, missing } => {
                write!(f, "{relation} not total: no transition for {missing}")
            }
            Violation::NotFunction { relation, at } => {
                write!(f, "{relation} not a function at {at}")
            }
            Violation::BadIndex(s) => write!(f, "index out of range: {s}"),
            Violation::AcceptanceSize => f.write_str("acceptance annotation does not cover every state"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub problems: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.problems.iter().map(ToString::to_string).collect()
    }
}

impl Vpa {
    /// Sorts and deduplicates the transition lists.
    pub fn normalize(&mut self) {
        self.calls.sort();
        self.calls.dedup();
        self.ints.sort();
        self.ints.dedup();
        self.rets.sort();
        self.rets.dedup();
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn priorities(&self) -> Option<&[u32]> {
        match &self.acceptance {
            Acceptance::Parity(p) => Some(p),
            Acceptance::Buchi(_) => None,
        }
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn stack_index(&self, name: &str) -> Option<usize> {
        self.stack.iter().position(|s| s == name)
    }

    /// True when all three transition relations are total functions.
    pub fn is_deterministic(&self) -> bool {
        validate_automaton(self, true).is_valid()
    }
}

/// Lists every structural problem of `a`. With `deterministic` set, the
/// three transition relations must additionally be total functions.
pub fn validate_automaton(a: &Vpa, deterministic: bool) -> ValidationReport {
    let mut problems = Vec::new();
    let ns = a.states.len();
    let na = a.alphabet.len();
    let nz = a.stack.len();
    if a.initial >= ns {
        problems.push(Violation::BadIndex(format!("initial state {}", a.initial)));
    }
    if nz == 0 {
        problems.push(Violation::BadIndex("stack alphabet lacks the bottom symbol".into()));
    }
    let acc_len = match &a.acceptance {
        Acceptance::Buchi(f) => f.len(),
        Acceptance::Parity(p) => p.len(),
    };
    if acc_len != ns {
        problems.push(Violation::AcceptanceSize);
    }
    let bad = |s: usize, n: usize| s >= n;
    for e in &a.calls {
        if bad(e.from, ns) || bad(e.to, ns) || bad(e.sym, na) || bad(e.push, nz) {
            problems.push(Violation::BadIndex(format!("{e:?}")));
            continue;
        }
        if a.alphabet.class_of(e.sym) != Class::Call {
            problems.push(Violation::ClassMismatch { relation: "call_trans", symbol: a.alphabet.name(e.sym).into() });
        }
        if e.push == BOTTOM {
            problems.push(Violation::BottomPushed {
                state: a.states[e.from].clone(),
                symbol: a.alphabet.name(e.sym).into(),
            });
        }
    }
    for e in &a.ints {
        if bad(e.from, ns) || bad(e.to, ns) || bad(e.sym, na) {
            problems.push(Violation::BadIndex(format!("{e:?}")));
            continue;
        }
        if a.alphabet.class_of(e.sym) != Class::Int {
            problems.push(Violation::ClassMismatch { relation: "int_trans", symbol: a.alphabet.name(e.sym).into() });
        }
    }
    for e in &a.rets {
        if bad(e.from, ns) || bad(e.to, ns) || bad(e.sym, na) || bad(e.top, nz) {
            problems.push(Violation::BadIndex(format!("{e:?}")));
            continue;
        }
        if a.alphabet.class_of(e.sym) != Class::Ret {
            problems.push(Violation::ClassMismatch { relation: "ret_trans", symbol: a.alphabet.name(e.sym).into() });
        }
    }
    if deterministic && problems.is_empty() {
        check_functions(a, &mut problems);
    }
    ValidationReport { problems }
}

fn check_functions(a: &Vpa, problems: &mut Vec<Violation>) {
    let mut calls: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for e in &a.calls {
        if let Some(prev) = calls.insert((e.from, e.sym), (e.to, e.push)) {
            if prev != (e.to, e.push) {
                problems.push(Violation::NotFunction {
                    relation: "call_trans",
                    at: format!("({}, {})", a.states[e.from], a.alphabet.name(e.sym)),
                });
            }
        }
    }
    let mut ints: HashMap<(usize, usize), usize> = HashMap::new();
    for e in &a.ints {
        if let Some(prev) = ints.insert((e.from, e.sym), e.to) {
            if prev != e.to {
                problems.push(Violation::NotFunction {
                    relation: "int_trans",
                    at: format!("({}, {})", a.states[e.from], a.alphabet.name(e.sym)),
                });
            }
        }
    }
    let mut rets: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for e in &a.rets {
        if let Some(prev) = rets.insert((e.from, e.sym, e.top), e.to) {
            if prev != e.to {
                problems.push(Violation::NotFunction {
                    relation: "ret_trans",
                    at: format!("({}, {}, {})", a.states[e.from], a.alphabet.name(e.sym), a.stack[e.top]),
                });
            }
        }
    }
    let mut missing: [Option<String>; 3] = [None, None, None];
    for s in 0..a.states.len() {
        for sym in 0..a.alphabet.len() {
            let at = || format!("({}, {})", a.states[s], a.alphabet.name(sym));
            match a.alphabet.class_of(sym) {
                Class::Call if !calls.contains_key(&(s, sym)) => {
                    missing[0].get_or_insert_with(at);
                }
                Class::Int if !ints.contains_key(&(s, sym)) => {
                    missing[1].get_or_insert_with(at);
                }
                Class::Ret => {
                    for z in 0..a.stack.len() {
                        if !rets.contains_key(&(s, sym, z)) {
                            missing[2].get_or_insert_with(|| {
                                format!("({}, {}, {})", a.states[s], a.alphabet.name(sym), a.stack[z])
                            });
                        }
                    }
                }
                _ => {}
            }
        }
    }
    let rels = ["call_trans", "int_trans", "ret_trans"];
    for (i, m) in missing.into_iter().enumerate() {
        if let Some(missing) = m {
            problems.push(Violation::NotTotal { relation: rels[i], missing });
        }
    }
}

/// A deterministic VPA given by its transition functions. Implementations
/// may compute transitions on demand, hence `&mut self`.
pub trait DetMachine {
    fn alphabet(&self) -> &Alphabet;
    fn start(&mut self) -> Result<usize>;
    fn call(&mut self, s: usize, sym: usize) -> Result<(usize, usize)>;
    fn int(&mut self, s: usize, sym: usize) -> Result<usize>;
    /// `top` is [`BOTTOM`] when the stack is empty.
    fn ret(&mut self, s: usize, sym: usize, top: usize) -> Result<usize>;
    fn priority(&mut self, s: usize) -> Result<u32>;
}

/// Dense transition tables of an explicit deterministic VPA.
#[derive(Clone, Debug)]
pub struct DetTables {
    alphabet: Alphabet,
    initial: usize,
    nsym: usize,
    nstack: usize,
    call: Vec<(usize, usize)>,
    int: Vec<usize>,
    ret: Vec<usize>,
    prio: Vec<u32>,
}

impl DetTables {
    pub fn new(a: &Vpa) -> Result<DetTables> {
        let report = validate_automaton(a, true);
        if !report.is_valid() {
            return Err(Error::Invalid(report.messages().join("; ")));
        }
        let prio = a
            .priorities()
            .ok_or_else(|| Error::Invalid("deterministic automaton needs a priority map".into()))?
            .to_vec();
        let (ns, nsym, nstack) = (a.states.len(), a.alphabet.len(), a.stack.len());
        let mut call = vec![(usize::MAX, usize::MAX); ns * nsym];
        let mut int = vec![usize::MAX; ns * nsym];
        let mut ret = vec![usize::MAX; ns * nsym * nstack];
        for e in &a.calls {
            call[e.from * nsym + e.sym] = (e.to, e.push);
        }
        for e in &a.ints {
            int[e.from * nsym + e.sym] = e.to;
        }
        for e in &a.rets {
            ret[(e.from * nsym + e.sym) * nstack + e.top] = e.to;
        }
        Ok(DetTables { alphabet: a.alphabet.clone(), initial: a.initial, nsym, nstack, call, int, ret, prio })
    }
}

impl DetMachine for DetTables {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn start(&mut self) -> Result<usize> {
        Ok(self.initial)
    }

    fn call(&mut self, s: usize, sym: usize) -> Result<(usize, usize)> {
        Ok(self.call[s * self.nsym + sym])
    }

    fn int(&mut self, s: usize, sym: usize) -> Result<usize> {
        Ok(self.int[s * self.nsym + sym])
    }

    fn ret(&mut self, s: usize, sym: usize, top: usize) -> Result<usize> {
        Ok(self.ret[(s * self.nsym + sym) * self.nstack + top])
    }

    fn priority(&mut self, s: usize) -> Result<u32> {
        Ok(self.prio[s])
    }
}

/// Successor lookup for a nondeterministic Büchi VPA.
#[derive(Clone, Debug)]
pub struct NvpaIndex {
    pub num_states: usize,
    pub initial: usize,
    pub accepting: Vec<bool>,
    pub alphabet: Alphabet,
    call: HashMap<(usize, usize), Vec<(usize, usize)>>,
    int: HashMap<(usize, usize), Vec<usize>>,
    ret: HashMap<(usize, usize, usize), Vec<usize>>,
}

impl NvpaIndex {
    pub fn new(a: &Vpa) -> Result<NvpaIndex> {
        let accepting = match &a.acceptance {
            Acceptance::Buchi(f) => f.clone(),
            Acceptance::Parity(_) => {
                return Err(Error::Invalid("expected a Büchi automaton".into()));
            }
        };
        let mut call: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        let mut int: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut ret: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();
        for e in &a.calls {
            call.entry((e.from, e.sym)).or_default().push((e.to, e.push));
        }
        for e in &a.ints {
            int.entry((e.from, e.sym)).or_default().push(e.to);
        }
        for e in &a.rets {
            ret.entry((e.from, e.sym, e.top)).or_default().push(e.to);
        }
        Ok(NvpaIndex {
            num_states: a.states.len(),
            initial: a.initial,
            accepting,
            alphabet: a.alphabet.clone(),
            call,
            int,
            ret,
        })
    }

    pub fn call_succ(&self, s: usize, sym: usize) -> &[(usize, usize)] {
        self.call.get(&(s, sym)).map_or(&[], Vec::as_slice)
    }

    pub fn int_succ(&self, s: usize, sym: usize) -> &[usize] {
        self.int.get(&(s, sym)).map_or(&[], Vec::as_slice)
    }

    pub fn ret_succ(&self, s: usize, sym: usize, top: usize) -> &[usize] {
        self.ret.get(&(s, sym, top)).map_or(&[], Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Symbol;

    fn fig3() -> Vpa {
        let alphabet = Alphabet::new(vec![
            ("c".into(), Symbol::plain(Class::Call)),
            ("t".into(), Symbol::plain(Class::Int)),
            ("r".into(), Symbol::plain(Class::Ret)),
        ])
        .unwrap();
        let (c, t, r) = (0, 1, 2);
        let mut a = Vpa {
            alphabet,
            states: vec!["s0".into(), "s1".into()],
            initial: 0,
            stack: vec!["bot".into(), "Z".into()],
            calls: vec![],
            ints: vec![],
            rets: vec![],
            acceptance: Acceptance::Parity(vec![1, 2]),
        };
        for s in 0..2 {
            a.calls.push(CallEdge { from: s, sym: c, to: 0, push: 1 });
            a.ints.push(IntEdge { from: s, sym: t, to: 1 });
            for z in 0..2 {
                a.rets.push(RetEdge { from: s, sym: r, top: z, to: 1 });
            }
        }
        a
    }

    #[test]
    fn fig3_is_deterministic() {
        let a = fig3();
        assert!(validate_automaton(&a, true).is_valid());
        assert!(a.is_deterministic());
    }

    #[test]
    fn pushing_bottom_is_reported() {
        let mut a = fig3();
        a.calls[0].push = BOTTOM;
        let msgs = validate_automaton(&a, false).messages();
        assert!(msgs.iter().any(|m| m.contains("bottom pushed")), "{msgs:?}");
    }

    #[test]
    fn empty_function_is_not_total() {
        let mut a = fig3();
        a.states.truncate(1);
        a.acceptance = Acceptance::Parity(vec![0]);
        a.calls.clear();
        a.ints.clear();
        a.rets.clear();
        let msgs = validate_automaton(&a, true).messages();
        assert!(msgs.iter().any(|m| m.starts_with("ret_trans not total")), "{msgs:?}");
    }

    #[test]
    fn conflicting_targets_are_not_a_function() {
        let mut a = fig3();
        a.ints.push(IntEdge { from: 0, sym: 1, to: 0 });
        let msgs = validate_automaton(&a, true).messages();
        assert!(msgs.iter().any(|m| m.starts_with("int_trans not a function")), "{msgs:?}");
    }
}
