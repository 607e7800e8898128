//! Tableau translation of CaRet into a Büchi NVPA.
//!
//! A tableau state holds the obligations for the current position: those
//! from the global predecessor, and (strong and weak) ones from the
//! abstract predecessor which lapse if the current letter is a return. Caller
//! modalities are handled by guessing, at each call, which caller-relevant
//! subformulas hold there; the guess becomes the context of the positions
//! inside the call. Calls are also guessed to be matched or pending: a
//! matched call pushes the abstract obligations plus the outer context,
//! a pending call pushes a symbol that can never be popped.
//!
//! Acceptance is generalized Büchi and degeneralized with a counter:
//! - infinitely often all open calls are pending (so matched guesses are
//!   eventually confirmed);
//! - for every global until, infinitely often it was not just postponed;
//! - for every abstract until, infinitely often, at a position where all open
//!   calls are pending, it was not just postponed along the abstract path.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::nnf::{Arena, Node, NodeId};
use crate::alphabet::{Alphabet, Class, Symbol};
use crate::caret::{Formula, Path};
use crate::error::{Error, Result};
use crate::vpa::{Acceptance, CallEdge, IntEdge, RetEdge, Vpa, BOTTOM};

pub const DEFAULT_STATE_CAP: usize = 1 << 20;

type Set = BTreeSet<NodeId>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct TState {
    now: Set,
    abs_strong: Set,
    abs_weak: Set,
    ctx: Option<Set>,
    /// All open calls were guessed pending.
    bit: bool,
    deferred_g: Set,
    deferred_a: Set,
    /// `bit` as seen from the level of the position just read: for a call
    /// that is the caller's level, for a matched return the level it
    /// returns to.
    read_bit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum StackSym {
    Pending,
    Matched { abs_strong: Set, abs_weak: Set, ctx: Option<Set>, bit: bool },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Expansion {
    next_g: Set,
    abs_strong: Set,
    abs_weak: Set,
    deferred_g: Set,
    deferred_a: Set,
}

impl Expansion {
    fn dominates(&self, o: &Expansion) -> bool {
        self.next_g.is_subset(&o.next_g)
            && self.abs_strong.is_subset(&o.abs_strong)
            && self.abs_weak.is_subset(&o.abs_weak)
            && self.deferred_g.is_subset(&o.deferred_g)
            && self.deferred_a.is_subset(&o.deferred_a)
    }
}

struct Builder {
    ar: Arena,
    /// Subformulas whose truth at a call is guessed for its callees.
    theta: Vec<NodeId>,
    theta_neg: Vec<NodeId>,
    until_g: Vec<NodeId>,
    until_a: Vec<NodeId>,
    memo: HashMap<(Set, Symbol, Option<Set>), Vec<Expansion>>,
}

impl Builder {
    fn expand(&mut self, obligations: Set, sym: &Symbol, ctx: &Option<Set>) -> Vec<Expansion> {
        let key = (obligations, sym.clone(), ctx.clone());
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let mut out: Vec<Expansion> = Vec::new();
        let todo: Vec<NodeId> = key.0.iter().copied().collect();
        self.expand_rec(todo, Set::new(), Expansion::default(), sym, ctx, &mut out);
        out.sort();
        out.dedup();
        let mut kept: Vec<Expansion> = Vec::new();
        for (i, e) in out.iter().enumerate() {
            let dominated = out.iter().enumerate().any(|(j, o)| j != i && o.dominates(e) && (!e.dominates(o) || j < i));
            if !dominated {
                kept.push(e.clone());
            }
        }
        self.memo.insert(key, kept.clone());
        kept
    }

    fn expand_rec(
        &self,
        mut todo: Vec<NodeId>,
        mut done: Set,
        mut e: Expansion,
        sym: &Symbol,
        ctx: &Option<Set>,
        out: &mut Vec<Expansion>,
    ) {
        let claims = |a: NodeId| ctx.as_ref().is_some_and(|c| c.contains(&a));
        while let Some(id) = todo.pop() {
            if !done.insert(id) {
                continue;
            }
            match self.ar.node(id).clone() {
                Node::True => {}
                Node::False => return,
                Node::Lit(l, s) => {
                    if l.holds(sym) != s {
                        return;
                    }
                }
                Node::And(a, b) => {
                    todo.push(a);
                    todo.push(b);
                }
                Node::Or(a, b) => {
                    let mut t2 = todo.clone();
                    t2.push(b);
                    self.expand_rec(t2, done.clone(), e.clone(), sym, ctx, out);
                    todo.push(a);
                }
                Node::Next(Path::Global, a) | Node::WeakNext(Path::Global, a) => {
                    e.next_g.insert(a);
                }
                Node::Next(Path::Abstract, a) => {
                    e.abs_strong.insert(a);
                }
                Node::WeakNext(Path::Abstract, a) => {
                    e.abs_weak.insert(a);
                }
                Node::Next(Path::Caller, a) => {
                    if !claims(a) {
                        return;
                    }
                }
                Node::WeakNext(Path::Caller, a) => {
                    if ctx.is_some() && !claims(a) {
                        return;
                    }
                }
                Node::Until(p, a, b) => {
                    let mut t2 = todo.clone();
                    t2.push(b);
                    self.expand_rec(t2, done.clone(), e.clone(), sym, ctx, out);
                    todo.push(a);
                    match p {
                        Path::Global => {
                            e.next_g.insert(id);
                            e.deferred_g.insert(id);
                        }
                        Path::Abstract => {
                            e.abs_strong.insert(id);
                            e.deferred_a.insert(id);
                        }
                        Path::Caller => {
                            if !claims(id) {
                                return;
                            }
                        }
                    }
                }
                Node::Release(p, a, b) => {
                    todo.push(b);
                    let mut t2 = todo.clone();
                    t2.push(a);
                    self.expand_rec(t2, done.clone(), e.clone(), sym, ctx, out);
                    match p {
                        Path::Global => {
                            e.next_g.insert(id);
                        }
                        Path::Abstract => {
                            e.abs_weak.insert(id);
                        }
                        Path::Caller => {
                            if ctx.is_some() && !claims(id) {
                                return;
                            }
                        }
                    }
                }
            }
        }
        out.push(e);
    }

    fn accepting_sets(&self, s: &TState) -> Vec<bool> {
        let mut v = vec![s.bit];
        v.extend(self.until_g.iter().map(|u| !s.deferred_g.contains(u)));
        v.extend(self.until_a.iter().map(|u| s.read_bit && !s.deferred_a.contains(u)));
        v
    }
}

/// Subformulas relevant to callers: arguments of caller nexts and caller
/// untils/releases, closed under negation.
fn caller_claims(ar: &mut Arena, root: NodeId) -> Vec<NodeId> {
    let mut theta: BTreeSet<NodeId> = BTreeSet::new();
    let mut roots = vec![root];
    loop {
        let mut grown = false;
        for id in ar.reachable(&roots) {
            let claim = match ar.node(id) {
                Node::Next(Path::Caller, a) | Node::WeakNext(Path::Caller, a) => Some(*a),
                Node::Until(Path::Caller, ..) | Node::Release(Path::Caller, ..) => Some(id),
                _ => None,
            };
            if let Some(c) = claim {
                if theta.insert(c) {
                    grown = true;
                }
            }
        }
        if !grown {
            break;
        }
        let negs: Vec<NodeId> = theta.iter().map(|&t| ar.negate(t)).collect();
        roots = std::iter::once(root).chain(theta.iter().copied()).chain(negs).collect();
    }
    // Keep one representative per complementary pair.
    let mut out = Vec::new();
    for &t in &theta {
        let n = ar.negate(t);
        if !out.contains(&n) {
            out.push(t);
        }
    }
    out
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u64 << n).map(move |m| (0..n).map(|i| m >> i & 1 == 1).collect())
}

/// Translates `phi` into a Büchi NVPA over `2^ap x {call, int, ret}`.
pub fn caret_to_nvpa(phi: &Formula, ap: &BTreeSet<String>) -> Result<Vpa> {
    caret_to_nvpa_capped(phi, ap, DEFAULT_STATE_CAP)
}

pub fn caret_to_nvpa_capped(phi: &Formula, ap: &BTreeSet<String>, cap: usize) -> Result<Vpa> {
    if let Some(a) = phi.atoms().difference(ap).next() {
        return Err(Error::UnknownAtom(a.clone()));
    }
    let mut ar = Arena::default();
    let root = ar.build(phi, true);
    let theta = caller_claims(&mut ar, root);
    if theta.len() > 16 {
        return Err(Error::Resource(format!("{} caller claims", theta.len())));
    }
    let theta_neg: Vec<NodeId> = theta.iter().map(|&t| ar.negate(t)).collect();
    let mut everything = vec![root];
    everything.extend(&theta);
    everything.extend(&theta_neg);
    let closure = ar.reachable(&everything);
    let pick = |p: Path| -> Vec<NodeId> {
        closure.iter().copied().filter(|&id| matches!(ar.node(id), Node::Until(q, ..) if *q == p)).collect()
    };
    let until_g = pick(Path::Global);
    let until_a = pick(Path::Abstract);
    let mut b = Builder { ar, theta, theta_neg, until_g, until_a, memo: HashMap::new() };
    let alphabet = Alphabet::full(ap);

    let mut states: Vec<TState> = Vec::new();
    let mut index: HashMap<TState, usize> = HashMap::new();
    let mut stack: Vec<StackSym> = vec![StackSym::Pending];
    let mut stack_index: HashMap<StackSym, usize> = HashMap::new();
    stack_index.insert(StackSym::Pending, 1);
    let mut calls = Vec::new();
    let mut ints = Vec::new();
    let mut rets = Vec::new();
    let mut queue = VecDeque::new();

    let intern = |s: TState, states: &mut Vec<TState>, index: &mut HashMap<TState, usize>, queue: &mut VecDeque<usize>| -> Result<usize> {
        if let Some(&i) = index.get(&s) {
            return Ok(i);
        }
        if states.len() >= cap {
            return Err(Error::Resource(format!("tableau exceeded {cap} states")));
        }
        let i = states.len();
        states.push(s.clone());
        index.insert(s, i);
        queue.push_back(i);
        Ok(i)
    };

    let init = TState {
        now: Set::from([root]),
        abs_strong: Set::new(),
        abs_weak: Set::new(),
        ctx: None,
        bit: true,
        deferred_g: Set::new(),
        deferred_a: Set::new(),
        read_bit: true,
    };
    intern(init, &mut states, &mut index, &mut queue)?;
    // Return transitions are computed for every (state, stack symbol) pair
    // once both are known.
    let mut ret_done: BTreeSet<(usize, usize)> = BTreeSet::new();
    loop {
        while let Some(si) = queue.pop_front() {
            let s = states[si].clone();
            for sym_i in 0..alphabet.len() {
                let sym = alphabet.symbol(sym_i).clone();
                match sym.class {
                    Class::Int => {
                        let obl: Set = s.now.iter().chain(&s.abs_strong).chain(&s.abs_weak).copied().collect();
                        for e in b.expand(obl, &sym, &s.ctx) {
                            let t = TState {
                                now: e.next_g,
                                abs_strong: e.abs_strong,
                                abs_weak: e.abs_weak,
                                ctx: s.ctx.clone(),
                                bit: s.bit,
                                deferred_g: e.deferred_g,
                                deferred_a: e.deferred_a,
                                read_bit: s.bit,
                            };
                            let ti = intern(t, &mut states, &mut index, &mut queue)?;
                            ints.push(IntEdge { from: si, sym: sym_i, to: ti });
                        }
                    }
                    Class::Call => {
                        for choice in subsets(b.theta.len()) {
                            let mut obl: Set = s.now.iter().chain(&s.abs_strong).chain(&s.abs_weak).copied().collect();
                            let mut claims = Set::new();
                            for (i, &yes) in choice.iter().enumerate() {
                                if yes {
                                    obl.insert(b.theta[i]);
                                    claims.insert(b.theta[i]);
                                } else {
                                    obl.insert(b.theta_neg[i]);
                                    claims.insert(b.theta_neg[i]);
                                }
                            }
                            for e in b.expand(obl, &sym, &s.ctx) {
                                let mut pushes = vec![(
                                    StackSym::Matched {
                                        abs_strong: e.abs_strong.clone(),
                                        abs_weak: e.abs_weak.clone(),
                                        ctx: s.ctx.clone(),
                                        bit: s.bit,
                                    },
                                    false,
                                )];
                                if e.abs_strong.is_empty() {
                                    pushes.push((StackSym::Pending, s.bit));
                                }
                                for (z, bit) in pushes {
                                    let zi = match stack_index.get(&z) {
                                        Some(&i) => i,
                                        None => {
                                            stack.push(z.clone());
                                            stack_index.insert(z, stack.len());
                                            stack.len()
                                        }
                                    };
                                    let t = TState {
                                        now: e.next_g.clone(),
                                        abs_strong: Set::new(),
                                        abs_weak: Set::new(),
                                        ctx: Some(claims.clone()),
                                        bit,
                                        deferred_g: e.deferred_g.clone(),
                                        deferred_a: e.deferred_a.clone(),
                                        read_bit: s.bit,
                                    };
                                    let ti = intern(t, &mut states, &mut index, &mut queue)?;
                                    calls.push(CallEdge { from: si, sym: sym_i, to: ti, push: zi });
                                }
                            }
                        }
                    }
                    Class::Ret => {}
                }
            }
        }
        let mut pending = Vec::new();
        for si in 0..states.len() {
            for zi in 0..=stack.len() {
                if ret_done.insert((si, zi)) {
                    pending.push((si, zi));
                }
            }
        }
        if pending.is_empty() {
            break;
        }
        for (si, zi) in pending {
            let s = states[si].clone();
            if !s.abs_strong.is_empty() {
                continue;
            }
            let (extra, ctx_after, bit_after) = if zi == BOTTOM {
                if s.ctx.is_some() {
                    continue;
                }
                (Set::new(), None, s.bit)
            } else {
                match &stack[zi - 1] {
                    StackSym::Pending => continue,
                    StackSym::Matched { abs_strong, abs_weak, ctx, bit } => {
                        (abs_strong.union(abs_weak).copied().collect::<Set>(), ctx.clone(), *bit)
                    }
                }
            };
            let obl: Set = s.now.union(&extra).copied().collect();
            for sym_i in alphabet.of_class(Class::Ret).collect::<Vec<_>>() {
                let sym = alphabet.symbol(sym_i).clone();
                for e in b.expand(obl.clone(), &sym, &s.ctx) {
                    let t = TState {
                        now: e.next_g,
                        abs_strong: e.abs_strong,
                        abs_weak: e.abs_weak,
                        ctx: ctx_after.clone(),
                        bit: bit_after,
                        deferred_g: e.deferred_g,
                        deferred_a: e.deferred_a,
                        read_bit: bit_after,
                    };
                    let ti = intern(t, &mut states, &mut index, &mut queue)?;
                    rets.push(RetEdge { from: si, sym: sym_i, top: zi, to: ti });
                }
            }
        }
    }

    // Degeneralize with a counter over the acceptance sets.
    let sets: Vec<Vec<bool>> = states.iter().map(|s| b.accepting_sets(s)).collect();
    let k = sets.first().map_or(1, Vec::len);
    let n = states.len();
    let id = |s: usize, c: usize| s * k + c;
    let bump = |s: usize, c: usize| if sets[s][c] { (c + 1) % k } else { c };
    let mut out = Vpa {
        alphabet,
        states: (0..n * k).map(|i| format!("t{}_{}", i / k, i % k)).collect(),
        initial: id(0, 0),
        stack: std::iter::once("bot".to_string()).chain((1..=stack.len()).map(|i| format!("Y{i}"))).collect(),
        calls: Vec::new(),
        ints: Vec::new(),
        rets: Vec::new(),
        acceptance: Acceptance::Buchi((0..n * k).map(|i| i % k == 0 && sets[i / k][0]).collect()),
    };
    for c in 0..k {
        for e in &calls {
            out.calls.push(CallEdge { from: id(e.from, c), sym: e.sym, to: id(e.to, bump(e.from, c)), push: e.push });
        }
        for e in &ints {
            out.ints.push(IntEdge { from: id(e.from, c), sym: e.sym, to: id(e.to, bump(e.from, c)) });
        }
        for e in &rets {
            out.rets.push(RetEdge { from: id(e.from, c), sym: e.sym, top: e.top, to: id(e.to, bump(e.from, c)) });
        }
    }
    Ok(trim(out))
}

/// Drops states unreachable from the initial state, renumbering the rest.
pub fn trim(a: Vpa) -> Vpa {
    let n = a.states.len();
    let mut adj = vec![Vec::new(); n];
    for e in &a.calls {
        adj[e.from].push(e.to);
    }
    for e in &a.ints {
        adj[e.from].push(e.to);
    }
    for e in &a.rets {
        adj[e.from].push(e.to);
    }
    let mut seen = vec![false; n];
    let mut order = Vec::new();
    let mut stack = vec![a.initial];
    seen[a.initial] = true;
    while let Some(s) = stack.pop() {
        order.push(s);
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    order.sort_unstable();
    let mut map = vec![usize::MAX; n];
    for (i, &s) in order.iter().enumerate() {
        map[s] = i;
    }
    let acceptance = match &a.acceptance {
        Acceptance::Buchi(f) => Acceptance::Buchi(order.iter().map(|&s| f[s]).collect()),
        Acceptance::Parity(p) => Acceptance::Parity(order.iter().map(|&s| p[s]).collect()),
    };
    let mut out = Vpa {
        alphabet: a.alphabet,
        states: order.iter().map(|&s| a.states[s].clone()).collect(),
        initial: map[a.initial],
        stack: a.stack,
        calls: a.calls.into_iter().filter(|e| seen[e.from]).map(|e| CallEdge { from: map[e.from], to: map[e.to], ..e }).collect(),
        ints: a.ints.into_iter().filter(|e| seen[e.from]).map(|e| IntEdge { from: map[e.from], to: map[e.to], ..e }).collect(),
        rets: a.rets.into_iter().filter(|e| seen[e.from]).map(|e| RetEdge { from: map[e.from], to: map[e.to], ..e }).collect(),
        acceptance,
    };
    out.normalize();
    out
}
