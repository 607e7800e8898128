//! Determinization of Büchi NVPAs into stair-parity DVPAs.
//!
//! The deterministic state keeps a Safra tree for the runs on the word read
//! so far where every still-open call is assumed never to return, plus a
//! flagged summary relation for the segment since the innermost open call.
//! A call pushes the current tree and summary. When the call returns, the
//! saved tree is advanced by one "block" letter that summarises the whole
//! call-return segment, so the tree only ever sees step positions.
//!
//! Trees use age-ordered names `1..=k` that are compacted after each step;
//! the priority is `min(2e, 2f - 1)` for the least green name `e` and least
//! removed name `f`.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

use crate::alphabet::{Alphabet, Class};
use crate::error::{Error, Result};
use crate::rel::{block_letter, bottom_ret_letter, call_targets, int_letter, pending_call_letter, FlagRel};
use crate::vpa::{Acceptance, CallEdge, DetMachine, IntEdge, NvpaIndex, RetEdge, Vpa, BOTTOM};

pub const DEFAULT_STATE_CAP: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct SNode {
    name: u32,
    label: FixedBitSet,
    children: Vec<SNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct DState {
    tree: Option<SNode>,
    prio: u32,
    inner: Option<FlagRel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct StackItem {
    tree: Option<SNode>,
    outer: Option<FlagRel>,
    call: usize,
}

fn root_set(t: &Option<SNode>, n: usize) -> FixedBitSet {
    t.as_ref().map_or_else(|| FixedBitSet::with_capacity(n), |r| r.label.clone())
}

fn advance(node: &mut SNode, rel: &FlagRel, temp: &mut u32) {
    let n = rel.size();
    let mut label = FixedBitSet::with_capacity(n);
    let mut acc = FixedBitSet::with_capacity(n);
    for s in node.label.ones() {
        label.union_with(rel.row(s));
        acc.union_with(rel.flagged_row(s));
    }
    node.label = label;
    for c in &mut node.children {
        advance(c, rel, temp);
    }
    if !acc.is_clear() {
        node.children.push(SNode { name: *temp, label: acc, children: Vec::new() });
        *temp += 1;
    }
}

fn horizontal(node: &mut SNode, forbidden: &FixedBitSet) {
    node.label.difference_with(forbidden);
    let mut claimed = forbidden.clone();
    for c in &mut node.children {
        horizontal(c, &claimed);
        claimed.union_with(&c.label);
    }
}

fn collect_names(node: &SNode, out: &mut Vec<u32>) {
    out.push(node.name);
    for c in &node.children {
        collect_names(c, out);
    }
}

fn prune_empty(node: &mut SNode, removed: &mut Vec<u32>) {
    node.children.retain(|c| {
        if c.label.is_clear() {
            collect_names(c, removed);
            false
        } else {
            true
        }
    });
    for c in &mut node.children {
        prune_empty(c, removed);
    }
}

fn vertical(node: &mut SNode, removed: &mut Vec<u32>, green: &mut Vec<u32>) {
    if node.children.is_empty() {
        return;
    }
    let mut union = FixedBitSet::with_capacity(node.label.len());
    for c in &node.children {
        union.union_with(&c.label);
    }
    if union == node.label {
        for c in &node.children {
            collect_names(c, removed);
        }
        node.children.clear();
        green.push(node.name);
    } else {
        for c in &mut node.children {
            vertical(c, removed, green);
        }
    }
}

fn rename(node: &mut SNode, map: &HashMap<u32, u32>) {
    node.name = map[&node.name];
    for c in &mut node.children {
        rename(c, map);
    }
}

/// One Safra step; `n` bounds the number of live names.
fn safra(tree: &Option<SNode>, rel: &FlagRel, n: u32) -> (Option<SNode>, u32) {
    let Some(root) = tree else {
        return (None, 1);
    };
    let mut root = root.clone();
    let mut temp = n + 1;
    advance(&mut root, rel, &mut temp);
    horizontal(&mut root, &FixedBitSet::with_capacity(rel.size()));
    let mut removed = Vec::new();
    let mut green = Vec::new();
    if root.label.is_clear() {
        return (None, 1);
    }
    prune_empty(&mut root, &mut removed);
    vertical(&mut root, &mut removed, &mut green);
    let f = removed.into_iter().filter(|&x| x <= n).min().unwrap_or(n + 1);
    let e = green.into_iter().filter(|&x| x <= n).min().unwrap_or(n + 1);
    let prio = (2 * e).min(2 * f - 1);
    let mut names = Vec::new();
    collect_names(&root, &mut names);
    names.sort_unstable();
    let map: HashMap<u32, u32> = names.iter().enumerate().map(|(i, &x)| (x, i as u32 + 1)).collect();
    rename(&mut root, &map);
    (Some(root), prio)
}

/// Deterministic VPA computed on demand from a Büchi NVPA.
pub struct LazyDet {
    idx: NvpaIndex,
    n: usize,
    cap: usize,
    states: Vec<DState>,
    index: HashMap<DState, usize>,
    stack: Vec<StackItem>,
    stack_index: HashMap<StackItem, usize>,
    calls: HashMap<(usize, usize), (usize, usize)>,
    ints: HashMap<(usize, usize), usize>,
    rets: HashMap<(usize, usize, usize), usize>,
}

impl LazyDet {
    pub fn new(a: &Vpa) -> Result<LazyDet> {
        Self::with_cap(a, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(a: &Vpa, cap: usize) -> Result<LazyDet> {
        let idx = NvpaIndex::new(a)?;
        let n = idx.num_states;
        let mut label = FixedBitSet::with_capacity(n);
        label.insert(idx.initial);
        let init = DState { tree: Some(SNode { name: 1, label, children: Vec::new() }), prio: 2 * n as u32 + 1, inner: None };
        let mut d = LazyDet {
            idx,
            n,
            cap,
            states: Vec::new(),
            index: HashMap::new(),
            stack: Vec::new(),
            stack_index: HashMap::new(),
            calls: HashMap::new(),
            ints: HashMap::new(),
            rets: HashMap::new(),
        };
        d.intern(init)?;
        Ok(d)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Number of stack symbols created so far, bottom included.
    pub fn num_stack(&self) -> usize {
        self.stack.len() + 1
    }

    fn intern(&mut self, s: DState) -> Result<usize> {
        if let Some(&i) = self.index.get(&s) {
            return Ok(i);
        }
        if self.states.len() >= self.cap {
            return Err(Error::Resource(format!("determinization exceeded {} states", self.cap)));
        }
        self.states.push(s.clone());
        self.index.insert(s, self.states.len() - 1);
        Ok(self.states.len() - 1)
    }

    fn push_item(&mut self, y: StackItem) -> usize {
        if let Some(&i) = self.stack_index.get(&y) {
            return i;
        }
        self.stack.push(y.clone());
        self.stack_index.insert(y, self.stack.len());
        self.stack.len()
    }

    fn n32(&self) -> u32 {
        self.n as u32
    }
}

impl DetMachine for LazyDet {
    fn alphabet(&self) -> &Alphabet {
        &self.idx.alphabet
    }

    fn start(&mut self) -> Result<usize> {
        Ok(0)
    }

    fn call(&mut self, s: usize, sym: usize) -> Result<(usize, usize)> {
        if let Some(&r) = self.calls.get(&(s, sym)) {
            return Ok(r);
        }
        let st = self.states[s].clone();
        let root = root_set(&st.tree, self.n);
        let mut sources = root.clone();
        if let Some(r) = &st.inner {
            sources.union_with(&r.targets());
        }
        let (tree, prio) = safra(&st.tree, &pending_call_letter(&self.idx, sym, &root), self.n32());
        let inner = Some(FlagRel::identity(self.n, &call_targets(&self.idx, sym, &sources)));
        let y = self.push_item(StackItem { tree: st.tree, outer: st.inner, call: sym });
        let t = self.intern(DState { tree, prio, inner })?;
        self.calls.insert((s, sym), (t, y));
        Ok((t, y))
    }

    fn int(&mut self, s: usize, sym: usize) -> Result<usize> {
        if let Some(&r) = self.ints.get(&(s, sym)) {
            return Ok(r);
        }
        let st = self.states[s].clone();
        let root = root_set(&st.tree, self.n);
        let (tree, prio) = safra(&st.tree, &int_letter(&self.idx, sym, &root), self.n32());
        let idx = &self.idx;
        let inner = st.inner.map(|r| r.then_step(&idx.accepting, |x| idx.int_succ(x, sym).to_vec()));
        let t = self.intern(DState { tree, prio, inner })?;
        self.ints.insert((s, sym), t);
        Ok(t)
    }

    fn ret(&mut self, s: usize, sym: usize, top: usize) -> Result<usize> {
        if let Some(&r) = self.rets.get(&(s, sym, top)) {
            return Ok(r);
        }
        let st = self.states[s].clone();
        let next = if top == BOTTOM {
            let root = root_set(&st.tree, self.n);
            let (tree, prio) = safra(&st.tree, &bottom_ret_letter(&self.idx, sym, &root), self.n32());
            DState { tree, prio, inner: st.inner }
        } else {
            let y = self.stack[top - 1].clone();
            let mut sources = root_set(&y.tree, self.n);
            if let Some(r) = &y.outer {
                sources.union_with(&r.targets());
            }
            let inner = st.inner.unwrap_or_else(|| FlagRel::empty(self.n));
            let block = block_letter(&self.idx, y.call, &inner, sym, &sources);
            let (tree, prio) = safra(&y.tree, &block, self.n32());
            DState { tree, prio, inner: y.outer.map(|r| r.compose(&block)) }
        };
        let t = self.intern(next)?;
        self.rets.insert((s, sym, top), t);
        Ok(t)
    }

    fn priority(&mut self, s: usize) -> Result<u32> {
        Ok(self.states[s].prio)
    }
}

/// Builds the reachable part of the deterministic VPA explicitly.
pub fn determinize(a: &Vpa) -> Result<Vpa> {
    determinize_capped(a, DEFAULT_STATE_CAP)
}

pub fn determinize_capped(a: &Vpa, cap: usize) -> Result<Vpa> {
    let mut d = LazyDet::with_cap(a, cap)?;
    let alphabet = a.alphabet.clone();
    let calls: Vec<usize> = alphabet.of_class(Class::Call).collect();
    let ints: Vec<usize> = alphabet.of_class(Class::Int).collect();
    let rets: Vec<usize> = alphabet.of_class(Class::Ret).collect();

    // Reachable (state, top-of-stack) pairs; `below[y]` holds the symbols
    // that can sit under `y`, `ret_to[y]` the states reached by popping `y`.
    let mut seen: std::collections::HashSet<(usize, usize)> = Default::default();
    let mut work = vec![(0usize, BOTTOM)];
    seen.insert((0, BOTTOM));
    let mut below: Vec<Vec<usize>> = vec![Vec::new()];
    let mut ret_to: Vec<Vec<usize>> = vec![Vec::new()];
    let visit = |p: (usize, usize), seen: &mut std::collections::HashSet<(usize, usize)>, work: &mut Vec<(usize, usize)>| {
        if seen.insert(p) {
            work.push(p);
        }
    };
    while let Some((s, top)) = work.pop() {
        for &c in &ints {
            let t = d.int(s, c)?;
            visit((t, top), &mut seen, &mut work);
        }
        for &c in &calls {
            let (t, y) = d.call(s, c)?;
            while below.len() <= y {
                below.push(Vec::new());
                ret_to.push(Vec::new());
            }
            if !below[y].contains(&top) {
                below[y].push(top);
                for &r in &ret_to[y].clone() {
                    visit((r, top), &mut seen, &mut work);
                }
            }
            visit((t, y), &mut seen, &mut work);
        }
        for &c in &rets {
            let t = d.ret(s, c, top)?;
            if top == BOTTOM {
                visit((t, BOTTOM), &mut seen, &mut work);
            } else if !ret_to[top].contains(&t) {
                ret_to[top].push(t);
                for &z in &below[top].clone() {
                    visit((t, z), &mut seen, &mut work);
                }
            }
        }
    }

    let n = d.num_states();
    let nstack = d.num_stack();
    let mut out = Vpa {
        alphabet,
        states: (0..n).map(|i| format!("d{i}")).collect(),
        initial: 0,
        stack: std::iter::once("bot".to_string()).chain((1..nstack).map(|i| format!("Y{i}"))).collect(),
        calls: Vec::new(),
        ints: Vec::new(),
        rets: Vec::new(),
        acceptance: Acceptance::Parity(compress_priorities(&d.states.iter().map(|s| s.prio).collect::<Vec<_>>())),
    };
    for s in 0..n {
        for &c in &calls {
            let (to, push) = d.calls[&(s, c)];
            out.calls.push(CallEdge { from: s, sym: c, to, push });
        }
        for &c in &ints {
            out.ints.push(IntEdge { from: s, sym: c, to: d.ints[&(s, c)] });
        }
        for &c in &rets {
            for top in 0..nstack {
                let to = d.rets.get(&(s, c, top)).copied().unwrap_or(s);
                out.rets.push(RetEdge { from: s, sym: c, top, to });
            }
        }
    }
    out.normalize();
    Ok(out)
}

/// Maps priorities onto a dense range starting at 0 or 1, keeping order and
/// parity.
pub fn compress_priorities(p: &[u32]) -> Vec<u32> {
    let mut distinct: Vec<u32> = p.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut map = HashMap::new();
    let mut cur: Option<u32> = None;
    for &x in &distinct {
        let v = match cur {
            None => x % 2,
            Some(c) if c % 2 == x % 2 => c,
            Some(c) => c + 1,
        };
        map.insert(x, v);
        cur = Some(v);
    }
    p.iter().map(|x| map[x]).collect()
}
