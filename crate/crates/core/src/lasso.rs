//! Ultimately periodic words `u·v^ω`, stack heights, steps, footprints, and
//! acceptance of lassos by deterministic stair-parity and nondeterministic
//! Büchi VPA.
//!
//! Only pump-safe periods are supported: while reading `v` the running
//! height (calls +1, returns -1) never drops below its value at the start of
//! `v`, and the net change is nonnegative. Under this restriction a period
//! never touches the stack below its start, so its effect on an automaton is
//! a function (or relation) on states alone.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::alphabet::{Class, Symbol};
use crate::error::{Error, Result};
use crate::rel::Summarizer;
use crate::vpa::{DetMachine, NvpaIndex, Vpa, BOTTOM};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LassoWord {
    pub prefix: Vec<Symbol>,
    pub period: Vec<Symbol>,
}

impl LassoWord {
    /// Builds a lasso, rejecting empty or non-pump-safe periods.
    pub fn new(prefix: Vec<Symbol>, period: Vec<Symbol>) -> Result<LassoWord> {
        let w = LassoWord { prefix, period };
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<()> {
        if self.period.is_empty() {
            return Err(Error::LassoShape("empty period".into()));
        }
        if !is_pump_safe(&self.period) {
            return Err(Error::LassoShape("period dips below its starting stack height".into()));
        }
        Ok(())
    }

    /// Net height change of one period.
    pub fn period_delta(&self) -> i64 {
        self.period.iter().map(|s| s.class.delta()).sum()
    }

    pub fn symbol_at(&self, pos: usize) -> &Symbol {
        if pos < self.prefix.len() {
            &self.prefix[pos]
        } else {
            &self.period[(pos - self.prefix.len()) % self.period.len()]
        }
    }

    /// The first `n` letters.
    pub fn unroll(&self, n: usize) -> Vec<Symbol> {
        (0..n).map(|i| self.symbol_at(i).clone()).collect()
    }
}

pub fn is_pump_safe(period: &[Symbol]) -> bool {
    let mut h = 0i64;
    for s in period {
        h += s.class.delta();
        if h < 0 {
            return false;
        }
    }
    true
}

/// Heights before each letter and after the last one (`n + 1` entries).
/// A return read at height zero leaves the bottom symbol in place.
pub fn heights(classes: impl IntoIterator<Item = Class>, start: i64) -> Vec<i64> {
    let mut out = vec![start];
    let mut h = start;
    for c in classes {
        h = match c {
            Class::Call => h + 1,
            Class::Int => h,
            Class::Ret => (h - 1).max(0),
        };
        out.push(h);
    }
    out
}

/// Positions never undercut later in `h[..]`: `flags[i]` iff `h[i] <= h[j]` for all `j > i`.
fn not_undercut(h: &[i64], len: usize) -> Vec<bool> {
    let mut flags = vec![false; len];
    let mut min_after = i64::MAX;
    for i in (0..h.len()).rev() {
        if i < len {
            flags[i] = h[i] <= min_after;
        }
        min_after = min_after.min(h[i]);
    }
    flags
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepFlags {
    pub flags: Vec<bool>,
    /// Set when the flags only reflect the given finite prefix.
    pub provisional: bool,
}

/// Steps of a finite word: positions whose height is never undercut later
/// within the word (including the height after its last letter). These are
/// provisional since a continuation could still undercut them.
pub fn steps_of_word(word: &[Symbol]) -> StepFlags {
    let h = heights(word.iter().map(|s| s.class), 0);
    StepFlags { flags: not_undercut(&h, word.len()), provisional: true }
}

/// Exact step positions of a lasso: flags for the prefix and for every copy of the period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LassoSteps {
    pub prefix: Vec<bool>,
    pub period: Vec<bool>,
}

pub fn lasso_steps(w: &LassoWord) -> Result<LassoSteps> {
    w.check()?;
    // Later periods never go below the height at which the first one starts.
    let hu = heights(w.prefix.iter().map(|s| s.class), 0);
    let prefix = not_undercut(&hu, w.prefix.len());
    let hv = heights(w.period.iter().map(|s| s.class), 0);
    let period = not_undercut(&hv, w.period.len());
    Ok(LassoSteps { prefix, period })
}

/// Footprint `prefix · cycle^ω`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Footprint {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl Footprint {
    /// The first `n` entries of the infinite footprint.
    pub fn unroll(&self, n: usize) -> Vec<usize> {
        (0..n)
            .map(|i| {
                if i < self.prefix.len() {
                    self.prefix[i]
                } else {
                    self.cycle[(i - self.prefix.len()) % self.cycle.len()]
                }
            })
            .collect()
    }
}

fn symbol_indices(alphabet: &crate::alphabet::Alphabet, word: &[Symbol]) -> Result<Vec<usize>> {
    word.iter().map(|s| alphabet.lookup(s)).collect()
}

/// Runs `m` over one copy of the period from `s` with a private stack.
fn run_period<M: DetMachine>(m: &mut M, s: usize, v: &[usize], steps: &[bool], out: &mut Vec<usize>) -> Result<usize> {
    let mut stack: Vec<usize> = Vec::new();
    let mut s = s;
    for (j, &a) in v.iter().enumerate() {
        if steps[j] {
            out.push(s);
        }
        s = match m.alphabet().class_of(a) {
            Class::Call => {
                let (t, z) = m.call(s, a)?;
                stack.push(z);
                t
            }
            Class::Int => m.int(s, a)?,
            Class::Ret => {
                let z = stack.pop().ok_or_else(|| Error::LassoShape("period pops below its start".into()))?;
                m.ret(s, a, z)?
            }
        };
    }
    Ok(s)
}

/// Cap on period applications when searching for the footprint cycle.
const CYCLE_CAP: usize = 1 << 20;

/// Footprint of the unique run of a deterministic VPA on a pump-safe lasso.
pub fn dvpa_footprint_on_lasso<M: DetMachine>(m: &mut M, w: &LassoWord) -> Result<Footprint> {
    let steps = lasso_steps(w)?;
    let u = symbol_indices(m.alphabet(), &w.prefix)?;
    let v = symbol_indices(m.alphabet(), &w.period)?;
    let mut prefix = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut s = m.start()?;
    for (i, &a) in u.iter().enumerate() {
        if steps.prefix[i] {
            prefix.push(s);
        }
        s = match m.alphabet().class_of(a) {
            Class::Call => {
                let (t, z) = m.call(s, a)?;
                stack.push(z);
                t
            }
            Class::Int => m.int(s, a)?,
            Class::Ret => {
                let top = stack.pop().unwrap_or(BOTTOM);
                m.ret(s, a, top)?
            }
        };
    }
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    loop {
        if let Some(&start) = seen.get(&s) {
            for c in &chunks[..start] {
                prefix.extend_from_slice(c);
            }
            let cycle: Vec<usize> = chunks[start..].concat();
            return Ok(Footprint { prefix, cycle });
        }
        if chunks.len() >= CYCLE_CAP {
            return Err(Error::Internal("footprint cycle not found within the period cap".into()));
        }
        seen.insert(s, chunks.len());
        let mut chunk = Vec::new();
        s = run_period(m, s, &v, &steps.period, &mut chunk)?;
        chunks.push(chunk);
    }
}

/// Stair-parity acceptance: the least priority occurring infinitely often in
/// the footprint is even.
pub fn stair_parity_accepts_lasso<M: DetMachine>(m: &mut M, w: &LassoWord) -> Result<bool> {
    let fp = dvpa_footprint_on_lasso(m, w)?;
    let mut best = u32::MAX;
    for &s in &fp.cycle {
        best = best.min(m.priority(s)?);
    }
    Ok(best % 2 == 0)
}

/// Büchi acceptance of a lasso by a nondeterministic VPA, decided on the
/// summary graph of one period.
pub fn nvpa_accepts_lasso(a: &Vpa, w: &LassoWord) -> Result<bool> {
    let idx = NvpaIndex::new(a)?;
    nvpa_index_accepts_lasso(&idx, w)
}

pub fn nvpa_index_accepts_lasso(idx: &NvpaIndex, w: &LassoWord) -> Result<bool> {
    w.check()?;
    let u = symbol_indices(&idx.alphabet, &w.prefix)?;
    let v = symbol_indices(&idx.alphabet, &w.period)?;
    let n = idx.num_states;
    let mut init = FixedBitSet::with_capacity(n);
    init.insert(idx.initial);
    let mut su = Summarizer::new(idx, &init);
    for &a in &u {
        su.feed(a);
    }
    let after_u = su.finish().targets();
    let mut all = FixedBitSet::with_capacity(n);
    all.insert_range(..);
    let mut sv = Summarizer::new(idx, &all);
    for &a in &v {
        sv.feed(a);
    }
    let per = sv.finish();
    let mut g: DiGraph<(), bool> = DiGraph::new();
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for (s, t, f) in per.triples() {
        g.add_edge(nodes[s], nodes[t], f);
    }
    // States reachable after the prefix through period summaries.
    let mut reach = after_u.clone();
    let mut queue: Vec<usize> = after_u.ones().collect();
    while let Some(s) = queue.pop() {
        for t in per.row(s).ones() {
            if !reach.contains(t) {
                reach.insert(t);
                queue.push(t);
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    for (ci, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for v in scc {
            comp[v.index()] = ci;
        }
    }
    let accepted = per.triples().any(|(s, t, f)| f && reach.contains(s) && comp[s] == comp[t]);
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Class::*;

    fn word(classes: &[Class]) -> Vec<Symbol> {
        classes.iter().map(|&c| Symbol::plain(c)).collect()
    }

    #[test]
    fn fig3_footprints() {
        // τ r c τ τ c r c c r r c c c r r r
        let w = word(&[Int, Ret, Call, Int, Int, Call, Ret, Call, Call, Ret, Ret, Call, Call, Call, Ret, Ret, Ret]);
        let st = steps_of_word(&w);
        let pos: Vec<usize> = (0..w.len()).filter(|&i| st.flags[i]).collect();
        assert_eq!(pos, vec![0, 1, 2, 3, 4, 5, 7, 11]);
        let h = heights(w.iter().map(|s| s.class), 0);
        assert_eq!(h[17], 1);
    }

    #[test]
    fn all_internal_word_is_all_steps() {
        let st = steps_of_word(&word(&[Int; 5]));
        assert!(st.flags.iter().all(|&f| f));
    }

    #[test]
    fn ascending_calls_are_all_steps() {
        let w = LassoWord::new(vec![], word(&[Call])).unwrap();
        assert_eq!(lasso_steps(&w).unwrap().period, vec![true]);
    }

    #[test]
    fn dipping_period_is_rejected() {
        assert!(LassoWord::new(vec![], word(&[Ret, Call])).is_err());
        assert!(LassoWord::new(vec![], word(&[Call, Ret, Ret])).is_err());
        assert!(LassoWord::new(vec![], vec![]).is_err());
    }
}
