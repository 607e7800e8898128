//! Flagged state relations: `(s, t, f)` records that some run fragment leads
//! from `s` to `t`, with `f` set when it can visit an accepting state. These
//! summarise well-matched word segments of a nondeterministic VPA.

use fixedbitset::FixedBitSet;

use crate::vpa::{NvpaIndex, BOTTOM};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FlagRel {
    any: Vec<FixedBitSet>,
    hit: Vec<FixedBitSet>,
}

impl FlagRel {
    pub fn empty(n: usize) -> FlagRel {
        FlagRel { any: vec![FixedBitSet::with_capacity(n); n], hit: vec![FixedBitSet::with_capacity(n); n] }
    }

    /// Identity (unflagged) restricted to `sources`.
    pub fn identity(n: usize, sources: &FixedBitSet) -> FlagRel {
        let mut r = FlagRel::empty(n);
        for s in sources.ones() {
            r.any[s].insert(s);
        }
        r
    }

    pub fn size(&self) -> usize {
        self.any.len()
    }

    pub fn insert(&mut self, s: usize, t: usize, flag: bool) {
        self.any[s].insert(t);
        if flag {
            self.hit[s].insert(t);
        }
    }

    pub fn contains(&self, s: usize, t: usize) -> Option<bool> {
        self.any[s].contains(t).then(|| self.hit[s].contains(t))
    }

    pub fn row(&self, s: usize) -> &FixedBitSet {
        &self.any[s]
    }

    pub fn flagged_row(&self, s: usize) -> &FixedBitSet {
        &self.hit[s]
    }

    pub fn is_empty(&self) -> bool {
        self.any.iter().all(|r| r.is_clear())
    }

    /// Union of all rows.
    pub fn targets(&self) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.size());
        for r in &self.any {
            out.union_with(r);
        }
        out
    }

    pub fn sources(&self) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.size());
        for (s, r) in self.any.iter().enumerate() {
            if !r.is_clear() {
                out.insert(s);
            }
        }
        out
    }

    pub fn compose(&self, other: &FlagRel) -> FlagRel {
        let n = self.size();
        let mut out = FlagRel::empty(n);
        for s in 0..n {
            for x in self.any[s].ones() {
                out.any[s].union_with(&other.any[x]);
                if self.hit[s].contains(x) {
                    out.hit[s].union_with(&other.any[x]);
                } else {
                    out.hit[s].union_with(&other.hit[x]);
                }
            }
        }
        out
    }

    /// Appends one step given by `succ`; the flag records whether the state
    /// left behind is accepting.
    pub fn then_step(&self, accepting: &[bool], mut succ: impl FnMut(usize) -> Vec<usize>) -> FlagRel {
        let n = self.size();
        let mut out = FlagRel::empty(n);
        let targets = self.targets();
        let mut cache: Vec<Option<Vec<usize>>> = vec![None; n];
        for x in targets.ones() {
            cache[x] = Some(succ(x));
        }
        for s in 0..n {
            for x in self.any[s].ones() {
                let flag = self.hit[s].contains(x) || accepting[x];
                for &y in cache[x].as_ref().unwrap() {
                    out.insert(s, y, flag);
                }
            }
        }
        out
    }

    /// Iterates `(s, t, flag)` triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        (0..self.size()).flat_map(move |s| self.any[s].ones().map(move |t| (s, t, self.hit[s].contains(t))))
    }
}

/// One-letter relations of a nondeterministic VPA at the level of steps.
pub fn int_letter(a: &NvpaIndex, sym: usize, sources: &FixedBitSet) -> FlagRel {
    let mut r = FlagRel::empty(a.num_states);
    for p in sources.ones() {
        for &q in a.int_succ(p, sym) {
            r.insert(p, q, a.accepting[p]);
        }
    }
    r
}

/// A call that is never matched: the pushed symbol is irrelevant.
pub fn pending_call_letter(a: &NvpaIndex, sym: usize, sources: &FixedBitSet) -> FlagRel {
    let mut r = FlagRel::empty(a.num_states);
    for p in sources.ones() {
        for &(q, _) in a.call_succ(p, sym) {
            r.insert(p, q, a.accepting[p]);
        }
    }
    r
}

pub fn bottom_ret_letter(a: &NvpaIndex, sym: usize, sources: &FixedBitSet) -> FlagRel {
    let mut r = FlagRel::empty(a.num_states);
    for p in sources.ones() {
        for &q in a.ret_succ(p, sym, BOTTOM) {
            r.insert(p, q, a.accepting[p]);
        }
    }
    r
}

/// Summary of `call · w · ret` for a well-matched `w` summarised by `inner`
/// (whose sources are the states right after the call).
pub fn block_letter(a: &NvpaIndex, call: usize, inner: &FlagRel, ret: usize, sources: &FixedBitSet) -> FlagRel {
    let mut r = FlagRel::empty(a.num_states);
    for p in sources.ones() {
        for &(q, z) in a.call_succ(p, call) {
            for q1 in inner.row(q).ones() {
                let flag = a.accepting[p] || inner.flagged_row(q).contains(q1) || a.accepting[q1];
                for &q2 in a.ret_succ(q1, ret, z) {
                    r.insert(p, q2, flag);
                }
            }
        }
    }
    r
}

/// States reachable right after a call on `sym` from any of `sources`.
pub fn call_targets(a: &NvpaIndex, sym: usize, sources: &FixedBitSet) -> FixedBitSet {
    let mut out = FixedBitSet::with_capacity(a.num_states);
    for p in sources.ones() {
        for &(q, _) in a.call_succ(p, sym) {
            out.insert(q);
        }
    }
    out
}

/// Summarises a finite word read with an initially untouched stack. Calls
/// still open at the end are treated as never returning.
pub struct Summarizer<'a> {
    a: &'a NvpaIndex,
    frames: Vec<(FlagRel, usize)>,
    cur: FlagRel,
}

impl<'a> Summarizer<'a> {
    pub fn new(a: &'a NvpaIndex, sources: &FixedBitSet) -> Self {
        Summarizer { a, frames: Vec::new(), cur: FlagRel::identity(a.num_states, sources) }
    }

    pub fn feed(&mut self, sym: usize) {
        let a = self.a;
        match a.alphabet.class_of(sym) {
            crate::alphabet::Class::Int => {
                self.cur = self.cur.then_step(&a.accepting, |x| a.int_succ(x, sym).to_vec());
            }
            crate::alphabet::Class::Call => {
                let post = call_targets(a, sym, &self.cur.targets());
                let inner = FlagRel::identity(a.num_states, &post);
                let outer = std::mem::replace(&mut self.cur, inner);
                self.frames.push((outer, sym));
            }
            crate::alphabet::Class::Ret => match self.frames.pop() {
                None => {
                    self.cur = self.cur.then_step(&a.accepting, |x| a.ret_succ(x, sym, BOTTOM).to_vec());
                }
                Some((outer, call)) => {
                    let block = block_letter(a, call, &self.cur, sym, &outer.targets());
                    self.cur = outer.compose(&block);
                }
            },
        }
    }

    pub fn finish(mut self) -> FlagRel {
        while let Some((outer, call)) = self.frames.pop() {
            let pend = pending_call_letter(self.a, call, &outer.targets());
            self.cur = outer.compose(&pend).compose(&self.cur);
        }
        self.cur
    }
}
