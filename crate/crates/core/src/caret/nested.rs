//! Matching returns, abstract successors and callers of a pump-safe lasso.
//!
//! Every call of the prefix is matched inside the prefix or pending forever,
//! and every return of a period copy matches a call of the same copy. So the
//! structure of the infinite word is fixed by the prefix and a single period.

use crate::alphabet::Class;
use crate::error::Result;
use crate::lasso::LassoWord;

/// A position of `u v^ω`: either in the prefix or at phase `j` of copy `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pos {
    Prefix(usize),
    Period(usize, usize),
}

/// Local nesting of one finite segment read from an empty stack.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct Segment {
    pub classes: Vec<Class>,
    /// Matching partner of a call or return within the segment.
    pub partner: Vec<Option<usize>>,
    /// Innermost pending call before reading the position.
    pub caller: Vec<Option<usize>>,
    /// Innermost call still pending after the segment.
    pub pending_end: Option<usize>,
}

impl Segment {
    pub fn new(classes: Vec<Class>) -> Segment {
        let n = classes.len();
        let mut partner = vec![None; n];
        let mut caller = vec![None; n];
        let mut stack: Vec<usize> = Vec::new();
        for (i, c) in classes.iter().enumerate() {
            caller[i] = stack.last().copied();
            match c {
                Class::Call => stack.push(i),
                Class::Int => {}
                Class::Ret => {
                    if let Some(j) = stack.pop() {
                        partner[i] = Some(j);
                        partner[j] = Some(i);
                    }
                }
            }
        }
        Segment { pending_end: stack.last().copied(), classes, partner, caller }
    }
}

/// Finite description of the nesting of a lasso.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestedWordView {
    pub(crate) u: Segment,
    pub(crate) v: Segment,
}

pub fn nested_structure(w: &LassoWord) -> Result<NestedWordView> {
    w.check()?;
    Ok(NestedWordView {
        u: Segment::new(w.prefix.iter().map(|s| s.class).collect()),
        v: Segment::new(w.period.iter().map(|s| s.class).collect()),
    })
}

impl NestedWordView {
    pub fn prefix_len(&self) -> usize {
        self.u.classes.len()
    }

    pub fn period_len(&self) -> usize {
        self.v.classes.len()
    }

    pub fn pos(&self, i: usize) -> Pos {
        let n = self.prefix_len();
        if i < n {
            Pos::Prefix(i)
        } else {
            Pos::Period((i - n) / self.period_len(), (i - n) % self.period_len())
        }
    }

    pub fn index(&self, p: Pos) -> usize {
        match p {
            Pos::Prefix(i) => i,
            Pos::Period(k, j) => self.prefix_len() + k * self.period_len() + j,
        }
    }

    pub fn class(&self, p: Pos) -> Class {
        match p {
            Pos::Prefix(i) => self.u.classes[i],
            Pos::Period(_, j) => self.v.classes[j],
        }
    }

    pub fn global_succ(&self, p: Pos) -> Pos {
        match p {
            Pos::Prefix(i) if i + 1 < self.prefix_len() => Pos::Prefix(i + 1),
            Pos::Prefix(_) => Pos::Period(0, 0),
            Pos::Period(k, j) if j + 1 < self.period_len() => Pos::Period(k, j + 1),
            Pos::Period(k, _) => Pos::Period(k + 1, 0),
        }
    }

    /// Matching return of a call, if any.
    pub fn matching_return(&self, p: Pos) -> Option<Pos> {
        if self.class(p) != Class::Call {
            return None;
        }
        match p {
            Pos::Prefix(i) => self.u.partner[i].map(Pos::Prefix),
            Pos::Period(k, j) => self.v.partner[j].map(|m| Pos::Period(k, m)),
        }
    }

    pub fn abstract_succ(&self, p: Pos) -> Option<Pos> {
        if self.class(p) == Class::Call {
            return self.matching_return(p);
        }
        let n = self.global_succ(p);
        (self.class(n) != Class::Ret).then_some(n)
    }

    /// Innermost call pending when position `p` is read. For a matched
    /// return this is its own call.
    pub fn caller(&self, p: Pos) -> Option<Pos> {
        match p {
            Pos::Prefix(i) => self.u.caller[i].map(Pos::Prefix),
            Pos::Period(k, j) => self.v.caller[j].map(|c| Pos::Period(k, c)).or_else(|| self.period_carry(k)),
        }
    }

    /// Innermost call left pending before copy `k` starts.
    pub fn period_carry(&self, k: usize) -> Option<Pos> {
        match self.v.pending_end {
            Some(e) if k > 0 => Some(Pos::Period(k - 1, e)),
            _ => self.u.pending_end.map(Pos::Prefix),
        }
    }

    /// Absolute-index forms of the three successor functions.
    pub fn abstract_succ_at(&self, i: usize) -> Option<usize> {
        self.abstract_succ(self.pos(i)).map(|p| self.index(p))
    }

    pub fn caller_at(&self, i: usize) -> Option<usize> {
        self.caller(self.pos(i)).map(|p| self.index(p))
    }

    pub fn matching_return_at(&self, i: usize) -> Option<usize> {
        self.matching_return(self.pos(i)).map(|p| self.index(p))
    }
}
