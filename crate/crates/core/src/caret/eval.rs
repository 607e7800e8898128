//! Exact evaluation of CaRet on lassos.
//!
//! The truth value of a subformula along `u v^ω` is stored as its values on
//! the prefix plus, per period copy, a vector of values that becomes
//! periodic in the copy index. Future modalities are least fixpoints over
//! the finite cyclic part; caller modalities are computed copy by copy, the
//! only information crossing a copy boundary being the value at the
//! innermost pending call, so the sequence of copies must repeat.

use std::collections::{BTreeSet, HashMap};

use num_integer::Integer;

use super::nested::{nested_structure, NestedWordView, Pos};
use super::{Formula, Path};
use crate::error::{Error, Result};
use crate::lasso::LassoWord;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Ep {
    u: Vec<bool>,
    pre: Vec<Vec<bool>>,
    cyc: Vec<Vec<bool>>,
}

impl Ep {
    fn copy(&self, k: usize) -> &[bool] {
        if k < self.pre.len() {
            &self.pre[k]
        } else {
            &self.cyc[(k - self.pre.len()) % self.cyc.len()]
        }
    }

    fn at(&self, p: Pos) -> bool {
        match p {
            Pos::Prefix(i) => self.u[i],
            Pos::Period(k, j) => self.copy(k)[j],
        }
    }

    /// Shortest equivalent representation.
    fn normalize(mut self) -> Ep {
        let c = self.cyc.len();
        for d in 1..=c {
            if c % d == 0 && (0..c).all(|i| self.cyc[i] == self.cyc[i % d]) {
                self.cyc.truncate(d);
                break;
            }
        }
        while self.pre.last().is_some_and(|l| l == self.cyc.last().unwrap()) {
            self.pre.pop();
            let last = self.cyc.pop().unwrap();
            self.cyc.insert(0, last);
        }
        self
    }
}

/// Common `(pre, cycle)` lengths for a set of representations.
fn shape(eps: &[&Ep]) -> (usize, usize) {
    let p = eps.iter().map(|e| e.pre.len()).max().unwrap_or(0);
    let c = eps.iter().fold(1, |acc, e| acc.lcm(&e.cyc.len()));
    (p, c)
}

struct Evaluator<'a> {
    w: &'a LassoWord,
    view: NestedWordView,
    memo: HashMap<Formula, Ep>,
}

impl<'a> Evaluator<'a> {
    fn tabulate(&self, p: usize, c: usize, f: impl Fn(Pos) -> bool) -> Ep {
        let nv = self.view.period_len();
        let u = (0..self.view.prefix_len()).map(|i| f(Pos::Prefix(i))).collect();
        let row = |k: usize| (0..nv).map(|j| f(Pos::Period(k, j))).collect::<Vec<_>>();
        Ep { u, pre: (0..p).map(row).collect(), cyc: (p..p + c).map(row).collect() }.normalize()
    }

    fn eval(&mut self, f: &Formula) -> Ep {
        if let Some(e) = self.memo.get(f) {
            return e.clone();
        }
        let e = self.compute(f);
        self.memo.insert(f.clone(), e.clone());
        e
    }

    fn compute(&mut self, f: &Formula) -> Ep {
        let w = self.w;
        match f {
            Formula::True => self.tabulate(0, 1, |_| true),
            Formula::False => self.tabulate(0, 1, |_| false),
            Formula::Atom(a) => self.tabulate(0, 1, |p| sym(w, p).props.contains(a)),
            Formula::Class(c) => self.tabulate(0, 1, |p| sym(w, p).class == *c),
            Formula::Not(a) => {
                let a = self.eval(a);
                let (p, c) = shape(&[&a]);
                self.tabulate(p, c, |x| !a.at(x))
            }
            Formula::Or(a, b) | Formula::And(a, b) | Formula::Implies(a, b) => {
                let (a, b) = (self.eval(a), self.eval(b));
                let (p, c) = shape(&[&a, &b]);
                match f {
                    Formula::Or(..) => self.tabulate(p, c, |x| a.at(x) || b.at(x)),
                    Formula::And(..) => self.tabulate(p, c, |x| a.at(x) && b.at(x)),
                    _ => self.tabulate(p, c, |x| !a.at(x) || b.at(x)),
                }
            }
            Formula::Eventually(path, a) => self.eval(&Formula::until(*path, Formula::True, (**a).clone())),
            Formula::Always(..) => self.eval(&f.to_core()),
            Formula::Next(Path::Caller, a) => {
                let a = self.eval(a);
                self.caller_scan(&a, &a, |_, src| src == Some(true), false)
            }
            Formula::Until(Path::Caller, a, b) => {
                let (a, b) = (self.eval(a), self.eval(b));
                self.caller_scan(&a, &b, |(x, y), src| y || (x && src == Some(true)), true)
            }
            Formula::Next(path, a) => {
                let a = self.eval(a);
                let (p, c) = shape(&[&a]);
                let view = &self.view;
                self.tabulate(p, c, |x| succ(view, *path, x).is_some_and(|y| a.at(y)))
            }
            Formula::Until(path, a, b) => {
                let (a, b) = (self.eval(a), self.eval(b));
                self.forward_until(*path, &a, &b)
            }
        }
    }

    /// Least fixpoint of `res = b | (a & next(res))` along a future path.
    fn forward_until(&self, path: Path, a: &Ep, b: &Ep) -> Ep {
        let view = &self.view;
        let (p, c) = shape(&[a, b]);
        let nv = view.period_len();
        // Cyclic part: copy p+m is stored at cyc[m].
        let mut cyc = vec![vec![false; nv]; c];
        loop {
            let mut changed = false;
            for m in (0..c).rev() {
                for j in (0..nv).rev() {
                    let x = Pos::Period(p + m, j);
                    let nxt = succ(view, path, x).is_some_and(|y| match y {
                        Pos::Period(k, j2) => cyc[(k - p) % c][j2],
                        Pos::Prefix(_) => unreachable!(),
                    });
                    let v = b.at(x) || (a.at(x) && nxt);
                    if v && !cyc[m][j] {
                        cyc[m][j] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut pre = vec![vec![false; nv]; p];
        for k in (0..p).rev() {
            for j in (0..nv).rev() {
                let x = Pos::Period(k, j);
                let nxt = succ(view, path, x).is_some_and(|y| match y {
                    Pos::Period(k2, j2) if k2 < p => pre[k2][j2],
                    Pos::Period(k2, j2) => cyc[(k2 - p) % c][j2],
                    Pos::Prefix(_) => unreachable!(),
                });
                pre[k][j] = b.at(x) || (a.at(x) && nxt);
            }
        }
        let tail = Ep { u: Vec::new(), pre, cyc };
        let nu = view.prefix_len();
        let mut u = vec![false; nu];
        for i in (0..nu).rev() {
            let x = Pos::Prefix(i);
            let nxt = succ(view, path, x).is_some_and(|y| match y {
                Pos::Prefix(i2) => u[i2],
                other => tail.at(other),
            });
            u[i] = b.at(x) || (a.at(x) && nxt);
        }
        Ep { u, ..tail }.normalize()
    }

    /// Evaluates a caller modality position by position. `step` gets the
    /// operand values at the position and the source value at its caller
    /// (`None` without caller); the source is `a` itself, or the result when
    /// `from_result` is set.
    fn caller_scan(&self, a: &Ep, b: &Ep, step: impl Fn((bool, bool), Option<bool>) -> bool, from_result: bool) -> Ep {
        let view = &self.view;
        let (p, c) = shape(&[a, b]);
        let nv = view.period_len();
        let nu = view.prefix_len();
        let mut u = vec![false; nu];
        for i in 0..nu {
            let x = Pos::Prefix(i);
            let src = view.caller(x).map(|y| match y {
                Pos::Prefix(i2) if from_result => u[i2],
                other => a.at(other),
            });
            u[i] = step((a.at(x), b.at(x)), src);
        }
        let mut copies: Vec<Vec<bool>> = Vec::new();
        let mut seen: HashMap<(usize, Option<bool>), usize> = HashMap::new();
        for k in 0.. {
            let carry = view.period_carry(k).map(|y| match y {
                Pos::Prefix(i2) if from_result => u[i2],
                Pos::Period(k2, j2) if from_result => copies[k2][j2],
                other => a.at(other),
            });
            if k >= p {
                if let Some(&k1) = seen.get(&((k - p) % c, carry)) {
                    let cyc = copies.split_off(k1);
                    return Ep { u, pre: copies, cyc }.normalize();
                }
                seen.insert(((k - p) % c, carry), k);
            }
            let mut row = vec![false; nv];
            for j in 0..nv {
                let x = Pos::Period(k, j);
                let src = match view.v.caller[j] {
                    Some(j2) if from_result => Some(row[j2]),
                    Some(j2) => Some(a.at(Pos::Period(k, j2))),
                    None => carry,
                };
                row[j] = step((a.at(x), b.at(x)), src);
            }
            copies.push(row);
        }
        unreachable!()
    }
}

fn sym(w: &LassoWord, p: Pos) -> &crate::alphabet::Symbol {
    match p {
        Pos::Prefix(i) => &w.prefix[i],
        Pos::Period(_, j) => &w.period[j],
    }
}

fn succ(view: &NestedWordView, path: Path, x: Pos) -> Option<Pos> {
    match path {
        Path::Global => Some(view.global_succ(x)),
        Path::Abstract => view.abstract_succ(x),
        Path::Caller => view.caller(x),
    }
}

/// Decides `w ⊨ φ`. Atoms absent from a symbol are false there.
pub fn eval_caret_on_lasso(phi: &Formula, w: &LassoWord) -> Result<bool> {
    let view = nested_structure(w)?;
    let mut ev = Evaluator { w, view, memo: HashMap::new() };
    let e = ev.eval(phi);
    Ok(match e.u.first() {
        Some(&b) => b,
        None => e.copy(0)[0],
    })
}

/// Like [`eval_caret_on_lasso`], rejecting atoms outside `ap`.
pub fn eval_caret_checked(phi: &Formula, w: &LassoWord, ap: &BTreeSet<String>) -> Result<bool> {
    if let Some(a) = phi.atoms().difference(ap).next() {
        return Err(Error::UnknownAtom(a.clone()));
    }
    eval_caret_on_lasso(phi, w)
}

/// Truth values at the first `n` positions; used by property tests.
pub fn eval_positions(phi: &Formula, w: &LassoWord, n: usize) -> Result<Vec<bool>> {
    let view = nested_structure(w)?;
    let mut ev = Evaluator { w, view, memo: HashMap::new() };
    let e = ev.eval(phi);
    Ok((0..n).map(|i| e.at(ev.view.pos(i))).collect())
}
