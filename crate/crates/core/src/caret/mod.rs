//! CaRet formulas: syntax tree, parser, nested-word structure of lassos, and
//! a direct semantic evaluator used as a language-level oracle.

mod eval;
mod nested;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use crate::alphabet::Class;

pub use eval::{eval_caret_checked, eval_caret_on_lasso, eval_positions};
pub use nested::{nested_structure, NestedWordView};
pub use parser::parse_caret;

/// Which successor a next or until modality follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Path {
    Global,
    Abstract,
    Caller,
}

impl Path {
    pub const ALL: [Path; 3] = [Path::Global, Path::Abstract, Path::Caller];

    fn suffix(self) -> char {
        match self {
            Path::Global => 'g',
            Path::Abstract => 'a',
            Path::Caller => 'c',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(String),
    /// Holds when the current symbol has this class.
    Class(Class),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Path, Box<Formula>),
    Until(Path, Box<Formula>, Box<Formula>),
    Eventually(Path, Box<Formula>),
    Always(Path, Box<Formula>),
}

use Formula::*;

impl Formula {
    pub fn atom(p: &str) -> Formula {
        Atom(p.to_string())
    }

    pub fn not(a: Formula) -> Formula {
        Not(Box::new(a))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Implies(Box::new(a), Box::new(b))
    }

    pub fn next(p: Path, a: Formula) -> Formula {
        Next(p, Box::new(a))
    }

    pub fn until(p: Path, a: Formula, b: Formula) -> Formula {
        Until(p, Box::new(a), Box::new(b))
    }

    pub fn eventually(p: Path, a: Formula) -> Formula {
        Eventually(p, Box::new(a))
    }

    pub fn always(p: Path, a: Formula) -> Formula {
        Always(p, Box::new(a))
    }

    /// Rewrites conjunction, implication, eventually and always into
    /// negation, disjunction and until.
    pub fn to_core(&self) -> Formula {
        match self {
            True | False | Atom(_) | Class(_) => self.clone(),
            Not(a) => Formula::not(a.to_core()),
            Or(a, b) => Formula::or(a.to_core(), b.to_core()),
            And(a, b) => Formula::not(Formula::or(Formula::not(a.to_core()), Formula::not(b.to_core()))),
            Implies(a, b) => Formula::or(Formula::not(a.to_core()), b.to_core()),
            Next(p, a) => Formula::next(*p, a.to_core()),
            Until(p, a, b) => Formula::until(*p, a.to_core(), b.to_core()),
            Eventually(p, a) => Formula::until(*p, True, a.to_core()),
            Always(p, a) => Formula::not(Formula::until(*p, True, Formula::not(a.to_core()))),
        }
    }

    pub fn is_core(&self) -> bool {
        match self {
            True | False | Atom(_) | Class(_) => true,
            Not(a) | Next(_, a) => a.is_core(),
            Or(a, b) | Until(_, a, b) => a.is_core() && b.is_core(),
            And(..) | Implies(..) | Eventually(..) | Always(..) => false,
        }
    }

    /// Atomic propositions mentioned, excluding class atoms.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Atom(p) = f {
                out.insert(p.clone());
            }
        });
        out
    }

    /// All distinct subformulas.
    pub fn closure(&self) -> BTreeSet<Formula> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            out.insert(f.clone());
        });
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            True | False | Atom(_) | Class(_) => 0,
            Not(a) | Next(_, a) | Eventually(_, a) | Always(_, a) => 1 + a.depth(),
            And(a, b) | Or(a, b) | Implies(a, b) | Until(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            True | False | Atom(_) | Class(_) => {}
            Not(a) | Next(_, a) | Eventually(_, a) | Always(_, a) => a.visit(f),
            And(a, b) | Or(a, b) | Implies(a, b) | Until(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }
}

/// Fully parenthesised text that parses back to the same tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            True => write!(f, "true"),
            False => write!(f, "false"),
            Atom(p) => write!(f, "{p}"),
            Class(c) => write!(f, "{c}"),
            Not(a) => write!(f, "!{a}"),
            And(a, b) => write!(f, "({a} & {b})"),
            Or(a, b) => write!(f, "({a} | {b})"),
            Implies(a, b) => write!(f, "({a} -> {b})"),
            Next(p, a) => write!(f, "X{} {a}", p.suffix()),
            Until(p, a, b) => write!(f, "({a} U{} {b})", p.suffix()),
            Eventually(p, a) => write!(f, "F{} {a}", p.suffix()),
            Always(p, a) => write!(f, "G{} {a}", p.suffix()),
        }
    }
}
