//! Negation normal form of CaRet formulas, hash-consed in an arena.
//!
//! Negated next and until modalities become weak next and release: the weak
//! abstract and caller nexts hold when the successor is undefined, and
//! `a R b` unfolds to `b & (a | W (a R b))`.

use std::collections::HashMap;

use crate::alphabet::{Class, Symbol};
use crate::caret::{Formula, Path};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lit {
    Prop(String),
    Class(Class),
}

impl Lit {
    pub fn holds(&self, s: &Symbol) -> bool {
        match self {
            Lit::Prop(p) => s.props.contains(p),
            Lit::Class(c) => s.class == *c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    True,
    False,
    Lit(Lit, bool),
    And(NodeId, NodeId),
    Or(NodeId, NodeId),
    /// Strong next: the successor must exist.
    Next(Path, NodeId),
    /// Weak next: holds when the successor is undefined.
    WeakNext(Path, NodeId),
    Until(Path, NodeId, NodeId),
    Release(Path, NodeId, NodeId),
}

#[derive(Default, Debug, Clone)]
pub struct Arena {
    nodes: Vec<Node>,
    index: HashMap<Node, NodeId>,
    neg: HashMap<NodeId, NodeId>,
}

impl Arena {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    fn intern(&mut self, n: Node) -> NodeId {
        // The global successor always exists, so weak and strong coincide.
        let n = match n {
            Node::WeakNext(Path::Global, a) => Node::Next(Path::Global, a),
            n => n,
        };
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(n.clone());
        self.index.insert(n, id);
        id
    }

    /// Builds the NNF of `f` (negated when `positive` is false).
    pub fn build(&mut self, f: &Formula, positive: bool) -> NodeId {
        use Formula as F;
        let n = match (f, positive) {
            (F::True, true) | (F::False, false) => Node::True,
            (F::True, false) | (F::False, true) => Node::False,
            (F::Atom(p), s) => Node::Lit(Lit::Prop(p.clone()), s),
            (F::Class(c), s) => Node::Lit(Lit::Class(*c), s),
            (F::Not(a), s) => return self.build(a, !s),
            (F::Or(a, b), true) | (F::And(a, b), false) => {
                let (a, b) = (self.build(a, positive), self.build(b, positive));
                Node::Or(a, b)
            }
            (F::And(a, b), true) | (F::Or(a, b), false) => {
                let (a, b) = (self.build(a, positive), self.build(b, positive));
                Node::And(a, b)
            }
            (F::Implies(a, b), true) => {
                let (a, b) = (self.build(a, false), self.build(b, true));
                Node::Or(a, b)
            }
            (F::Implies(a, b), false) => {
                let (a, b) = (self.build(a, true), self.build(b, false));
                Node::And(a, b)
            }
            (F::Next(p, a), true) => Node::Next(*p, self.build(a, true)),
            (F::Next(p, a), false) => Node::WeakNext(*p, self.build(a, false)),
            (F::Until(p, a, b), true) => {
                let (a, b) = (self.build(a, true), self.build(b, true));
                Node::Until(*p, a, b)
            }
            (F::Until(p, a, b), false) => {
                let (a, b) = (self.build(a, false), self.build(b, false));
                Node::Release(*p, a, b)
            }
            (F::Eventually(..) | F::Always(..), _) => return self.build(&f.to_core(), positive),
        };
        self.intern(n)
    }

    /// NNF of the negation of an NNF node.
    pub fn negate(&mut self, id: NodeId) -> NodeId {
        if let Some(&n) = self.neg.get(&id) {
            return n;
        }
        let n = match self.node(id).clone() {
            Node::True => Node::False,
            Node::False => Node::True,
            Node::Lit(l, s) => Node::Lit(l, !s),
            Node::And(a, b) => Node::Or(self.negate(a), self.negate(b)),
            Node::Or(a, b) => Node::And(self.negate(a), self.negate(b)),
            Node::Next(Path::Global, a) => Node::Next(Path::Global, self.negate(a)),
            Node::Next(p, a) => Node::WeakNext(p, self.negate(a)),
            Node::WeakNext(p, a) => Node::Next(p, self.negate(a)),
            Node::Until(p, a, b) => Node::Release(p, self.negate(a), self.negate(b)),
            Node::Release(p, a, b) => Node::Until(p, self.negate(a), self.negate(b)),
        };
        let n = self.intern(n);
        self.neg.insert(id, n);
        self.neg.insert(n, id);
        n
    }

    /// Nodes reachable from `roots` through subformula edges.
    pub fn reachable(&self, roots: &[NodeId]) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots.to_vec();
        let mut out = Vec::new();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id as usize], true) {
                continue;
            }
            out.push(id);
            match self.node(id) {
                Node::True | Node::False | Node::Lit(..) => {}
                Node::Next(_, a) | Node::WeakNext(_, a) => stack.push(*a),
                Node::And(a, b) | Node::Or(a, b) | Node::Until(_, a, b) | Node::Release(_, a, b) => {
                    stack.push(*a);
                    stack.push(*b);
                }
            }
        }
        out.sort_unstable();
        out
    }
}
