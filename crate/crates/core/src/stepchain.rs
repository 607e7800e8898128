//! The step chain: a finite Markov chain over extended states that jumps
//! from one step of a run to the next, and its sign-only underlying graph.
//!
//! Vertices are every bottom state `q_bot` plus every call or internal
//! state `q` that diverges with positive probability. Vertices are ordered
//! bottoms first, then plain states, each by state index.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::Zero;
use serde::Serialize;

use crate::alphabet::Class;
use crate::error::{Error, Result};
use crate::probsolve::{first_pop_support, Rat, ReturnTable, Sign, Value};
use crate::pvpa::{ExtState, Pvpa};
use crate::vpa::BOTTOM;

/// The step Markov chain with exact or interval transition probabilities.
#[derive(Clone, Debug, Serialize)]
pub struct StepChain {
    pub states: Vec<ExtState>,
    pub names: Vec<String>,
    pub initial: usize,
    /// Sparse rows `(target, probability)`, sorted by target.
    pub rows: Vec<Vec<(usize, Value)>>,
    pub priority: Option<Vec<u32>>,
}

/// Vertex set and edges of the step chain, derived from signs only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepGraph {
    pub states: Vec<ExtState>,
    pub names: Vec<String>,
    pub initial: usize,
    pub succ: Vec<Vec<usize>>,
    pub priority: Option<Vec<u32>>,
}

fn vertex_set(m: &Pvpa, div_sign: &[Sign]) -> Result<Vec<ExtState>> {
    let undecided: Vec<&str> = (0..m.num_states())
        .filter(|&q| m.class[q] != Class::Ret && div_sign[q] == Sign::Undecided)
        .map(|q| m.states[q].as_str())
        .collect();
    if !undecided.is_empty() {
        return Err(Error::Undecided(format!("divergence of {}", undecided.join(", "))));
    }
    let mut v: Vec<ExtState> = (0..m.num_states()).map(ExtState::bot).collect();
    v.extend((0..m.num_states()).filter(|&q| m.class[q] != Class::Ret && div_sign[q] == Sign::Positive).map(ExtState::plain));
    Ok(v)
}

fn lift_priority(m: &Pvpa, states: &[ExtState]) -> Option<Vec<u32>> {
    m.priority.as_ref().map(|p| states.iter().map(|v| p[v.state]).collect())
}

fn index_of(states: &[ExtState]) -> BTreeMap<ExtState, usize> {
    states.iter().enumerate().map(|(i, v)| (*v, i)).collect()
}

/// Builds the step chain of `m` from its return/divergence table.
pub fn build_step_chain(m: &Pvpa, t: &ReturnTable) -> Result<StepChain> {
    let states = vertex_set(m, &t.div_sign)?;
    let idx = index_of(&states);
    let names = states.iter().map(|v| v.display(&m.states)).collect();
    let mut rows = Vec::with_capacity(states.len());
    for v in &states {
        let q = v.state;
        let mut row: BTreeMap<ExtState, Value> = BTreeMap::new();
        let mut put = |to: ExtState, x: Value| {
            if x.hi().is_zero() {
                return;
            }
            let e = row.entry(to).or_insert_with(Value::zero);
            *e = e.add(&x);
        };
        match (m.class[q], v.bottom) {
            (Class::Ret, true) => {
                for (r, p) in &m.ret[q][BOTTOM] {
                    put(ExtState::bot(*r), Value::Exact(p.clone()));
                }
            }
            (Class::Ret, false) => unreachable!("return states are never plain vertices"),
            (Class::Int, true) => {
                for (r, p) in &m.int[q] {
                    put(ExtState::bot(*r), Value::Exact(p.clone()));
                }
            }
            (Class::Int, false) => {
                for (r, p) in &m.int[q] {
                    if t.div_sign[*r] == Sign::Positive {
                        put(ExtState::plain(*r), ratio(t, *r, q)?.scale(p));
                    }
                }
            }
            (Class::Call, bottom) => {
                // Mass that returns to `r` and mass that enters `r` directly.
                let mut back: BTreeMap<usize, Value> = BTreeMap::new();
                let mut enter: BTreeMap<usize, Rat> = BTreeMap::new();
                for (r1, z, p) in &m.call[q] {
                    *enter.entry(*r1).or_insert_with(Rat::zero) += p;
                    for r in 0..m.num_states() {
                        if t.ret_sign(*r1, *z, r) == Sign::Positive {
                            let e = back.entry(r).or_insert_with(Value::zero);
                            *e = e.add(&t.ret(*r1, *z, r).scale(p));
                        }
                    }
                }
                if bottom {
                    for (r, x) in &back {
                        put(ExtState::bot(*r), x.clone());
                    }
                    for (r, p) in &enter {
                        if t.div_sign[*r] == Sign::Positive {
                            put(ExtState::plain(*r), t.div[*r].scale(p));
                        }
                    }
                } else {
                    let mut sum: BTreeMap<usize, Value> = back;
                    for (r, p) in enter {
                        let e = sum.entry(r).or_insert_with(Value::zero);
                        *e = e.add(&Value::Exact(p));
                    }
                    for (r, x) in sum {
                        if t.div_sign[r] == Sign::Positive {
                            put(ExtState::plain(r), ratio(t, r, q)?.mul(&x));
                        }
                    }
                }
            }
        }
        let mut row: Vec<(usize, Value)> = row.into_iter().map(|(to, x)| (idx[&to], x.clamp01())).collect();
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    let initial = idx[&ExtState::bot(m.initial)];
    Ok(StepChain { priority: lift_priority(m, &states), states, names, initial, rows })
}

fn ratio(t: &ReturnTable, r: usize, q: usize) -> Result<Value> {
    t.div[r]
        .div(&t.div[q])
        .ok_or_else(|| Error::Internal(format!("divergence of state {q} not certified positive")))
}

/// Builds the underlying graph from divergence signs and return support.
/// `div_sign` is indexed by the states of `m`.
pub fn build_step_graph(m: &Pvpa, div_sign: &[Sign]) -> Result<StepGraph> {
    let states = vertex_set(m, div_sign)?;
    let idx = index_of(&states);
    let (rets, pos) = first_pop_support(m);
    let returns_to = |r1: usize, z: usize, r: usize| {
        rets.iter().enumerate().any(|(i, &t)| pos[r1][i] && m.ret[t][z].iter().any(|(u, p)| *u == r && p > &Rat::zero()))
    };
    let diverges = |r: usize| m.class[r] != Class::Ret && div_sign[r] == Sign::Positive;
    let mut succ = Vec::with_capacity(states.len());
    for v in &states {
        let q = v.state;
        let mut out: Vec<ExtState> = Vec::new();
        match (m.class[q], v.bottom) {
            (Class::Ret, _) => out.extend(m.ret[q][BOTTOM].iter().map(|(r, _)| ExtState::bot(*r))),
            (Class::Int, true) => out.extend(m.int[q].iter().map(|(r, _)| ExtState::bot(*r))),
            (Class::Int, false) => out.extend(m.int[q].iter().filter(|(r, _)| diverges(*r)).map(|(r, _)| ExtState::plain(*r))),
            (Class::Call, bottom) => {
                for r in 0..m.num_states() {
                    let back = m.call[q].iter().any(|(r1, z, _)| returns_to(*r1, *z, r));
                    let enter = m.call[q].iter().any(|(r1, _, _)| *r1 == r);
                    if bottom {
                        if back {
                            out.push(ExtState::bot(r));
                        }
                        if enter && diverges(r) {
                            out.push(ExtState::plain(r));
                        }
                    } else if diverges(r) && (back || enter) {
                        out.push(ExtState::plain(r));
                    }
                }
            }
        }
        let mut targets: Vec<usize> = out.iter().map(|w| idx[w]).collect();
        targets.sort_unstable();
        targets.dedup();
        succ.push(targets);
    }
    let names = states.iter().map(|v| v.display(&m.states)).collect();
    let initial = idx[&ExtState::bot(m.initial)];
    Ok(StepGraph { priority: lift_priority(m, &states), states, names, initial, succ })
}

fn reachable_from(initial: usize, succ: impl Fn(usize) -> Vec<usize>, n: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![initial];
    seen[initial] = true;
    while let Some(v) = stack.pop() {
        for w in succ(v) {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// New indices of the kept vertices.
fn renumber(keep: &[bool]) -> Vec<Option<usize>> {
    keep.iter()
        .scan(0, |k, &b| {
            let r = b.then_some(*k);
            *k += b as usize;
            Some(r)
        })
        .collect()
}

impl StepChain {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self, v: ExtState) -> Option<usize> {
        self.states.iter().position(|w| *w == v)
    }

    pub fn prob(&self, from: usize, to: usize) -> Value {
        self.rows[from].iter().find(|(t, _)| *t == to).map(|(_, x)| x.clone()).unwrap_or_else(Value::zero)
    }

    pub fn row_sums(&self) -> Vec<Value> {
        self.rows.iter().map(|r| r.iter().fold(Value::zero(), |a, (_, x)| a.add(x))).collect()
    }

    /// Exact rows sum to one; interval rows bracket one.
    pub fn is_stochastic(&self) -> bool {
        let one = Rat::from_integer(1.into());
        self.row_sums().iter().all(|s| s.contains(&one))
    }

    pub fn is_exact(&self) -> bool {
        self.rows.iter().flatten().all(|(_, x)| x.is_exact())
    }

    /// Successor lists of positive-probability edges.
    pub fn support(&self) -> Vec<Vec<usize>> {
        self.rows.iter().map(|r| r.iter().filter(|(_, x)| !x.hi().is_zero()).map(|(t, _)| *t).collect()).collect()
    }

    /// The sub-chain reachable from the initial vertex.
    pub fn reachable(&self) -> StepChain {
        let sup = self.support();
        let keep = reachable_from(self.initial, |v| sup[v].clone(), self.len());
        let map = renumber(&keep);
        let pick = |i: usize| keep[i];
        StepChain {
            states: (0..self.len()).filter(|&i| pick(i)).map(|i| self.states[i]).collect(),
            names: (0..self.len()).filter(|&i| pick(i)).map(|i| self.names[i].clone()).collect(),
            initial: map[self.initial].unwrap(),
            rows: (0..self.len())
                .filter(|&i| pick(i))
                .map(|i| self.rows[i].iter().map(|(t, x)| (map[*t].unwrap(), x.clone())).collect())
                .collect(),
            priority: self.priority.as_ref().map(|p| (0..self.len()).filter(|&i| pick(i)).map(|i| p[i]).collect()),
        }
    }

    /// Distribution over vertices after `k` steps from the initial vertex,
    /// using interval midpoints.
    pub fn distribution_after(&self, k: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        d[self.initial] = 1.0;
        for _ in 0..k {
            let mut next = vec![0.0; self.len()];
            for (v, row) in self.rows.iter().enumerate() {
                for (t, x) in row {
                    next[*t] += d[v] * x.to_f64();
                }
            }
            d = next;
        }
        d
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(v, row)| {
                row.iter().map(move |(t, x)| serde_json::json!({ "from": self.names[v], "to": self.names[*t], "prob": x }))
            })
            .collect();
        serde_json::json!({
            "states": self.names,
            "initial": self.names[self.initial],
            "priority": self.priority,
            "edges": edges,
        })
    }

    pub fn to_dot(&self) -> String {
        dot(&self.names, self.initial, self.priority.as_deref(), |v| {
            self.rows[v].iter().map(|(t, x)| (*t, Some(x.to_string()))).collect()
        })
    }
}

impl StepGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn reachable(&self) -> Vec<bool> {
        reachable_from(self.initial, |v| self.succ[v].clone(), self.len())
    }

    /// The subgraph reachable from the initial vertex.
    pub fn restrict_reachable(&self) -> StepGraph {
        let keep = self.reachable();
        let map = renumber(&keep);
        let kept = |i: &usize| keep[*i];
        StepGraph {
            states: (0..self.len()).filter(kept).map(|i| self.states[i]).collect(),
            names: (0..self.len()).filter(kept).map(|i| self.names[i].clone()).collect(),
            initial: map[self.initial].unwrap(),
            succ: (0..self.len()).filter(kept).map(|i| self.succ[i].iter().map(|t| map[*t].unwrap()).collect()).collect(),
            priority: self.priority.as_ref().map(|p| (0..self.len()).filter(kept).map(|i| p[i]).collect()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .succ
            .iter()
            .enumerate()
            .flat_map(|(v, ts)| ts.iter().map(move |t| serde_json::json!({ "from": self.names[v], "to": self.names[*t] })))
            .collect();
        serde_json::json!({
            "states": self.names,
            "initial": self.names[self.initial],
            "priority": self.priority,
            "edges": edges,
        })
    }

    pub fn to_dot(&self) -> String {
        dot(&self.names, self.initial, self.priority.as_deref(), |v| self.succ[v].iter().map(|t| (*t, None)).collect())
    }
}

fn dot(names: &[String], initial: usize, prio: Option<&[u32]>, edges: impl Fn(usize) -> Vec<(usize, Option<String>)>) -> String {
    let mut s = String::from("digraph step_chain {\n  rankdir=LR;\n  start [shape=point];\n");
    for (i, n) in names.iter().enumerate() {
        let label = match prio {
            Some(p) => format!("{n} [{}]", p[i]),
            None => n.clone(),
        };
        let _ = writeln!(s, "  v{i} [label=\"{label}\"];");
    }
    let _ = writeln!(s, "  start -> v{initial};");
    for v in 0..names.len() {
        for (t, label) in edges(v) {
            match label {
                Some(l) => {
                    let _ = writeln!(s, "  v{v} -> v{t} [label=\"{l}\"];");
                }
                None => {
                    let _ = writeln!(s, "  v{v} -> v{t};");
                }
            }
        }
    }
    s.push_str("}\n");
    s
}
