//! Probabilistic visibly pushdown automata with exact rational probabilities.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::alphabet::{Class, Symbol};
use crate::vpa::BOTTOM;

pub type Prob = BigRational;

/// A pVPA. Each state's class fixes which transition table is used; the
/// label must belong to that class. Products carry `priority` and `origin`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pvpa {
    pub states: Vec<String>,
    pub class: Vec<Class>,
    pub labels: Vec<Symbol>,
    pub initial: usize,
    /// Entry [`BOTTOM`] is the bottom symbol.
    pub stack: Vec<String>,
    /// `(target, pushed symbol, probability)` per call state.
    pub call: Vec<Vec<(usize, usize, Prob)>>,
    pub int: Vec<Vec<(usize, Prob)>>,
    /// `ret[q][top]` lists `(target, probability)`.
    pub ret: Vec<Vec<Vec<(usize, Prob)>>>,
    pub priority: Option<Vec<u32>>,
    /// For products: the pair of component states.
    pub origin: Option<Vec<(usize, usize)>>,
}

/// A state at a step, tagged with whether the stack was empty there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct ExtState {
    pub state: usize,
    pub bottom: bool,
}

impl ExtState {
    pub fn plain(state: usize) -> ExtState {
        ExtState { state, bottom: false }
    }

    pub fn bot(state: usize) -> ExtState {
        ExtState { state, bottom: true }
    }

    pub fn display(&self, names: &[String]) -> String {
        if self.bottom {
            format!("{}_bot", names[self.state])
        } else {
            names[self.state].clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PvpaReport {
    pub problems: Vec<String>,
}

impl PvpaReport {
    pub fn is_valid(&self) -> bool {
        self.problems.is_empty()
    }
}

impl Pvpa {
    /// An empty model with the given states; transition tables are sized
    /// but left empty.
    pub fn with_states(states: Vec<(String, Symbol)>, stack: Vec<String>, initial: usize) -> Pvpa {
        let n = states.len();
        let k = stack.len();
        let (names, labels): (Vec<String>, Vec<Symbol>) = states.into_iter().unzip();
        Pvpa {
            class: labels.iter().map(|l| l.class).collect(),
            states: names,
            labels,
            initial,
            stack,
            call: vec![Vec::new(); n],
            int: vec![Vec::new(); n],
            ret: vec![vec![Vec::new(); k]; n],
            priority: None,
            origin: None,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn stack_index(&self, name: &str) -> Option<usize> {
        self.stack.iter().position(|s| s == name)
    }

    pub fn of_class(&self, c: Class) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(move |&q| self.class[q] == c)
    }

    /// Whether the stack alphabet has a single non-bottom symbol.
    pub fn is_one_counter(&self) -> bool {
        self.stack.len() == 2
    }

    /// Sorts every row by target, merging duplicate entries.
    pub fn normalize(&mut self) {
        fn merge<K: Ord + Copy>(row: &mut Vec<(K, Prob)>) {
            row.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out: Vec<(K, Prob)> = Vec::with_capacity(row.len());
            for (k, p) in row.drain(..) {
                match out.last_mut() {
                    Some((k0, p0)) if *k0 == k => *p0 += p,
                    _ => out.push((k, p)),
                }
            }
            *row = out;
        }
        for row in &mut self.int {
            merge(row);
        }
        for rows in &mut self.ret {
            for row in rows {
                merge(row);
            }
        }
        for row in &mut self.call {
            let mut keyed: Vec<((usize, usize), Prob)> = row.drain(..).map(|(t, z, p)| ((t, z), p)).collect();
            merge(&mut keyed);
            *row = keyed.into_iter().map(|((t, z), p)| (t, z, p)).collect();
        }
    }
}

fn sum(ps: impl Iterator<Item = Prob>) -> Prob {
    ps.fold(Prob::zero(), |a, b| a + b)
}

/// Reports distribution sums, visibility, bottom pushes, and dangling indices.
pub fn validate_pvpa(m: &Pvpa) -> PvpaReport {
    let mut problems = Vec::new();
    let n = m.num_states();
    let k = m.stack.len();
    if m.stack.is_empty() {
        problems.push("stack alphabet lacks the bottom symbol".to_string());
    }
    if m.initial >= n {
        problems.push(format!("initial state index {} out of range", m.initial));
    }
    let sized = m.class.len() == n
        && m.labels.len() == n
        && m.call.len() == n
        && m.int.len() == n
        && m.ret.len() == n
        && m.ret.iter().all(|r| r.len() == k);
    if !sized {
        problems.push("transition tables do not match the state or stack count".to_string());
        return PvpaReport { problems };
    }
    if let Some(p) = &m.priority {
        if p.len() != n {
            problems.push("priority map does not cover every state".to_string());
        }
    }
    let one = Prob::one();
    for q in 0..n {
        let name = &m.states[q];
        if m.labels[q].class != m.class[q] {
            problems.push(format!(
                "visibility violated: state {name} is a {} state labeled {}",
                m.class[q], m.labels[q]
            ));
        }
        let has_call = !m.call[q].is_empty();
        let has_int = !m.int[q].is_empty();
        let has_ret = m.ret[q].iter().any(|r| !r.is_empty());
        let stray = match m.class[q] {
            Class::Call => has_int || has_ret,
            Class::Int => has_call || has_ret,
            Class::Ret => has_call || has_int,
        };
        if stray {
            problems.push(format!("visibility violated: {} state {name} has transitions of another kind", m.class[q]));
        }
        for (t, z, p) in &m.call[q] {
            if *t >= n || *z >= k {
                problems.push(format!("dangling call transition from {name}"));
            } else if *z == BOTTOM {
                problems.push(format!("bottom pushed by call transition from {name}"));
            }
            if *p <= Prob::zero() || *p > one {
                problems.push(format!("probability {p} out of range at {name}"));
            }
        }
        for (t, p) in m.int[q].iter().chain(m.ret[q].iter().flatten()) {
            if *t >= n {
                problems.push(format!("dangling transition target from {name}"));
            }
            if *p <= Prob::zero() || *p > one {
                problems.push(format!("probability {p} out of range at {name}"));
            }
        }
        match m.class[q] {
            Class::Call => {
                let s = sum(m.call[q].iter().map(|e| e.2.clone()));
                if s != one {
                    problems.push(format!("call distribution of {name} sums to {s}"));
                }
            }
            Class::Int => {
                let s = sum(m.int[q].iter().map(|e| e.1.clone()));
                if s != one {
                    problems.push(format!("internal distribution of {name} sums to {s}"));
                }
            }
            Class::Ret => {
                for (z, row) in m.ret[q].iter().enumerate() {
                    let s = sum(row.iter().map(|e| e.1.clone()));
                    if s != one {
                        problems.push(format!("return distribution of {name} on {} sums to {s}", m.stack[z]));
                    }
                }
            }
        }
    }
    PvpaReport { problems }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn q(n: i64, d: i64) -> Prob {
        Prob::new(n.into(), d.into())
    }

    /// The two-state pVPA whose call state pushes with 2/3 to itself.
    pub fn fig4() -> Pvpa {
        let mut m = Pvpa::with_states(
            vec![("q0".into(), Symbol::plain(Class::Call)), ("q1".into(), Symbol::plain(Class::Ret))],
            vec!["bot".into(), "Z".into()],
            0,
        );
        m.call[0] = vec![(0, 1, q(2, 3)), (1, 1, q(1, 3))];
        m.ret[1][1] = vec![(0, q(1, 2)), (1, q(1, 2))];
        m.ret[1][0] = vec![(1, q(1, 1))];
        m
    }

    #[test]
    fn fig4_valid() {
        assert!(validate_pvpa(&fig4()).is_valid());
    }

    #[test]
    fn bad_sum_reported() {
        let mut m = Pvpa::with_states(vec![("a".into(), Symbol::plain(Class::Int))], vec!["bot".into()], 0);
        m.int[0] = vec![(0, q(9, 10))];
        let r = validate_pvpa(&m);
        assert!(r.problems.iter().any(|p| p.contains("sums to 9/10")), "{:?}", r.problems);
    }

    #[test]
    fn call_label_on_return_state() {
        let mut m = fig4();
        m.labels[1] = Symbol::plain(Class::Call);
        let r = validate_pvpa(&m);
        assert!(r.problems.iter().any(|p| p.starts_with("visibility")), "{:?}", r.problems);
    }

    #[test]
    fn bottom_push_reported() {
        let mut m = fig4();
        m.call[0][0].1 = BOTTOM;
        assert!(validate_pvpa(&m).problems.iter().any(|p| p.contains("bottom pushed")));
    }
}
