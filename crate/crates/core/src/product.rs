//! Synchronized product of a pVPA with a deterministic stair-parity VPA.
//!
//! The automaton reads the label of the system state being left, so the
//! product state `(q, s)` moves along the system's distribution while `s`
//! follows the unique automaton transition on `label(q)`. Only the
//! reachable part is built. Stack symbols are pairs of system and
//! automaton symbols; index 0 is the pair of bottoms.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_traits::One;

use crate::alphabet::{Class, Symbol};
use crate::error::{Error, Result};
use crate::pvpa::{validate_pvpa, Pvpa};
use crate::vpa::{DetMachine, DetTables, Vpa, BOTTOM};

pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// How system labels are matched against the automaton's alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMatch {
    /// Labels must be alphabet symbols verbatim.
    Exact,
    /// Labels are first restricted to the atoms the automaton knows.
    Project,
}

/// Product with an explicit deterministic VPA carrying a priority map.
pub fn build_product(m: &Pvpa, d: &Vpa) -> Result<Pvpa> {
    let mut t = DetTables::new(d)?;
    let names = |s: usize| d.states[s].clone();
    let stacks = |y: usize| d.stack[y].clone();
    build_product_with(m, &mut t, LabelMatch::Exact, &names, &stacks, DEFAULT_STATE_CAP)
}

/// Product with any deterministic machine. `state_name` and `stack_name`
/// render automaton states and stack symbols for the product's names.
pub fn build_product_with<D: DetMachine>(
    m: &Pvpa,
    d: &mut D,
    matching: LabelMatch,
    state_name: &dyn Fn(usize) -> String,
    stack_name: &dyn Fn(usize) -> String,
    cap: usize,
) -> Result<Pvpa> {
    let report = validate_pvpa(m);
    if !report.is_valid() {
        return Err(Error::Invalid(report.problems.join("; ")));
    }
    let sym = label_symbols(m, d, matching)?;
    let mut b = Builder { d, index: HashMap::new(), pairs: Vec::new(), stack_index: HashMap::new(), stacks: vec![(BOTTOM, BOTTOM)], cap };
    b.stack_index.insert((BOTTOM, BOTTOM), BOTTOM);
    let s0 = b.d.start()?;
    let init = b.state(m.initial, s0)?;

    // Same-level exploration: a context is an entry state with the symbol
    // pushed on entering it; callers of a context resume after its exits.
    type Ctx = (usize, usize);
    let root: Ctx = (init, BOTTOM);
    let mut members: HashMap<Ctx, BTreeSet<usize>> = HashMap::new();
    let mut callers: HashMap<Ctx, BTreeSet<Ctx>> = HashMap::new();
    let mut exits: HashMap<Ctx, BTreeSet<usize>> = HashMap::new();
    let mut call_rows: BTreeMap<usize, Vec<(usize, usize, crate::pvpa::Prob)>> = BTreeMap::new();
    let mut int_rows: BTreeMap<usize, Vec<(usize, crate::pvpa::Prob)>> = BTreeMap::new();
    let mut ret_rows: BTreeMap<(usize, usize), Vec<(usize, crate::pvpa::Prob)>> = BTreeMap::new();
    let mut work: VecDeque<(Ctx, usize)> = VecDeque::new();
    members.entry(root).or_default().insert(init);
    work.push_back((root, init));

    while let Some((ctx, x)) = work.pop_front() {
        let add = |c: Ctx, y: usize, members: &mut HashMap<Ctx, BTreeSet<usize>>, work: &mut VecDeque<(Ctx, usize)>| {
            if members.entry(c).or_default().insert(y) {
                work.push_back((c, y));
            }
        };
        let (q, s) = b.pairs[x];
        match m.class[q] {
            Class::Int => {
                if !int_rows.contains_key(&x) {
                    let s2 = b.d.int(s, sym[q])?;
                    let mut row = Vec::new();
                    for (q2, p) in &m.int[q] {
                        row.push((b.state(*q2, s2)?, p.clone()));
                    }
                    int_rows.insert(x, row);
                }
                for (y, _) in int_rows[&x].clone() {
                    add(ctx, y, &mut members, &mut work);
                }
            }
            Class::Call => {
                if !call_rows.contains_key(&x) {
                    let (s2, push) = b.d.call(s, sym[q])?;
                    let mut row = Vec::new();
                    for (q2, z, p) in &m.call[q] {
                        let y = b.state(*q2, s2)?;
                        row.push((y, b.stack_symbol(*z, push), p.clone()));
                    }
                    call_rows.insert(x, row);
                }
                for (y, top, _) in call_rows[&x].clone() {
                    let callee = (y, top);
                    add(callee, y, &mut members, &mut work);
                    if callers.entry(callee).or_default().insert(ctx) {
                        for r in exits.get(&callee).cloned().unwrap_or_default() {
                            add(ctx, r, &mut members, &mut work);
                        }
                    }
                }
            }
            Class::Ret => {
                let top = ctx.1;
                if !ret_rows.contains_key(&(x, top)) {
                    let (z, yz) = b.stacks[top];
                    let s2 = b.d.ret(s, sym[q], yz)?;
                    let mut row = Vec::new();
                    for (q2, p) in &m.ret[q][z] {
                        row.push((b.state(*q2, s2)?, p.clone()));
                    }
                    ret_rows.insert((x, top), row);
                }
                for (r, _) in ret_rows[&(x, top)].clone() {
                    if top == BOTTOM {
                        add(ctx, r, &mut members, &mut work);
                    } else if exits.entry(ctx).or_default().insert(r) {
                        for c in callers.get(&ctx).cloned().unwrap_or_default() {
                            add(c, r, &mut members, &mut work);
                        }
                    }
                }
            }
        }
    }

    let n = b.pairs.len();
    let k = b.stacks.len();
    let states: Vec<(String, Symbol)> = b
        .pairs
        .iter()
        .map(|&(q, s)| (format!("({},{})", m.states[q], state_name(s)), Symbol::plain(m.class[q])))
        .collect();
    let stack: Vec<String> = b
        .stacks
        .iter()
        .enumerate()
        .map(|(i, &(z, y))| if i == BOTTOM { m.stack[BOTTOM].clone() } else { format!("({},{})", m.stack[z], stack_name(y)) })
        .collect();
    let mut out = Pvpa::with_states(states, stack, init);
    let mut prio = Vec::with_capacity(n);
    for &(_, s) in &b.pairs {
        prio.push(b.d.priority(s)?);
    }
    for (x, row) in call_rows {
        out.call[x] = row;
    }
    for (x, row) in int_rows {
        out.int[x] = row;
    }
    for x in 0..n {
        if out.class[x] != Class::Ret {
            continue;
        }
        for top in 0..k {
            // Unreachable head pairs get a self-loop to keep rows stochastic.
            out.ret[x][top] = ret_rows.remove(&(x, top)).unwrap_or_else(|| vec![(x, crate::pvpa::Prob::one())]);
        }
    }
    out.priority = Some(prio);
    // Rows keep the system's order so equal seeds give equal runs.
    out.origin = Some(b.pairs.clone());
    Ok(out)
}

fn label_symbols<D: DetMachine>(m: &Pvpa, d: &D, matching: LabelMatch) -> Result<Vec<usize>> {
    let atoms = d.alphabet().atoms();
    m.labels
        .iter()
        .map(|l| {
            let l = match matching {
                LabelMatch::Exact => l.clone(),
                LabelMatch::Project => l.project(&atoms),
            };
            d.alphabet().index_of(&l).ok_or_else(|| Error::AlphabetMismatch(format!("label {l} is not in the automaton's alphabet")))
        })
        .collect()
}

struct Builder<'a, D> {
    d: &'a mut D,
    index: HashMap<(usize, usize), usize>,
    pairs: Vec<(usize, usize)>,
    stack_index: HashMap<(usize, usize), usize>,
    stacks: Vec<(usize, usize)>,
    cap: usize,
}

impl<D: DetMachine> Builder<'_, D> {
    fn state(&mut self, q: usize, s: usize) -> Result<usize> {
        if let Some(&i) = self.index.get(&(q, s)) {
            return Ok(i);
        }
        if self.pairs.len() >= self.cap {
            return Err(Error::Resource(format!("product exceeds {} states", self.cap)));
        }
        let i = self.pairs.len();
        self.pairs.push((q, s));
        self.index.insert((q, s), i);
        Ok(i)
    }

    fn stack_symbol(&mut self, z: usize, y: usize) -> usize {
        let next = self.stacks.len();
        let i = *self.stack_index.entry((z, y)).or_insert(next);
        if i == next {
            self.stacks.push((z, y));
        }
        i
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{bundled_pvpa, bundled_vpa};
    use crate::pvpa::tests::q;
    use crate::sim::{Config, Simulator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig7_fig3() -> Pvpa {
        build_product(&bundled_pvpa("fig7.pvpa").unwrap(), &bundled_vpa("fig3.dvpa").unwrap()).unwrap()
    }

    #[test]
    fn fig7_fig3_reachable_states() {
        let p = fig7_fig3();
        let names: BTreeSet<&str> = p.states.iter().map(String::as_str).collect();
        let want: BTreeSet<&str> = ["(tau,s0)", "(r,s1)", "(c,s1)", "(c,s0)", "(r,s0)"].into_iter().collect();
        assert_eq!(names, want);
        assert!(validate_pvpa(&p).is_valid());
        let i = |n: &str| p.state_index(n).unwrap();
        assert_eq!(p.int[i("(tau,s0)")], vec![(i("(r,s1)"), q(1, 3)), (i("(c,s1)"), q(2, 3))]);
        let prio = p.priority.as_ref().unwrap();
        assert_eq!(prio[i("(c,s0)")], 1);
        assert_eq!(prio[i("(c,s1)")], 2);
        // c in s1 pushes (Z,Z) and moves to s0.
        let zz = p.stack_index("(Z,Z)").unwrap();
        assert!(p.call[i("(c,s1)")].iter().all(|(_, z, _)| *z == zz));
        assert!(p.call[i("(c,s1)")].iter().all(|(t, _, _)| p.origin.as_ref().unwrap()[*t].1 == 0));
    }

    #[test]
    fn single_state_automaton_is_identity() {
        let m = bundled_pvpa("fig7.pvpa").unwrap();
        let text = "dvpa\nsymbol c call{}\nsymbol t int{}\nsymbol r ret{}\nstack Y\nstate u priority 0\ninit u\ncall u * -> u Y\nint u * -> u\nret u * * -> u\n";
        let d = crate::format::parse_vpa(text, "one").unwrap();
        let p = build_product(&m, &d).unwrap();
        assert_eq!(p.num_states(), m.num_states());
        assert!(p.priority.unwrap().iter().all(|&x| x == 0));
        assert!(p.stack.len() <= m.stack.len() * d.stack.len());
    }

    #[test]
    fn mismatched_alphabet_rejected() {
        let m = bundled_pvpa("infection.pvpa").unwrap();
        let d = bundled_vpa("fig3.dvpa").unwrap();
        assert!(matches!(build_product(&m, &d), Err(Error::AlphabetMismatch(_))));
    }

    #[test]
    fn simulation_projects_onto_components() {
        let m = bundled_pvpa("fig7.pvpa").unwrap();
        let d = bundled_vpa("fig3.dvpa").unwrap();
        let p = build_product(&m, &d).unwrap();
        let mut t = DetTables::new(&d).unwrap();
        let origin = p.origin.clone().unwrap();
        let sp = Simulator::new(&p).unwrap();
        let sm = Simulator::new(&m).unwrap();
        for seed in 0..20 {
            // Same seed, same draws: the product's rows are the system's rows
            // with targets renamed, in the same order.
            let mut rp = ChaCha8Rng::seed_from_u64(seed);
            let mut rm = ChaCha8Rng::seed_from_u64(seed);
            let mut cp = Config { state: p.initial, stack: Vec::new() };
            let mut cm = Config { state: m.initial, stack: Vec::new() };
            let mut s = t.start().unwrap();
            let mut ds: Vec<usize> = Vec::new();
            for _ in 0..200 {
                assert_eq!(origin[cp.state], (cm.state, s));
                let a = d.alphabet.index_of(&m.labels[cm.state]).unwrap();
                match m.class[cm.state] {
                    Class::Call => {
                        let (s2, y) = t.call(s, a).unwrap();
                        ds.push(y);
                        s = s2;
                    }
                    Class::Int => s = t.int(s, a).unwrap(),
                    Class::Ret => {
                        let top = if cm.stack.is_empty() { BOTTOM } else { ds.pop().unwrap() };
                        s = t.ret(s, a, top).unwrap();
                    }
                }
                sp.step(&mut cp, &mut rp).unwrap();
                sm.step(&mut cm, &mut rm).unwrap();
            }
        }
    }
}
