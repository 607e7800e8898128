//! Plain-text model formats.
//!
//! A pVPA file:
//!
//! ```text
//! pvpa
//! stack Z
//! state q0 call{}
//! state q1 ret{}
//! init q0
//! call q0 -> q0 Z 2/3
//! call q0 -> q1 Z 1/3
//! ret q1 Z -> q0 1/2
//! ret q1 Z -> q1 1/2
//! ret q1 bot -> q1 1
//! ```
//!
//! An automaton file starts with `dvpa` or `nvpa`, optionally lists atoms
//! (`ap p q`) and named symbols (`symbol c call{}`), and marks states with
//! `priority N` (deterministic) or `accepting` (Büchi). Transitions are
//! `call s SYM -> t Z`, `int s SYM -> t` and `ret s SYM TOP -> t`, where
//! `SYM` and `TOP` may be `*`. Without `symbol` lines the alphabet is all of
//! `2^ap x {call, int, ret}`. Probabilities are exact: `p/q` or an integer.
//! `#` starts a comment.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::alphabet::{Alphabet, Class, Symbol};
use crate::error::{Error, Result};
use crate::pvpa::{validate_pvpa, Prob, Pvpa};
use crate::vpa::{validate_automaton, Acceptance, CallEdge, IntEdge, RetEdge, Vpa};

struct Lines<'a> {
    file: &'a str,
    items: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, file: &'a str) -> Lines<'a> {
        let items = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                let toks: Vec<&str> = l.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Lines { file, items }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { file: self.file.to_string(), line, msg: msg.into() }
    }
}

pub fn parse_prob(tok: &str) -> std::result::Result<Prob, String> {
    if tok.contains('.') || tok.contains('e') || tok.contains('E') {
        return Err(format!("`{tok}`: decimal probabilities are not allowed, write p/q"));
    }
    let (n, d) = match tok.split_once('/') {
        Some((n, d)) => (n, d),
        None => (tok, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| format!("bad probability `{tok}`"))?;
    let d: BigInt = d.parse().map_err(|_| format!("bad probability `{tok}`"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in `{tok}`"));
    }
    Ok(Prob::new(n, d))
}

fn render_prob(p: &Prob) -> String {
    crate::probsolve::render_rat(p)
}

fn check_arrow(ls: &Lines, line: usize, tok: &str) -> Result<()> {
    if tok == "->" {
        Ok(())
    } else {
        Err(ls.err(line, format!("expected `->`, found `{tok}`")))
    }
}

fn expect_len(ls: &Lines, line: usize, toks: &[&str], n: usize, shape: &str) -> Result<()> {
    if toks.len() == n {
        Ok(())
    } else {
        Err(ls.err(line, format!("expected `{shape}`")))
    }
}

pub fn parse_pvpa(text: &str, file: &str) -> Result<Pvpa> {
    let ls = Lines::new(text, file);
    let mut it = ls.items.iter();
    match it.next() {
        Some((_, t)) if t == &["pvpa"] => {}
        Some((l, _)) => return Err(ls.err(*l, "expected header `pvpa`")),
        None => return Err(ls.err(1, "empty file")),
    }
    let mut stack = vec!["bot".to_string()];
    let mut states: Vec<(String, Symbol)> = Vec::new();
    let mut prios: Vec<Option<u32>> = Vec::new();
    let mut init: Option<(usize, String)> = None;
    let mut trans = Vec::new();
    for (line, toks) in it {
        let line = *line;
        match toks[0] {
            "stack" => {
                for z in &toks[1..] {
                    if stack.iter().any(|s| s == z) {
                        return Err(ls.err(line, format!("duplicate stack symbol `{z}`")));
                    }
                    stack.push(z.to_string());
                }
            }
            "state" => {
                if toks.len() != 3 && !(toks.len() == 5 && toks[3] == "priority") {
                    return Err(ls.err(line, "expected `state NAME LABEL [priority N]`"));
                }
                if states.iter().any(|(n, _)| n == toks[1]) {
                    return Err(ls.err(line, format!("duplicate state `{}`", toks[1])));
                }
                let sym = Symbol::parse(toks[2]).ok_or_else(|| ls.err(line, format!("bad label `{}`", toks[2])))?;
                states.push((toks[1].to_string(), sym));
                prios.push(match toks.get(4) {
                    Some(p) => Some(p.parse().map_err(|_| ls.err(line, format!("bad priority `{p}`")))?),
                    None => None,
                });
            }
            "init" => {
                expect_len(&ls, line, toks, 2, "init NAME")?;
                init = Some((line, toks[1].to_string()));
            }
            "call" | "int" | "ret" => trans.push((line, toks.clone())),
            other => return Err(ls.err(line, format!("unknown keyword `{other}`"))),
        }
    }
    let (iline, iname) = init.ok_or_else(|| ls.err(ls.items.last().map_or(1, |x| x.0), "missing `init`"))?;
    let state_ix: HashMap<String, usize> = states.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
    let st = |line: usize, n: &str| state_ix.get(n).copied().ok_or_else(|| ls.err(line, format!("unknown state `{n}`")));
    let sk = |line: usize, n: &str| {
        stack.iter().position(|s| s == n).ok_or_else(|| ls.err(line, format!("unknown stack symbol `{n}`")))
    };
    let initial = st(iline, &iname)?;
    let mut m = Pvpa::with_states(states.clone(), stack.clone(), initial);
    if prios.iter().any(Option::is_some) {
        if prios.iter().any(Option::is_none) {
            return Err(ls.err(iline, "either all states or none carry a priority"));
        }
        m.priority = Some(prios.iter().map(|p| p.unwrap()).collect());
    }
    for (line, t) in trans {
        let prob = |tok: &str| parse_prob(tok).map_err(|e| ls.err(line, e));
        match t[0] {
            "call" => {
                expect_len(&ls, line, &t, 6, "call FROM -> TO Z P")?;
                check_arrow(&ls, line, t[2])?;
                let (q, r, z) = (st(line, t[1])?, st(line, t[3])?, sk(line, t[4])?);
                m.call[q].push((r, z, prob(t[5])?));
            }
            "int" => {
                expect_len(&ls, line, &t, 5, "int FROM -> TO P")?;
                check_arrow(&ls, line, t[2])?;
                let (q, r) = (st(line, t[1])?, st(line, t[3])?);
                m.int[q].push((r, prob(t[4])?));
            }
            _ => {
                expect_len(&ls, line, &t, 6, "ret FROM TOP -> TO P")?;
                check_arrow(&ls, line, t[3])?;
                let (q, z, r) = (st(line, t[1])?, sk(line, t[2])?, st(line, t[4])?);
                m.ret[q][z].push((r, prob(t[5])?));
            }
        }
    }
    m.normalize();
    let report = validate_pvpa(&m);
    if !report.is_valid() {
        return Err(Error::Invalid(format!("{file}: {}", report.problems.join("; "))));
    }
    Ok(m)
}

pub fn write_pvpa(m: &Pvpa) -> String {
    let mut s = String::from("pvpa\n");
    if m.stack.len() > 1 {
        writeln!(s, "stack {}", m.stack[1..].join(" ")).unwrap();
    }
    for (i, name) in m.states.iter().enumerate() {
        match &m.priority {
            Some(p) => writeln!(s, "state {name} {} priority {}", m.labels[i], p[i]).unwrap(),
            None => writeln!(s, "state {name} {}", m.labels[i]).unwrap(),
        }
    }
    writeln!(s, "init {}", m.states[m.initial]).unwrap();
    for q in 0..m.num_states() {
        for (r, z, p) in &m.call[q] {
            writeln!(s, "call {} -> {} {} {}", m.states[q], m.states[*r], m.stack[*z], render_prob(p)).unwrap();
        }
        for (r, p) in &m.int[q] {
            writeln!(s, "int {} -> {} {}", m.states[q], m.states[*r], render_prob(p)).unwrap();
        }
        for (z, row) in m.ret[q].iter().enumerate() {
            for (r, p) in row {
                writeln!(s, "ret {} {} -> {} {}", m.states[q], m.stack[z], m.states[*r], render_prob(p)).unwrap();
            }
        }
    }
    s
}

pub fn parse_vpa(text: &str, file: &str) -> Result<Vpa> {
    let ls = Lines::new(text, file);
    let mut it = ls.items.iter();
    let deterministic = match it.next() {
        Some((_, t)) if t == &["dvpa"] => true,
        Some((_, t)) if t == &["nvpa"] => false,
        Some((l, _)) => return Err(ls.err(*l, "expected header `dvpa` or `nvpa`")),
        None => return Err(ls.err(1, "empty file")),
    };
    let mut ap: BTreeSet<String> = BTreeSet::new();
    let mut symbols: Vec<(String, Symbol)> = Vec::new();
    let mut stack = vec!["bot".to_string()];
    let mut states: Vec<String> = Vec::new();
    let mut prio: Vec<Option<u32>> = Vec::new();
    let mut acc: Vec<bool> = Vec::new();
    let mut init = None;
    let mut trans = Vec::new();
    for (line, toks) in it {
        let line = *line;
        match toks[0] {
            "ap" => ap.extend(toks[1..].iter().map(|s| s.to_string())),
            "symbol" => {
                expect_len(&ls, line, toks, 3, "symbol NAME TOKEN")?;
                let sym = Symbol::parse(toks[2]).ok_or_else(|| ls.err(line, format!("bad symbol `{}`", toks[2])))?;
                symbols.push((toks[1].to_string(), sym));
            }
            "stack" => stack.extend(toks[1..].iter().map(|s| s.to_string())),
            "state" => {
                if states.iter().any(|s| s == toks[1]) {
                    return Err(ls.err(line, format!("duplicate state `{}`", toks[1])));
                }
                states.push(toks[1].to_string());
                match &toks[2..] {
                    [] => {
                        prio.push(None);
                        acc.push(false);
                    }
                    ["accepting"] => {
                        prio.push(None);
                        acc.push(true);
                    }
                    ["priority", p] => {
                        prio.push(Some(p.parse().map_err(|_| ls.err(line, format!("bad priority `{p}`")))?));
                        acc.push(false);
                    }
                    _ => return Err(ls.err(line, "expected `state NAME [priority N | accepting]`")),
                }
            }
            "init" => {
                expect_len(&ls, line, toks, 2, "init NAME")?;
                init = Some((line, toks[1].to_string()));
            }
            "call" | "int" | "ret" => trans.push((line, toks.clone())),
            other => return Err(ls.err(line, format!("unknown keyword `{other}`"))),
        }
    }
    let alphabet = if symbols.is_empty() {
        Alphabet::full(&ap)
    } else {
        for (_, s) in &symbols {
            if let Some(p) = s.props.iter().find(|p| !ap.is_empty() && !ap.contains(*p)) {
                return Err(Error::Invalid(format!("{file}: symbol {s} uses atom `{p}` outside `ap`")));
            }
        }
        Alphabet::new(symbols).map_err(|e| Error::Invalid(format!("{file}: {e}")))?
    };
    let (iline, iname) = init.ok_or_else(|| ls.err(ls.items.last().map_or(1, |x| x.0), "missing `init`"))?;
    let st = |line: usize, n: &str| {
        states.iter().position(|s| s == n).ok_or_else(|| ls.err(line, format!("unknown state `{n}`")))
    };
    let syms = |line: usize, n: &str, class: Class| -> Result<Vec<usize>> {
        if n == "*" {
            return Ok(alphabet.of_class(class).collect());
        }
        let i = alphabet.by_token(n).ok_or_else(|| ls.err(line, format!("unknown symbol `{n}`")))?;
        if alphabet.class_of(i) != class {
            return Err(ls.err(line, format!("symbol `{n}` is not a {} symbol", class.keyword())));
        }
        Ok(vec![i])
    };
    let tops = |line: usize, n: &str| -> Result<Vec<usize>> {
        if n == "*" {
            return Ok((0..stack.len()).collect());
        }
        stack.iter().position(|s| s == n).map(|i| vec![i]).ok_or_else(|| ls.err(line, format!("unknown stack symbol `{n}`")))
    };
    let mut a = Vpa {
        initial: st(iline, &iname)?,
        alphabet: alphabet.clone(),
        states: states.clone(),
        stack: stack.clone(),
        calls: Vec::new(),
        ints: Vec::new(),
        rets: Vec::new(),
        acceptance: Acceptance::Buchi(acc.clone()),
    };
    for (line, t) in trans {
        match t[0] {
            "call" => {
                expect_len(&ls, line, &t, 6, "call FROM SYM -> TO Z")?;
                check_arrow(&ls, line, t[3])?;
                let (from, to) = (st(line, t[1])?, st(line, t[4])?);
                let push = tops(line, t[5])?;
                if push.len() != 1 {
                    return Err(ls.err(line, "a call pushes exactly one symbol"));
                }
                for sym in syms(line, t[2], Class::Call)? {
                    a.calls.push(CallEdge { from, sym, to, push: push[0] });
                }
            }
            "int" => {
                expect_len(&ls, line, &t, 5, "int FROM SYM -> TO")?;
                check_arrow(&ls, line, t[3])?;
                let (from, to) = (st(line, t[1])?, st(line, t[4])?);
                for sym in syms(line, t[2], Class::Int)? {
                    a.ints.push(IntEdge { from, sym, to });
                }
            }
            _ => {
                expect_len(&ls, line, &t, 6, "ret FROM SYM TOP -> TO")?;
                check_arrow(&ls, line, t[4])?;
                let (from, to) = (st(line, t[1])?, st(line, t[5])?);
                for sym in syms(line, t[2], Class::Ret)? {
                    for top in tops(line, t[3])? {
                        a.rets.push(RetEdge { from, sym, top, to });
                    }
                }
            }
        }
    }
    if deterministic {
        if prio.iter().any(Option::is_none) {
            return Err(Error::Invalid(format!("{file}: every state of a dvpa needs a priority")));
        }
        a.acceptance = Acceptance::Parity(prio.into_iter().map(Option::unwrap).collect());
    } else if prio.iter().any(Option::is_some) {
        return Err(Error::Invalid(format!("{file}: nvpa states are marked `accepting`, not with priorities")));
    }
    a.normalize();
    let report = validate_automaton(&a, deterministic);
    if !report.is_valid() {
        return Err(Error::Invalid(format!("{file}: {}", report.messages().join("; "))));
    }
    Ok(a)
}

pub fn write_vpa(a: &Vpa) -> String {
    let mut s = String::new();
    let det = matches!(a.acceptance, Acceptance::Parity(_));
    s.push_str(if det { "dvpa\n" } else { "nvpa\n" });
    let atoms = a.alphabet.atoms();
    if !atoms.is_empty() {
        writeln!(s, "ap {}", atoms.into_iter().collect::<Vec<_>>().join(" ")).unwrap();
    }
    for i in 0..a.alphabet.len() {
        writeln!(s, "symbol {} {}", a.alphabet.name(i), a.alphabet.symbol(i)).unwrap();
    }
    if a.stack.len() > 1 {
        writeln!(s, "stack {}", a.stack[1..].join(" ")).unwrap();
    }
    for (i, name) in a.states.iter().enumerate() {
        match &a.acceptance {
            Acceptance::Parity(p) => writeln!(s, "state {name} priority {}", p[i]).unwrap(),
            Acceptance::Buchi(f) if f[i] => writeln!(s, "state {name} accepting").unwrap(),
            Acceptance::Buchi(_) => writeln!(s, "state {name}").unwrap(),
        }
    }
    writeln!(s, "init {}", a.states[a.initial]).unwrap();
    let sym = |i: usize| a.alphabet.name(i);
    for e in &a.calls {
        writeln!(s, "call {} {} -> {} {}", a.states[e.from], sym(e.sym), a.states[e.to], a.stack[e.push]).unwrap();
    }
    for e in &a.ints {
        writeln!(s, "int {} {} -> {}", a.states[e.from], sym(e.sym), a.states[e.to]).unwrap();
    }
    for e in &a.rets {
        writeln!(s, "ret {} {} {} -> {}", a.states[e.from], sym(e.sym), a.stack[e.top], a.states[e.to]).unwrap();
    }
    s
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { file: path.display().to_string(), line: 0, msg: e.to_string() })
}

pub fn load_pvpa(path: impl AsRef<Path>) -> Result<Pvpa> {
    let p = path.as_ref();
    parse_pvpa(&read(p)?, &p.display().to_string())
}

pub fn load_vpa(path: impl AsRef<Path>) -> Result<Vpa> {
    let p = path.as_ref();
    parse_vpa(&read(p)?, &p.display().to_string())
}

/// The bundled example models, by file name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig3.dvpa", include_str!("../models/fig3.dvpa")),
    ("repbdd.dvpa", include_str!("../models/repbdd.dvpa")),
    ("repbdd.nvpa", include_str!("../models/repbdd.nvpa")),
    ("fig4.pvpa", include_str!("../models/fig4.pvpa")),
    ("fig6.pvpa", include_str!("../models/fig6.pvpa")),
    ("fig7.pvpa", include_str!("../models/fig7.pvpa")),
    ("golden.pvpa", include_str!("../models/golden.pvpa")),
    ("radical-free.pvpa", include_str!("../models/radical-free.pvpa")),
    ("push-only.pvpa", include_str!("../models/push-only.pvpa")),
    ("infection.pvpa", include_str!("../models/infection.pvpa")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_pvpa(name: &str) -> Result<Pvpa> {
    parse_pvpa(bundled(name).ok_or_else(|| Error::Invalid(format!("no bundled model `{name}`")))?, name)
}

pub fn bundled_vpa(name: &str) -> Result<Vpa> {
    parse_vpa(bundled(name).ok_or_else(|| Error::Invalid(format!("no bundled automaton `{name}`")))?, name)
}
