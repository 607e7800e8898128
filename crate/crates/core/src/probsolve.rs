//! Return and divergence probabilities of a pVPA.
//!
//! The solver works with first-pop probabilities: for a non-return state `q`
//! and a return state `t`, `y(q, t)` is the probability that a run started in
//! `q` above some stack symbol first pops that symbol from state `t`. These
//! do not depend on the symbol, and
//!
//! - `ret(q, Z, r) = sum_t y(q, t) * Pret(t, Z, r)`,
//! - `div(q) = 1 - sum_t y(q, t)`.
//!
//! The `y` are the least nonnegative solution of a quadratic system, solved
//! strongly connected component by component. Linear components are solved
//! exactly. Nonlinear ones are solved numerically, then either recognised
//! as rationals (exact fixed point plus a spectral-radius certificate that
//! it is the least one) or enclosed in a certified interval.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::alphabet::Class;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pvpa::{Prob, Pvpa};

pub type Rat = BigRational;

pub const TOL_ENV: &str = "CARETPROB_TOL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Newton,
    Kleene,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Backend> {
        match s {
            "exact" => Ok(Backend::Exact),
            "newton" => Ok(Backend::Newton),
            "kleene" => Ok(Backend::Kleene),
            _ => Err(Error::Invalid(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub backend: Backend,
    pub tol: f64,
    /// Iteration cap per component.
    pub max_iter: usize,
    /// Use the one-counter procedure for divergence signs when applicable.
    pub pvoc_fast_path: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        let tol = std::env::var(TOL_ENV).ok().and_then(|s| s.parse::<f64>().ok()).filter(|t| *t > 0.0).unwrap_or(1e-12);
        SolveOptions { backend: Backend::Exact, tol, max_iter: 1_000_000, pvoc_fast_path: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Zero,
    Positive,
    Undecided,
}

/// An exact probability or a certified enclosure of one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Exact(Rat),
    Interval(Rat, Rat),
}

fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

impl Value {
    pub fn zero() -> Value {
        Value::Exact(Rat::zero())
    }

    pub fn one() -> Value {
        Value::Exact(Rat::one())
    }

    pub fn interval(lo: Rat, hi: Rat) -> Value {
        if lo == hi {
            Value::Exact(lo)
        } else {
            Value::Interval(lo, hi)
        }
    }

    pub fn lo(&self) -> &Rat {
        match self {
            Value::Exact(x) | Value::Interval(x, _) => x,
        }
    }

    pub fn hi(&self) -> &Rat {
        match self {
            Value::Exact(x) | Value::Interval(_, x) => x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Value::Exact(_))
    }

    pub fn exact(&self) -> Option<&Rat> {
        match self {
            Value::Exact(x) => Some(x),
            Value::Interval(..) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        ((self.lo() + self.hi()) / rat(2, 1)).to_f64().unwrap_or(f64::NAN)
    }

    pub fn width(&self) -> f64 {
        (self.hi() - self.lo()).to_f64().unwrap_or(f64::INFINITY)
    }

    pub fn sign(&self) -> Sign {
        if self.hi().is_zero() {
            Sign::Zero
        } else if self.lo().is_positive() {
            Sign::Positive
        } else {
            Sign::Undecided
        }
    }

    pub fn add(&self, o: &Value) -> Value {
        Value::interval(self.lo() + o.lo(), self.hi() + o.hi())
    }

    /// Product of two nonnegative values.
    pub fn mul(&self, o: &Value) -> Value {
        Value::interval(self.lo() * o.lo(), self.hi() * o.hi())
    }

    pub fn scale(&self, p: &Rat) -> Value {
        Value::interval(self.lo() * p, self.hi() * p)
    }

    pub fn sub(&self, o: &Value) -> Value {
        Value::interval(self.lo() - o.hi(), self.hi() - o.lo())
    }

    /// Quotient of nonnegative values; `None` unless the divisor is
    /// certainly positive.
    pub fn div(&self, o: &Value) -> Option<Value> {
        if !o.lo().is_positive() {
            return None;
        }
        Some(Value::interval(self.lo() / o.hi(), self.hi() / o.lo()))
    }

    pub fn clamp01(&self) -> Value {
        let c = |x: &Rat| x.clone().max(Rat::zero()).min(Rat::one());
        Value::interval(c(self.lo()), c(self.hi()))
    }

    pub fn contains(&self, x: &Rat) -> bool {
        self.lo() <= x && x <= self.hi()
    }
}

pub fn render_rat(x: &Rat) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(x) => f.write_str(&render_rat(x)),
            Value::Interval(lo, hi) => {
                let (l, h) = (lo.to_f64().unwrap_or(f64::NAN), hi.to_f64().unwrap_or(f64::NAN));
                write!(f, "{:.15} +- {:.3e}", (l + h) / 2.0, (h - l) / 2.0)
            }
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        match self {
            Value::Exact(x) => {
                m.serialize_entry("repr", "exact")?;
                m.serialize_entry("value", &render_rat(x))?;
            }
            Value::Interval(lo, hi) => {
                m.serialize_entry("repr", "interval")?;
                m.serialize_entry("lo", &format!("{:.17}", lo.to_f64().unwrap_or(f64::NAN)))?;
                m.serialize_entry("hi", &format!("{:.17}", hi.to_f64().unwrap_or(f64::NAN)))?;
                m.serialize_entry("value", &format!("{:.17}", self.to_f64()))?;
                m.serialize_entry("radius", &format!("{:.3e}", self.width() / 2.0))?;
            }
        }
        m.end()
    }
}

/// Polynomial of degree at most two with rational coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    pub constant: Rat,
    pub linear: BTreeMap<usize, Rat>,
    pub quadratic: BTreeMap<(usize, usize), Rat>,
}

impl Poly {
    fn add_const(&mut self, c: Rat) {
        self.constant += c;
    }

    fn add_lin(&mut self, v: usize, c: Rat) {
        *self.linear.entry(v).or_insert_with(Rat::zero) += c;
    }

    fn add_quad(&mut self, a: usize, b: usize, c: Rat) {
        let key = if a <= b { (a, b) } else { (b, a) };
        *self.quadratic.entry(key).or_insert_with(Rat::zero) += c;
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.linear.keys().copied().chain(self.quadratic.keys().flat_map(|&(a, b)| [a, b]))
    }

    pub fn eval(&self, x: &[Rat]) -> Rat {
        let mut s = self.constant.clone();
        for (&v, c) in &self.linear {
            s += c * &x[v];
        }
        for (&(a, b), c) in &self.quadratic {
            s += c * &x[a] * &x[b];
        }
        s
    }
}

#[derive(Clone, Copy)]
enum Y {
    Zero,
    One,
    Var(usize),
}

/// The first-pop system of a pVPA.
#[derive(Clone, Debug)]
pub struct PolySystem {
    /// Return states, in index order.
    pub ret_states: Vec<usize>,
    /// `(q, t)` per variable, `t` an index into `ret_states`.
    pub vars: Vec<(usize, usize)>,
    pub equations: Vec<Poly>,
    /// `support[q][t]`: whether `y(q, t) > 0`.
    pub support: Vec<Vec<bool>>,
}

impl PolySystem {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// Which `y(q, t)` are positive, by saturation.
pub fn first_pop_support(m: &Pvpa) -> (Vec<usize>, Vec<Vec<bool>>) {
    let n = m.num_states();
    let rets: Vec<usize> = m.of_class(Class::Ret).collect();
    let mut tix = vec![usize::MAX; n];
    for (i, &t) in rets.iter().enumerate() {
        tix[t] = i;
    }
    let k = rets.len();
    let mut pos = vec![vec![false; k]; n];
    for (i, &t) in rets.iter().enumerate() {
        pos[t][i] = true;
    }
    let pos_prob = |p: &Prob| p.is_positive();
    loop {
        let mut changed = false;
        for q in 0..n {
            for t in 0..k {
                if pos[q][t] {
                    continue;
                }
                let hit = match m.class[q] {
                    Class::Ret => false,
                    Class::Int => m.int[q].iter().any(|(q2, p)| pos_prob(p) && pos[*q2][t]),
                    Class::Call => m.call[q].iter().any(|(q2, z, p)| {
                        pos_prob(p)
                            && (0..k).any(|t2| {
                                pos[*q2][t2]
                                    && m.ret[rets[t2]][*z].iter().any(|(u, pr)| pos_prob(pr) && pos[*u][t])
                            })
                    }),
                };
                if hit {
                    pos[q][t] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return (rets, pos);
        }
    }
}

pub fn build_system(m: &Pvpa) -> PolySystem {
    let n = m.num_states();
    let (rets, support) = first_pop_support(m);
    let k = rets.len();
    let mut var_of = HashMap::new();
    let mut vars = Vec::new();
    for q in 0..n {
        if m.class[q] == Class::Ret {
            continue;
        }
        for t in 0..k {
            if support[q][t] {
                var_of.insert((q, t), vars.len());
                vars.push((q, t));
            }
        }
    }
    let y = |q: usize, t: usize| -> Y {
        if m.class[q] == Class::Ret {
            if rets[t] == q {
                Y::One
            } else {
                Y::Zero
            }
        } else {
            var_of.get(&(q, t)).map_or(Y::Zero, |&v| Y::Var(v))
        }
    };
    let mut equations = Vec::with_capacity(vars.len());
    for &(q, t) in &vars {
        let mut p = Poly::default();
        let mut term = |c: Rat, a: Y, b: Y| match (a, b) {
            (Y::Zero, _) | (_, Y::Zero) => {}
            (Y::One, Y::One) => p.add_const(c),
            (Y::One, Y::Var(v)) | (Y::Var(v), Y::One) => p.add_lin(v, c),
            (Y::Var(v), Y::Var(w)) => p.add_quad(v, w, c),
        };
        match m.class[q] {
            Class::Int => {
                for (q2, pr) in &m.int[q] {
                    term(pr.clone(), Y::One, y(*q2, t));
                }
            }
            Class::Call => {
                for (q2, z, pr) in &m.call[q] {
                    for t2 in 0..k {
                        if !support[*q2][t2] {
                            continue;
                        }
                        for (u, pret) in &m.ret[rets[t2]][*z] {
                            term(pr * pret, y(*q2, t2), y(*u, t));
                        }
                    }
                }
            }
            Class::Ret => unreachable!(),
        }
        p.linear.retain(|_, c| !c.is_zero());
        p.quadratic.retain(|_, c| !c.is_zero());
        equations.push(p);
    }
    PolySystem { ret_states: rets, vars, equations, support }
}

/// Positive iff the run from `q` above `z` can pop it into `r`.
pub fn sign_of_return(m: &Pvpa, q: usize, z: usize, r: usize) -> Sign {
    let (rets, pos) = first_pop_support(m);
    let hit = rets
        .iter()
        .enumerate()
        .any(|(i, &t)| pos[q][i] && m.ret[t][z].iter().any(|(u, p)| *u == r && p.is_positive()));
    if hit {
        Sign::Positive
    } else {
        Sign::Zero
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveStats {
    pub variables: usize,
    pub components: usize,
    pub nonlinear_components: usize,
    pub exact_components: usize,
    pub iterations: usize,
    /// Largest `|f(x) - x|` over all equations at the reported midpoints.
    pub max_residual: f64,
}

/// Return and divergence probabilities of every state.
#[derive(Clone, Debug)]
pub struct ReturnTable {
    pub ret_states: Vec<usize>,
    /// `first_pop[q][t]` for `t` indexing `ret_states`.
    pub first_pop: Vec<Vec<Value>>,
    pub support: Vec<Vec<bool>>,
    pub div: Vec<Value>,
    pub div_sign: Vec<Sign>,
    pub stats: SolveStats,
    ret_rows: Vec<Vec<Vec<(usize, Prob)>>>,
    stack_len: usize,
}

impl ReturnTable {
    /// `[q Z -> r]`: probability of popping `z` into `r`.
    pub fn ret(&self, q: usize, z: usize, r: usize) -> Value {
        let mut acc = Value::zero();
        for (i, &t) in self.ret_states.iter().enumerate() {
            if !self.support[q][i] {
                continue;
            }
            for (u, p) in &self.ret_rows[t][z] {
                if *u == r {
                    acc = acc.add(&self.first_pop[q][i].scale(p));
                }
            }
        }
        acc.clamp01()
    }

    pub fn ret_sign(&self, q: usize, z: usize, r: usize) -> Sign {
        let hit = self.ret_states.iter().enumerate().any(|(i, &t)| {
            self.support[q][i] && self.ret_rows[t][z].iter().any(|(u, p)| *u == r && p.is_positive())
        });
        if hit {
            Sign::Positive
        } else {
            Sign::Zero
        }
    }

    pub fn num_states(&self) -> usize {
        self.div.len()
    }

    pub fn stack_len(&self) -> usize {
        self.stack_len
    }

    /// All `(q, Z, r, value)` with a positive return probability.
    pub fn entries(&self) -> Vec<(usize, usize, usize, Value)> {
        let mut out = Vec::new();
        for q in 0..self.num_states() {
            for z in 1..self.stack_len {
                for r in 0..self.num_states() {
                    if self.ret_sign(q, z, r) == Sign::Positive {
                        out.push((q, z, r, self.ret(q, z, r)));
                    }
                }
            }
        }
        out
    }

    pub fn is_exact(&self) -> bool {
        self.first_pop.iter().flatten().all(Value::is_exact)
    }
}

/// Coefficients of a component's equations in local variable indices, with
/// everything outside the component substituted.
#[derive(Clone, Debug)]
struct Local {
    polys: Vec<Poly>,
}

#[derive(Clone, Debug)]
struct F64Poly {
    constant: f64,
    linear: Vec<(usize, f64)>,
    quadratic: Vec<(usize, usize, f64)>,
}

impl F64Poly {
    fn of(p: &Poly) -> F64Poly {
        let f = |x: &Rat| x.to_f64().unwrap_or(0.0);
        F64Poly {
            constant: f(&p.constant),
            linear: p.linear.iter().map(|(&v, c)| (v, f(c))).collect(),
            quadratic: p.quadratic.iter().map(|(&(a, b), c)| (a, b, f(c))).collect(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut s = self.constant;
        for &(v, c) in &self.linear {
            s += c * x[v];
        }
        for &(a, b, c) in &self.quadratic {
            s += c * x[a] * x[b];
        }
        s
    }
}

impl Local {
    fn is_linear(&self) -> bool {
        self.polys.iter().all(|p| p.quadratic.is_empty())
    }

    fn eval(&self, x: &[Rat]) -> Vec<Rat> {
        self.polys.iter().map(|p| p.eval(x)).collect()
    }

    fn jacobian(&self, x: &[Rat]) -> Vec<Vec<Rat>> {
        let k = self.polys.len();
        let mut j = vec![vec![Rat::zero(); k]; k];
        for (i, p) in self.polys.iter().enumerate() {
            for (&v, c) in &p.linear {
                j[i][v] += c;
            }
            for (&(a, b), c) in &p.quadratic {
                j[i][a] += c * &x[b];
                j[i][b] += c * &x[a];
            }
        }
        j
    }

    /// Exact solution of a linear component.
    fn solve_linear(&self) -> Option<Vec<Rat>> {
        let k = self.polys.len();
        let mut a = vec![vec![Rat::zero(); k]; k];
        let mut b = vec![Rat::zero(); k];
        for (i, p) in self.polys.iter().enumerate() {
            a[i][i] = Rat::one();
            for (&v, c) in &p.linear {
                a[i][v] -= c;
            }
            b[i] = p.constant.clone();
        }
        let x = linalg::solve(a, b)?;
        x.iter().all(|v| !v.is_negative()).then_some(x)
    }

    /// Spectral radius of the Jacobian at `x` is below one: `(I - J) v = 1`
    /// has a positive solution.
    fn contracts_at(&self, x: &[Rat]) -> bool {
        let j = self.jacobian(x);
        let k = j.len();
        let a: Vec<Vec<Rat>> = (0..k)
            .map(|i| (0..k).map(|c| if i == c { Rat::one() - &j[i][c] } else { -j[i][c].clone() }).collect())
            .collect();
        linalg::solve(a, vec![Rat::one(); k]).is_some_and(|v| v.iter().all(Signed::is_positive))
    }

    fn f64_polys(&self) -> Vec<F64Poly> {
        self.polys.iter().map(F64Poly::of).collect()
    }
}

fn newton_f64(polys: &[F64Poly], tol: f64, max_iter: usize) -> Option<(Vec<f64>, usize)> {
    let k = polys.len();
    let mut x = vec![0.0; k];
    for it in 1..=max_iter.min(500) {
        let fx: Vec<f64> = polys.iter().map(|p| p.eval(&x)).collect();
        let mut jm = DMatrix::<f64>::identity(k, k);
        for (i, p) in polys.iter().enumerate() {
            for &(v, c) in &p.linear {
                jm[(i, v)] -= c;
            }
            for &(a, b, c) in &p.quadratic {
                jm[(i, a)] -= c * x[b];
                jm[(i, b)] -= c * x[a];
            }
        }
        let rhs = DVector::from_iterator(k, (0..k).map(|i| fx[i] - x[i]));
        let d = jm.lu().solve(&rhs)?;
        let mut step = 0.0f64;
        for i in 0..k {
            let nx = (x[i] + d[i]).max(0.0);
            step = step.max((nx - x[i]).abs());
            x[i] = nx;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        if step <= tol * 1e-3 || step == 0.0 {
            return Some((x, it));
        }
    }
    let res = polys.iter().enumerate().map(|(i, p)| (p.eval(&x) - x[i]).abs()).fold(0.0, f64::max);
    (res < tol).then_some((x, max_iter.min(500)))
}

/// Kleene iteration from zero, rounded downwards so every iterate stays a
/// lower bound of the least solution.
fn kleene_f64(polys: &[F64Poly], tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let shrink = 1.0 - 1e-13;
    let mut x = vec![0.0; polys.len()];
    for it in 1..=max_iter {
        let nx: Vec<f64> = polys.iter().map(|p| (p.eval(&x) * shrink).max(0.0)).collect();
        let step = nx.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // Keep the sequence monotone despite rounding.
        for (xi, ni) in x.iter_mut().zip(nx) {
            *xi = xi.max(ni);
        }
        if step < tol * 1e-2 {
            return (x, it);
        }
    }
    (x, max_iter)
}

fn to_rat(x: f64) -> Rat {
    Rat::from_float(x).unwrap_or_else(Rat::zero)
}

/// Small-denominator rational within `eps` of `x`, via continued fractions.
pub fn recognize(x: f64, eps: f64, max_den: i64) -> Option<Rat> {
    if !x.is_finite() || x < 0.0 {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e12 {
            break;
        }
        let ai = a as i128;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > max_den as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= eps {
            return Some(Rat::new(BigInt::from(h1), BigInt::from(k1)));
        }
        let frac = r - a;
        if frac < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

struct SccResult {
    values: Vec<Value>,
    iterations: usize,
    exact: bool,
}

/// Direction `v > 0` with `J v < v` at `x`, used to move off the fixed point
/// so that the shifted points are strict pre- and post-fixed points.
fn slack_direction(polys: &[F64Poly], x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut jm = DMatrix::<f64>::identity(k, k);
    for (i, p) in polys.iter().enumerate() {
        for &(v, c) in &p.linear {
            jm[(i, v)] -= c;
        }
        for &(a, b, c) in &p.quadratic {
            jm[(i, a)] -= c * x[b];
            jm[(i, b)] -= c * x[a];
        }
    }
    match jm.lu().solve(&DVector::from_element(k, 1.0)) {
        Some(v) if v.iter().all(|e| e.is_finite() && *e > 0.0) => {
            let m = v.iter().copied().fold(0.0, f64::max);
            v.iter().map(|e| e / m).collect()
        }
        _ => vec![1.0; k],
    }
}

fn certify(local: &Local, approx: &[f64], opts: &SolveOptions, iterations: &mut usize) -> Vec<Value> {
    let k = approx.len();
    let polys = local.f64_polys();
    let dir = slack_direction(&polys, approx);
    let mut upper: Option<Vec<Rat>> = None;
    let mut delta = opts.tol.max(1e-14);
    while delta <= 1e-3 {
        let hi: Vec<Rat> = approx.iter().zip(&dir).map(|(&v, &d)| to_rat(v + delta * d).min(Rat::one())).collect();
        let fh = local.eval(&hi);
        if fh.iter().zip(&hi).all(|(a, b)| a <= b) {
            if upper.is_none() {
                upper = Some(hi.clone());
            }
            if local.contracts_at(&hi) {
                let lo: Vec<Rat> = approx.iter().zip(&dir).map(|(&v, &d)| to_rat((v - delta * d).max(0.0))).collect();
                let fl = local.eval(&lo);
                if fl.iter().zip(&lo).all(|(a, b)| a >= b) {
                    return lo.into_iter().zip(hi).map(|(l, h)| Value::interval(l, h)).collect();
                }
            }
        }
        delta *= 10.0;
    }
    // No uniqueness certificate: fall back to Kleene for the lower bound.
    let (lo, it) = kleene_f64(&polys, opts.tol, opts.max_iter);
    *iterations += it;
    let hi = upper.unwrap_or_else(|| vec![Rat::one(); k]);
    lo.iter().zip(hi).map(|(&l, h)| Value::interval(to_rat(l).min(h.clone()), h)).collect()
}

fn solve_local(local: &Local, opts: &SolveOptions, try_exact: bool) -> SccResult {
    if local.is_linear() {
        if let Some(x) = local.solve_linear() {
            return SccResult { values: x.into_iter().map(Value::Exact).collect(), iterations: 1, exact: true };
        }
    }
    let polys = local.f64_polys();
    let mut iterations = 0;
    let approx = match opts.backend {
        Backend::Kleene => None,
        _ => newton_f64(&polys, opts.tol, opts.max_iter),
    };
    let approx = match approx {
        Some((x, it)) => {
            iterations += it;
            x
        }
        None => {
            let (x, it) = kleene_f64(&polys, opts.tol, opts.max_iter);
            iterations += it;
            x
        }
    };
    if try_exact && opts.backend == Backend::Exact {
        let cand: Option<Vec<Rat>> = approx.iter().map(|&v| recognize(v, 1e-9, 1_000_000)).collect();
        if let Some(c) = cand {
            if local.eval(&c) == c && local.contracts_at(&c) {
                return SccResult { values: c.into_iter().map(Value::Exact).collect(), iterations, exact: true };
            }
        }
    }
    let values = certify(local, &approx, opts, &mut iterations);
    SccResult { values, iterations, exact: false }
}

/// Restricts the system to the component `scc`, substituting `pick` of the
/// known values for all other variables.
fn localize(sys: &PolySystem, scc: &[usize], known: &[Option<Value>], pick: impl Fn(&Value) -> Rat) -> Local {
    let mut local_of = HashMap::new();
    for (i, &v) in scc.iter().enumerate() {
        local_of.insert(v, i);
    }
    let val = |v: usize| pick(known[v].as_ref().expect("dependencies are solved first"));
    let polys = scc
        .iter()
        .map(|&v| {
            let eq = &sys.equations[v];
            let mut p = Poly { constant: eq.constant.clone(), ..Default::default() };
            for (&w, c) in &eq.linear {
                match local_of.get(&w) {
                    Some(&lw) => p.add_lin(lw, c.clone()),
                    None => p.add_const(c * val(w)),
                }
            }
            for (&(a, b), c) in &eq.quadratic {
                match (local_of.get(&a), local_of.get(&b)) {
                    (Some(&la), Some(&lb)) => p.add_quad(la, lb, c.clone()),
                    (Some(&la), None) => p.add_lin(la, c * val(b)),
                    (None, Some(&lb)) => p.add_lin(lb, c * val(a)),
                    (None, None) => p.add_const(c * val(a) * val(b)),
                }
            }
            p
        })
        .collect();
    Local { polys }
}

/// Solves the first-pop system of `m` and derives the return/divergence
/// table.
pub fn solve(m: &Pvpa, opts: &SolveOptions) -> Result<ReturnTable> {
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let sys = build_system(m);
    let nv = sys.len();
    let mut g = DiGraph::<(), ()>::with_capacity(nv, 0);
    for _ in 0..nv {
        g.add_node(());
    }
    for (v, eq) in sys.equations.iter().enumerate() {
        for w in eq.vars() {
            g.update_edge((v as u32).into(), (w as u32).into(), ());
        }
    }
    let mut known: Vec<Option<Value>> = vec![None; nv];
    let mut stats = SolveStats { variables: nv, ..Default::default() };
    // Tarjan yields components with their dependencies first.
    for comp in tarjan_scc(&g) {
        let scc: Vec<usize> = comp.iter().map(|n| n.index()).collect();
        stats.components += 1;
        let exact_inputs = scc
            .iter()
            .flat_map(|&v| sys.equations[v].vars())
            .filter(|w| !scc.contains(w))
            .all(|w| known[w].as_ref().is_some_and(Value::is_exact));
        let result = if exact_inputs {
            let local = localize(&sys, &scc, &known, |v| v.lo().clone());
            if !local.is_linear() {
                stats.nonlinear_components += 1;
            }
            solve_local(&local, opts, true)
        } else {
            let lo_sys = localize(&sys, &scc, &known, |v| v.lo().clone());
            let hi_sys = localize(&sys, &scc, &known, |v| v.hi().clone());
            if !lo_sys.is_linear() {
                stats.nonlinear_components += 1;
            }
            let a = solve_local(&lo_sys, opts, false);
            let b = solve_local(&hi_sys, opts, false);
            let values = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| Value::interval(x.lo().clone(), y.hi().clone().min(Rat::one()).max(x.lo().clone())))
                .collect();
            SccResult { values, iterations: a.iterations + b.iterations, exact: false }
        };
        stats.iterations += result.iterations;
        if result.exact {
            stats.exact_components += 1;
        }
        for (&v, val) in scc.iter().zip(result.values) {
            known[v] = Some(val.clamp01());
        }
    }
    let values: Vec<Value> = known.into_iter().map(|v| v.expect("all components solved")).collect();
    let mids: Vec<f64> = values.iter().map(Value::to_f64).collect();
    stats.max_residual = sys
        .equations
        .iter()
        .enumerate()
        .map(|(v, eq)| (F64Poly::of(eq).eval(&mids) - mids[v]).abs())
        .fold(0.0, f64::max);

    let n = m.num_states();
    let k = sys.ret_states.len();
    let mut first_pop = vec![vec![Value::zero(); k]; n];
    for (i, &t) in sys.ret_states.iter().enumerate() {
        first_pop[t][i] = Value::one();
    }
    for (v, &(q, t)) in sys.vars.iter().enumerate() {
        first_pop[q][t] = values[v].clone();
    }
    let mut div = Vec::with_capacity(n);
    for q in 0..n {
        let total = first_pop[q].iter().fold(Value::zero(), |a, b| a.add(b));
        div.push(Value::one().sub(&total).clamp01());
    }
    let mut div_sign: Vec<Sign> = div.iter().map(Value::sign).collect();
    if opts.pvoc_fast_path {
        if let Some(signs) = pvoc_div_signs(m) {
            div_sign = signs;
        }
    }
    let mut ret_rows = vec![Vec::new(); n];
    for &t in &sys.ret_states {
        ret_rows[t] = m.ret[t].clone();
    }
    Ok(ReturnTable {
        ret_states: sys.ret_states,
        first_pop,
        support: sys.support,
        div,
        div_sign,
        stats,
        ret_rows,
        stack_len: m.stack.len(),
    })
}

/// Divergence signs of a one-counter model from the drift of the bottom
/// strongly connected components of its counter-free projection. `None`
/// when the model has more than one non-bottom stack symbol.
pub fn pvoc_div_signs(m: &Pvpa) -> Option<Vec<Sign>> {
    if !m.is_one_counter() {
        return None;
    }
    let n = m.num_states();
    let z = 1;
    let mut g = DiGraph::<(), Prob>::new();
    for _ in 0..n {
        g.add_node(());
    }
    let mut rows: Vec<Vec<(usize, Prob)>> = vec![Vec::new(); n];
    for q in 0..n {
        match m.class[q] {
            Class::Call => rows[q] = m.call[q].iter().map(|(t, _, p)| (*t, p.clone())).collect(),
            Class::Int => rows[q] = m.int[q].clone(),
            Class::Ret => rows[q] = m.ret[q][z].clone(),
        }
        for (t, p) in &rows[q] {
            if p.is_positive() {
                g.update_edge((q as u32).into(), (*t as u32).into(), p.clone());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0; n];
    for (i, c) in sccs.iter().enumerate() {
        for v in c {
            comp[v.index()] = i;
        }
    }
    let effect = |q: usize| -> i64 {
        match m.class[q] {
            Class::Call => 1,
            Class::Int => 0,
            Class::Ret => -1,
        }
    };
    // `threshold[q]`: the least height above the starting level at which
    // a run sitting in `q` escapes with positive probability, if any.
    let mut threshold: Vec<Option<i64>> = vec![None; n];
    for (ci, c) in sccs.iter().enumerate() {
        let members: Vec<usize> = c.iter().map(|v| v.index()).collect();
        let closed = members.iter().all(|&q| rows[q].iter().all(|(t, p)| !p.is_positive() || comp[*t] == ci));
        if !closed {
            continue;
        }
        let idx: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &q)| (q, i)).collect();
        let mut p = vec![vec![Rat::zero(); members.len()]; members.len()];
        for (i, &q) in members.iter().enumerate() {
            for (t, pr) in &rows[q] {
                p[i][idx[t]] += pr;
            }
        }
        let pi = linalg::stationary(&p)?;
        let drift = members.iter().enumerate().fold(Rat::zero(), |d, (i, &q)| d + &pi[i] * Rat::from_integer(effect(q).into()));
        if drift.is_positive() {
            // Some state carries a cycle that climbs without dipping; from
            // this height any member can reach it first.
            for &q in &members {
                threshold[q] = Some(n as i64);
            }
        } else if drift.is_zero() {
            // Escape needs the height to be a function of the state, and the
            // lowest return to stay above the starting level.
            let mut pot: HashMap<usize, i64> = HashMap::new();
            pot.insert(members[0], 0);
            let mut work = vec![members[0]];
            let mut consistent = true;
            while let Some(q) = work.pop() {
                let h = pot[&q] + effect(q);
                for (t, pr) in &rows[q] {
                    if !pr.is_positive() {
                        continue;
                    }
                    match pot.get(t) {
                        Some(&x) if x != h => consistent = false,
                        Some(_) => {}
                        None => {
                            pot.insert(*t, h);
                            work.push(*t);
                        }
                    }
                }
            }
            if consistent {
                let low = members.iter().filter(|&&q| m.class[q] == Class::Ret).map(|q| pot[q]).min();
                for &q in &members {
                    threshold[q] = Some(low.map_or(0, |l| (pot[&q] - l + 1).max(0)));
                }
            }
        }
    }
    // Search over (state, height above the start) with the height
    // saturated at a bound past every threshold. Saturation only lowers the
    // tracked height, so any escape found is real.
    let cap = (n * n + n) as i64;
    let mut out = Vec::with_capacity(n);
    for q0 in 0..n {
        let width = cap as usize + 1;
        let mut seen = vec![false; n * width];
        let mut stack = vec![(q0, 0i64)];
        seen[q0 * width] = true;
        let mut found = false;
        while let Some((q, h)) = stack.pop() {
            if threshold[q].is_some_and(|t| h >= t) {
                found = true;
                break;
            }
            let next: Vec<(usize, i64)> = match m.class[q] {
                Class::Int => m.int[q].iter().filter(|(_, p)| p.is_positive()).map(|(t, _)| (*t, h)).collect(),
                Class::Call => m.call[q].iter().filter(|(_, _, p)| p.is_positive()).map(|(t, _, _)| (*t, (h + 1).min(cap))).collect(),
                Class::Ret if h > 0 => m.ret[q][z].iter().filter(|(_, p)| p.is_positive()).map(|(t, _)| (*t, h - 1)).collect(),
                Class::Ret => Vec::new(),
            };
            for (t, h) in next {
                let k = t * width + h as usize;
                if !seen[k] {
                    seen[k] = true;
                    stack.push((t, h));
                }
            }
        }
        out.push(if found { Sign::Positive } else { Sign::Zero });
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::bundled_pvpa;

    fn q(n: i64, d: i64) -> Rat {
        rat(n, d)
    }

    fn exact(v: &Value) -> Rat {
        v.exact().cloned().unwrap_or_else(|| panic!("expected an exact value, got {v}"))
    }

    #[test]
    fn fig7_exact() {
        let m = bundled_pvpa("fig7.pvpa").unwrap();
        let t = solve(&m, &SolveOptions::default()).unwrap();
        let (tau, r, c) = (0, 1, 2);
        assert_eq!(exact(&t.ret(c, 1, c)), q(1, 6));
        assert_eq!(exact(&t.ret(c, 1, r)), q(1, 12));
        assert_eq!(exact(&t.ret(r, 1, r)), q(1, 3));
        assert_eq!(exact(&t.ret(r, 1, c)), q(2, 3));
        assert_eq!(exact(&t.div[c]), q(3, 4));
        assert_eq!(exact(&t.div[tau]), q(1, 2));
        assert_eq!(exact(&t.div[r]), q(0, 1));
        assert_eq!(t.ret_sign(c, 1, tau), Sign::Zero);
    }

    #[test]
    fn fig4_least_root() {
        let m = bundled_pvpa("fig4.pvpa").unwrap();
        let t = solve(&m, &SolveOptions::default()).unwrap();
        // Both 1/2 and 1 solve the equation; the least one is reported.
        assert_eq!(exact(&t.first_pop[0][0]), q(1, 2));
        assert_eq!(t.div_sign[0], Sign::Positive);
    }

    #[test]
    fn golden_enclosed() {
        let m = bundled_pvpa("golden.pvpa").unwrap();
        for backend in [Backend::Exact, Backend::Newton, Backend::Kleene] {
            let t = solve(&m, &SolveOptions { backend, ..Default::default() }).unwrap();
            let v = t.ret(0, 1, 0);
            let want = (5f64.sqrt() - 1.0) / 2.0;
            assert!((v.to_f64() - want).abs() < 1e-9, "{backend:?}: {v}");
            assert!(v.lo().to_f64().unwrap() <= want + 1e-15 && want - 1e-15 <= v.hi().to_f64().unwrap());
            assert!(v.width() < 1e-9);
        }
    }

    #[test]
    fn push_only_never_returns() {
        let m = bundled_pvpa("push-only.pvpa").unwrap();
        let t = solve(&m, &SolveOptions::default()).unwrap();
        assert!(t.entries().is_empty());
        assert_eq!(t.div[0], Value::one());
        assert_eq!(pvoc_div_signs(&m).unwrap(), vec![Sign::Positive]);
    }

    #[test]
    fn linear_system_is_exact() {
        let m = bundled_pvpa("fig6.pvpa").unwrap();
        let t = solve(&m, &SolveOptions { backend: Backend::Kleene, ..Default::default() }).unwrap();
        assert!(t.is_exact());
        assert_eq!(exact(&t.div[1]), q(1, 2));
    }

    #[test]
    fn one_counter_signs_track_height() {
        // `b` pops straight away even though its component climbs; `a`
        // pushes and pops forever without reaching below its own level.
        let text = "pvpa\nstack Z\nstate b int{}\nstate r ret{}\nstate c call{}\nstate a call{}\nstate s ret{}\ninit b\n\
                    int b -> r 1\nret r Z -> c 1\nret r bot -> b 1\ncall c -> c Z 1/2\ncall c -> b Z 1/2\n\
                    call a -> s Z 1\nret s Z -> a 1\nret s bot -> a 1\n";
        let m = crate::format::parse_pvpa(text, "t").unwrap();
        let t = solve(&m, &SolveOptions::default()).unwrap();
        let want = vec![Sign::Zero, Sign::Zero, Sign::Positive, Sign::Positive, Sign::Zero];
        assert_eq!(t.div_sign, want);
        assert_eq!(pvoc_div_signs(&m).unwrap(), want);
    }

    #[test]
    fn one_counter_signs_match_generic() {
        for name in ["fig4.pvpa", "fig6.pvpa", "fig7.pvpa", "golden.pvpa", "radical-free.pvpa"] {
            let m = bundled_pvpa(name).unwrap();
            let t = solve(&m, &SolveOptions::default()).unwrap();
            assert_eq!(pvoc_div_signs(&m).unwrap(), t.div_sign, "{name}");
        }
        assert!(pvoc_div_signs(&bundled_pvpa("infection.pvpa").unwrap()).is_none());
    }

    #[test]
    fn recognizes_small_fractions() {
        assert_eq!(recognize(0.25, 1e-12, 1000), Some(q(1, 4)));
        assert_eq!(recognize(1.0 / 12.0, 1e-12, 1000), Some(q(1, 12)));
        assert_eq!(recognize(std::f64::consts::PI - 3.0, 1e-12, 1000), None);
    }
}
