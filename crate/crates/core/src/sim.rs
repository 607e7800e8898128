//! Seeded Monte-Carlo simulation of the Markov chain generated by a pVPA,
//! used as a statistical oracle.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::Class;
use crate::error::{Error, Result};
use crate::pvpa::{validate_pvpa, ExtState, Prob, Pvpa};
use crate::vpa::BOTTOM;

pub const DEFAULT_STACK_CAP: usize = 1_000_000;

/// A sampled run prefix. `heights[i]` is the number of non-bottom symbols
/// on the stack and `tops[i]` the topmost symbol in configuration `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub states: Vec<usize>,
    pub heights: Vec<usize>,
    pub tops: Vec<usize>,
    /// Positions not undercut later within the trace; provisional.
    pub steps: Vec<bool>,
    pub seed: u64,
}

struct Row<T> {
    cum: Vec<f64>,
    out: Vec<T>,
}

impl<T: Copy> Row<T> {
    fn new(entries: impl Iterator<Item = (T, f64)>) -> Row<T> {
        let mut cum = Vec::new();
        let mut out = Vec::new();
        let mut acc = 0.0;
        for (t, p) in entries {
            acc += p;
            cum.push(acc);
            out.push(t);
        }
        Row { cum, out }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> T {
        let total = *self.cum.last().expect("empty distribution");
        let x = rng.gen::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= x).min(self.out.len() - 1);
        self.out[i]
    }
}

fn f(p: &Prob) -> f64 {
    p.to_f64().unwrap_or(0.0)
}

/// Sampling tables for one model.
pub struct Simulator<'a> {
    m: &'a Pvpa,
    call: Vec<Row<(usize, usize)>>,
    int: Vec<Row<usize>>,
    ret: Vec<Vec<Row<usize>>>,
    pub stack_cap: usize,
}

/// Mutable configuration of a running simulation.
#[derive(Clone, Debug)]
pub struct Config {
    pub state: usize,
    pub stack: Vec<usize>,
}

impl Config {
    pub fn height(&self) -> usize {
        self.stack.len()
    }

    pub fn top(&self) -> usize {
        self.stack.last().copied().unwrap_or(BOTTOM)
    }
}

impl<'a> Simulator<'a> {
    pub fn new(m: &'a Pvpa) -> Result<Simulator<'a>> {
        let report = validate_pvpa(m);
        if !report.is_valid() {
            return Err(Error::Invalid(report.problems.join("; ")));
        }
        Ok(Simulator {
            m,
            call: m.call.iter().map(|r| Row::new(r.iter().map(|(t, z, p)| ((*t, *z), f(p))))).collect(),
            int: m.int.iter().map(|r| Row::new(r.iter().map(|(t, p)| (*t, f(p))))).collect(),
            ret: m.ret.iter().map(|rs| rs.iter().map(|r| Row::new(r.iter().map(|(t, p)| (*t, f(p))))).collect()).collect(),
            stack_cap: DEFAULT_STACK_CAP,
        })
    }

    pub fn model(&self) -> &Pvpa {
        self.m
    }

    /// Takes one transition. Returns at the bottom keep the bottom symbol.
    pub fn step(&self, c: &mut Config, rng: &mut ChaCha8Rng) -> Result<()> {
        let q = c.state;
        match self.m.class[q] {
            Class::Call => {
                let (t, z) = self.call[q].draw(rng);
                if c.stack.len() >= self.stack_cap {
                    return Err(Error::Resource(format!("stack exceeded {} symbols", self.stack_cap)));
                }
                c.stack.push(z);
                c.state = t;
            }
            Class::Int => c.state = self.int[q].draw(rng),
            Class::Ret => {
                let top = c.top();
                c.state = self.ret[q][top].draw(rng);
                c.stack.pop();
            }
        }
        Ok(())
    }
}

/// Provisional steps of a height sequence.
pub fn provisional_steps(heights: &[usize]) -> Vec<bool> {
    let mut flags = vec![false; heights.len()];
    let mut min_after = usize::MAX;
    for i in (0..heights.len()).rev() {
        flags[i] = heights[i] <= min_after;
        min_after = min_after.min(heights[i]);
    }
    flags
}

/// Samples `horizon` transitions from the initial bottom configuration.
pub fn simulate(m: &Pvpa, seed: u64, horizon: usize) -> Result<SimTrace> {
    let sim = Simulator::new(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Config { state: m.initial, stack: Vec::new() };
    let mut t = SimTrace { states: vec![c.state], heights: vec![0], tops: vec![BOTTOM], steps: Vec::new(), seed };
    for _ in 0..horizon {
        sim.step(&mut c, &mut rng)?;
        t.states.push(c.state);
        t.heights.push(c.height());
        t.tops.push(c.top());
    }
    t.steps = provisional_steps(&t.heights);
    Ok(t)
}

/// Empirical frequency with a Wilson score interval.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub hits: u64,
    pub trials: u64,
    pub freq: f64,
    pub lo: f64,
    pub hi: f64,
    pub z: f64,
}

pub fn wilson(hits: u64, trials: u64, z: f64) -> Estimate {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Estimate { hits, trials, freq: p, lo: (centre - half).max(0.0), hi: (centre + half).min(1.0), z }
}

/// Estimates the probability that a non-bottom visit to `q` is a step, by
/// taking the first such visit within `horizon` transitions of each sample
/// and checking that it is not undercut within `lookahead` further
/// transitions. Undercuts beyond the lookahead are missed, so the estimate
/// is biased upwards by at most the probability of such late returns.
pub fn estimate_step_frequency(
    m: &Pvpa,
    q: usize,
    samples: u64,
    horizon: usize,
    lookahead: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples == 0 {
        return Err(Error::InsufficientData("no samples requested".into()));
    }
    let sim = Simulator::new(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut trials) = (0u64, 0u64);
    for _ in 0..samples {
        let mut c = Config { state: m.initial, stack: Vec::new() };
        let mut visit = None;
        for _ in 0..horizon {
            if c.state == q && c.height() > 0 {
                visit = Some(c.height());
                break;
            }
            sim.step(&mut c, &mut rng)?;
        }
        if visit.is_none() && c.state == q && c.height() > 0 {
            visit = Some(c.height());
        }
        let Some(h) = visit else { continue };
        trials += 1;
        let mut undercut = false;
        for left in (0..lookahead).rev() {
            sim.step(&mut c, &mut rng)?;
            if c.height() < h {
                undercut = true;
                break;
            }
            if c.height() > h + left {
                break;
            }
        }
        if !undercut {
            hits += 1;
        }
    }
    if trials == 0 {
        return Err(Error::InsufficientData(format!("no non-bottom visit to {} sampled", m.states[q])));
    }
    Ok(wilson(hits, trials, 3.0))
}

/// Estimates the probability of reaching `r` at the bottom from `q` with
/// `z` pushed, without an earlier bottom configuration. Runs longer than
/// `horizon` count as misses, so this is a lower estimate.
pub fn estimate_return_frequency(
    m: &Pvpa,
    q: usize,
    z: usize,
    r: usize,
    samples: u64,
    horizon: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples == 0 {
        return Err(Error::InsufficientData("no samples requested".into()));
    }
    let sim = Simulator::new(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..samples {
        let mut c = Config { state: q, stack: vec![z] };
        for _ in 0..horizon {
            sim.step(&mut c, &mut rng)?;
            if c.height() == 0 {
                if c.state == r {
                    hits += 1;
                }
                break;
            }
        }
    }
    Ok(wilson(hits, samples, 3.0))
}

/// Histogram of the first `k + 1` step states of sampled runs. Steps are
/// judged on a trace of `lookahead` transitions; samples whose `k`-th step
/// falls in the last quarter of the trace are discarded as unreliable.
pub fn sample_step_sequences(
    m: &Pvpa,
    k: usize,
    samples: u64,
    lookahead: usize,
    seed: u64,
) -> Result<BTreeMap<Vec<ExtState>, u64>> {
    let sim = Simulator::new(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = BTreeMap::new();
    let limit = lookahead - lookahead / 4;
    for _ in 0..samples {
        let mut c = Config { state: m.initial, stack: Vec::new() };
        let mut states = vec![c.state];
        let mut heights = vec![0];
        for _ in 0..lookahead {
            sim.step(&mut c, &mut rng)?;
            states.push(c.state);
            heights.push(c.height());
        }
        let steps = provisional_steps(&heights);
        let seq: Vec<ExtState> = (0..=limit)
            .filter(|&i| steps[i])
            .take(k + 1)
            .map(|i| ExtState { state: states[i], bottom: heights[i] == 0 })
            .collect();
        if seq.len() == k + 1 {
            *hist.entry(seq).or_insert(0) += 1;
        }
    }
    Ok(hist)
}

/// Empirical distribution of the state reached after exactly `horizon`
/// transitions, one Wilson interval per state seen.
pub fn estimate_state_distribution(m: &Pvpa, horizon: usize, samples: u64, seed: u64) -> Result<BTreeMap<usize, Estimate>> {
    if samples == 0 {
        return Err(Error::InsufficientData("no samples requested".into()));
    }
    let sim = Simulator::new(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..samples {
        let mut c = Config { state: m.initial, stack: Vec::new() };
        for _ in 0..horizon {
            sim.step(&mut c, &mut rng)?;
        }
        *counts.entry(c.state).or_insert(0) += 1;
    }
    Ok(counts.into_iter().map(|(q, h)| (q, wilson(h, samples, 3.0))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvpa::tests::fig4;

    #[test]
    fn horizon_zero_is_initial_configuration() {
        let t = simulate(&fig4(), 7, 0).unwrap();
        assert_eq!(t.states, vec![0]);
        assert_eq!(t.heights, vec![0]);
    }

    #[test]
    fn seeded_runs_repeat() {
        assert_eq!(simulate(&fig4(), 3, 50).unwrap(), simulate(&fig4(), 3, 50).unwrap());
    }

    #[test]
    fn bottom_return_keeps_bottom() {
        let m = fig4();
        let sim = Simulator::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = Config { state: 1, stack: vec![] };
        for _ in 0..20 {
            sim.step(&mut c, &mut rng).unwrap();
            assert_eq!((c.state, c.height()), (1, 0));
        }
    }

    #[test]
    fn fig6_branches_are_even() {
        let m = crate::format::bundled_pvpa("fig6.pvpa").unwrap();
        let d = estimate_state_distribution(&m, 4, 10_000, 5).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.values().all(|e| e.lo < 0.5 && 0.5 < e.hi));
    }

    #[test]
    fn wilson_brackets_frequency() {
        let e = wilson(30, 100, 3.0);
        assert!(e.lo < 0.3 && 0.3 < e.hi);
    }
}
