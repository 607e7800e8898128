//! Bottom SCC analysis of step chains and the model-checking pipelines.
//!
//! Quantitative queries compute the probability of reaching a good bottom
//! SCC (least priority even) of the product's step chain. Qualitative
//! queries only need the chain's underlying graph, whose divergence signs
//! are taken from the system alone: a product state diverges exactly when
//! its system component does.

use num_traits::{One, Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Serialize, Serializer};

use crate::caret::Formula;
use crate::error::{Error, Result};
use crate::linalg;
use crate::probsolve::{render_rat, solve, Rat, SolveOptions, SolveStats, Value};
use crate::product::{build_product_with, LabelMatch};
use crate::pvpa::Pvpa;
use crate::stepchain::{build_step_chain, build_step_graph, StepChain, StepGraph};
use crate::translate::{caret_to_nvpa, LazyDet};
use crate::vpa::{Acceptance, DetTables, Vpa};

/// Where a step-chain vertex stands with respect to good bottom SCCs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// No good bottom SCC is reachable (or the vertex is unreachable).
    Zero,
    /// No bad bottom SCC is reachable, so a good one is reached almost
    /// surely. Includes the good bottom SCCs themselves.
    One,
    Unknown,
}

/// Bottom SCCs of the part of a step graph reachable from its initial
/// vertex, and the induced three-way split of vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BsccPartition {
    pub bsccs: Vec<Vec<usize>>,
    pub min_priority: Vec<u32>,
    pub good: Vec<bool>,
    pub region: Vec<Region>,
}

impl BsccPartition {
    pub fn bad_reachable(&self) -> bool {
        self.good.iter().any(|g| !g)
    }
}

/// Decomposes the reachable part of `g` into SCCs and classifies its
/// bottom SCCs by the parity of their least priority.
pub fn classify_bsccs(g: &StepGraph) -> Result<BsccPartition> {
    let prio = g.priority.as_ref().ok_or_else(|| Error::Invalid("step graph has no priorities".into()))?;
    let n = g.len();
    let live = g.reachable();
    let mut dg = DiGraph::<(), ()>::with_capacity(n, 0);
    for _ in 0..n {
        dg.add_node(());
    }
    for (v, ts) in g.succ.iter().enumerate() {
        for &t in ts {
            dg.add_edge((v as u32).into(), (t as u32).into(), ());
        }
    }
    let mut comp = vec![usize::MAX; n];
    let sccs: Vec<Vec<usize>> = tarjan_scc(&dg).into_iter().map(|c| c.into_iter().map(|x| x.index()).collect()).collect();
    for (i, c) in sccs.iter().enumerate() {
        for &v in c {
            comp[v] = i;
        }
    }
    let mut bsccs = Vec::new();
    for (i, c) in sccs.iter().enumerate() {
        let closed = c.iter().all(|&v| g.succ[v].iter().all(|&t| comp[t] == i));
        if closed && live[c[0]] {
            let mut c = c.clone();
            c.sort_unstable();
            bsccs.push(c);
        }
    }
    bsccs.sort();
    let min_priority: Vec<u32> = bsccs.iter().map(|c| c.iter().map(|&v| prio[v]).min().unwrap()).collect();
    let good: Vec<bool> = min_priority.iter().map(|p| p % 2 == 0).collect();

    let mut pred = vec![Vec::new(); n];
    for (v, ts) in g.succ.iter().enumerate() {
        for &t in ts {
            pred[t].push(v);
        }
    }
    let reaches = |want: bool| {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        for (c, &ok) in bsccs.iter().zip(&good) {
            if ok == want {
                stack.extend(c);
            }
        }
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &pred[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    };
    let (to_good, to_bad) = (reaches(true), reaches(false));
    let region = (0..n)
        .map(|v| match (live[v] && to_good[v], to_bad[v]) {
            (false, _) => Region::Zero,
            (true, false) => Region::One,
            (true, true) => Region::Unknown,
        })
        .collect();
    Ok(BsccPartition { bsccs, min_priority, good, region })
}

/// Probability of reaching a good bottom SCC from the initial vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reach {
    pub value: Value,
    /// Set when an interval endpoint had to fall back to 0 or 1.
    pub widened: bool,
}

pub fn reach_probability(c: &StepChain, part: &BsccPartition) -> Reach {
    match part.region[c.initial] {
        Region::One => return Reach { value: Value::one(), widened: false },
        Region::Zero => return Reach { value: Value::zero(), widened: false },
        Region::Unknown => {}
    }
    let unknown: Vec<usize> = (0..c.len()).filter(|&v| part.region[v] == Region::Unknown).collect();
    let mut local = vec![usize::MAX; c.len()];
    for (i, &v) in unknown.iter().enumerate() {
        local[v] = i;
    }
    let k = unknown.len();
    let system = |pick: &dyn Fn(&Value) -> Rat| {
        let mut a = vec![vec![Rat::zero(); k]; k];
        let mut b = vec![Rat::zero(); k];
        for (i, &v) in unknown.iter().enumerate() {
            a[i][i] = Rat::one();
            for (t, x) in &c.rows[v] {
                match part.region[*t] {
                    Region::One => b[i] += pick(x),
                    Region::Unknown => a[i][local[*t]] -= pick(x),
                    Region::Zero => {}
                }
            }
        }
        linalg::solve(a, b).map(|x| x[local[c.initial]].clone())
    };
    let lo = system(&|x: &Value| x.lo().clone());
    if c.is_exact() {
        let x = lo.expect("transient part of a stochastic chain is nonsingular");
        return Reach { value: Value::Exact(x), widened: false };
    }
    let hi = system(&|x: &Value| x.hi().clone());
    let mut widened = false;
    let lo = match lo {
        Some(x) if !x.is_negative() => x.min(Rat::one()),
        _ => {
            widened = true;
            Rat::zero()
        }
    };
    // Any nonnegative solution of the upper system bounds the least one.
    let hi = match hi {
        Some(x) if !x.is_negative() && x >= lo => x.min(Rat::one()),
        _ => {
            widened = true;
            Rat::one()
        }
    };
    Reach { value: Value::interval(lo, hi), widened }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Quantitative,
    Qualitative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Holds,
    Fails,
    UndecidedWithinGap,
}

/// What to decide about the acceptance probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    /// Is the probability at least the threshold?
    AtLeast(Rat),
    /// Is the probability one?
    AlmostSure,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PipelineStats {
    pub system_states: usize,
    pub spec_states: usize,
    pub product_states: usize,
    pub product_stack: usize,
    pub chain_states: usize,
    pub bsccs: usize,
    pub good_bsccs: usize,
    pub solve: Option<SolveStats>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub mode: Mode,
    pub outcome: Outcome,
    pub probability: Option<Value>,
    #[serde(serialize_with = "ser_rat_opt")]
    pub threshold: Option<Rat>,
    /// Interval straddling the threshold when undecided.
    pub gap: Option<Value>,
    pub widened: bool,
    pub provenance: Vec<String>,
    pub stats: PipelineStats,
}

fn ser_rat_opt<S: Serializer>(x: &Option<Rat>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(r) => s.serialize_some(&render_rat(r)),
        None => s.serialize_none(),
    }
}

/// `Holds` iff the lower bound reaches `theta`, `Fails` iff the upper bound
/// is below it.
pub fn compare(p: &Value, theta: &Rat) -> Outcome {
    if p.lo() >= theta {
        Outcome::Holds
    } else if p.hi() < theta {
        Outcome::Fails
    } else {
        Outcome::UndecidedWithinGap
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub solve: SolveOptions,
    pub det_cap: usize,
    pub product_cap: usize,
    /// Also compute the probability for qualitative queries.
    pub with_probability: bool,
}

impl Default for CheckOptions {
    fn default() -> CheckOptions {
        CheckOptions {
            solve: SolveOptions::default(),
            det_cap: crate::translate::DEFAULT_DET_CAP,
            product_cap: crate::product::DEFAULT_STATE_CAP,
            with_probability: false,
        }
    }
}

fn backend_name(o: &SolveOptions) -> String {
    serde_json::to_value(o.backend).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Product of `m` with a property automaton: a parity DVPA is used as
/// is, a Büchi NVPA is determinized on demand.
pub fn product_with_spec(m: &Pvpa, spec: &Vpa, matching: LabelMatch, opts: &CheckOptions) -> Result<(Pvpa, usize)> {
    match spec.acceptance {
        Acceptance::Parity(_) => {
            let mut t = DetTables::new(spec)?;
            let p = build_product_with(m, &mut t, matching, &|s| spec.states[s].clone(), &|y| spec.stack[y].clone(), opts.product_cap)?;
            Ok((p, spec.states.len()))
        }
        Acceptance::Buchi(_) => {
            let mut d = LazyDet::with_cap(spec, opts.det_cap)?;
            let p = build_product_with(m, &mut d, matching, &|s| format!("d{s}"), &|y| format!("Y{y}"), opts.product_cap)?;
            Ok((p, d.num_states()))
        }
    }
}

/// Probability that the product's step chain reaches a good bottom SCC,
/// with the chain and partition used.
pub fn product_probability(product: &Pvpa, opts: &CheckOptions) -> Result<(Reach, StepChain, BsccPartition, SolveStats)> {
    let t = solve(product, &opts.solve)?;
    let chain = build_step_chain(product, &t)?;
    let graph = build_step_graph(product, &t.div_sign)?;
    let part = classify_bsccs(&graph)?;
    let reach = reach_probability(&chain, &part);
    Ok((reach, chain, part, t.stats))
}

fn quantitative_on(product: &Pvpa, theta: &Rat, opts: &CheckOptions, mut stats: PipelineStats) -> Result<Verdict> {
    if theta.is_negative() || theta > &Rat::one() {
        return Err(Error::Invalid(format!("threshold {} outside [0, 1]", render_rat(theta))));
    }
    let (reach, chain, part, solve_stats) = product_probability(product, opts)?;
    stats.chain_states = chain.len();
    stats.bsccs = part.bsccs.len();
    stats.good_bsccs = part.good.iter().filter(|g| **g).count();
    stats.solve = Some(solve_stats);
    let outcome = compare(&reach.value, theta);
    let gap = (outcome == Outcome::UndecidedWithinGap).then(|| reach.value.clone());
    Ok(Verdict {
        mode: Mode::Quantitative,
        outcome,
        probability: Some(reach.value),
        threshold: Some(theta.clone()),
        gap,
        widened: reach.widened,
        provenance: vec![format!("return probabilities: {} backend on the product", backend_name(&opts.solve))],
        stats,
    })
}

fn qualitative_on(m: &Pvpa, product: &Pvpa, opts: &CheckOptions, mut stats: PipelineStats) -> Result<Verdict> {
    let tm = solve(m, &opts.solve)?;
    let origin = product.origin.as_ref().ok_or_else(|| Error::Invalid("not a product".into()))?;
    let signs: Vec<_> = origin.iter().map(|&(q, _)| tm.div_sign[q]).collect();
    let graph = build_step_graph(product, &signs)?;
    let part = classify_bsccs(&graph)?;
    let bad = part.bad_reachable();
    stats.chain_states = graph.len();
    stats.bsccs = part.bsccs.len();
    stats.good_bsccs = part.good.iter().filter(|g| **g).count();
    stats.solve = Some(tm.stats);
    let mut provenance = vec![format!(
        "divergence signs: {} backend on the system{}",
        backend_name(&opts.solve),
        if opts.solve.pvoc_fast_path && m.is_one_counter() { " (one-counter fast path)" } else { "" }
    )];
    provenance.push("return support: saturation on the product".into());
    let mut widened = false;
    let probability = if opts.with_probability {
        let (reach, ..) = product_probability(product, opts)?;
        widened = reach.widened;
        provenance.push(format!("probability: {} backend on the product", backend_name(&opts.solve)));
        Some(reach.value)
    } else {
        None
    };
    Ok(Verdict {
        mode: Mode::Qualitative,
        outcome: if bad { Outcome::Fails } else { Outcome::Holds },
        probability,
        threshold: None,
        gap: None,
        widened,
        provenance,
        stats,
    })
}

/// Answers `query` on an already built product of `m` with a
/// property automaton of `spec_states` states.
pub fn check_product(m: &Pvpa, product: &Pvpa, spec_states: usize, query: &Query, opts: &CheckOptions) -> Result<Verdict> {
    let stats = PipelineStats {
        system_states: m.num_states(),
        spec_states,
        product_states: product.num_states(),
        product_stack: product.stack.len(),
        ..Default::default()
    };
    match query {
        Query::AtLeast(theta) => quantitative_on(product, theta, opts, stats),
        Query::AlmostSure => qualitative_on(m, product, opts, stats),
    }
}

/// Probability that the labels of `m`'s runs are accepted by the parity
/// DVPA `d`, compared against `theta`.
pub fn check_quantitative(m: &Pvpa, d: &Vpa, theta: &Rat, opts: &CheckOptions) -> Result<Verdict> {
    if !matches!(d.acceptance, Acceptance::Parity(_)) {
        return Err(Error::Invalid("quantitative checking needs a parity DVPA".into()));
    }
    let (p, n) = product_with_spec(m, d, LabelMatch::Exact, opts)?;
    check_product(m, &p, n, &Query::AtLeast(theta.clone()), opts)
}

/// Whether almost every run of `m` is accepted by `spec` (a Büchi NVPA or
/// a parity DVPA).
pub fn check_qualitative(m: &Pvpa, spec: &Vpa, opts: &CheckOptions) -> Result<Verdict> {
    let (p, n) = product_with_spec(m, spec, LabelMatch::Exact, opts)?;
    check_product(m, &p, n, &Query::AlmostSure, opts)
}

/// Checks a CaRet formula. Labels of `m` are restricted to the formula's
/// atoms before being read.
pub fn check_caret(m: &Pvpa, phi: &Formula, query: &Query, opts: &CheckOptions) -> Result<Verdict> {
    let nvpa = caret_to_nvpa(phi, &phi.atoms())?;
    let (p, n) = product_with_spec(m, &nvpa, LabelMatch::Project, opts)?;
    let mut v = check_product(m, &p, n, query, opts)?;
    v.provenance.insert(0, format!("formula automaton: {} states, determinized on demand", nvpa.states.len()));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caret::parse_caret;
    use crate::format::{bundled_pvpa, bundled_vpa, parse_vpa};
    use crate::pvpa::tests::q;
    use crate::stepchain::StepChain;

    fn universal() -> Vpa {
        parse_vpa("dvpa\nsymbol c call{}\nsymbol t int{}\nsymbol r ret{}\nstack Y\nstate u priority 0\ninit u\ncall u * -> u Y\nint u * -> u\nret u * * -> u\n", "u").unwrap()
    }

    #[test]
    fn fig7_fig3_single_bad_bscc() {
        let m = bundled_pvpa("fig7.pvpa").unwrap();
        let d = bundled_vpa("fig3.dvpa").unwrap();
        let (p, _) = product_with_spec(&m, &d, LabelMatch::Exact, &CheckOptions::default()).unwrap();
        let t = solve(&p, &SolveOptions::default()).unwrap();
        let g = build_step_graph(&p, &t.div_sign).unwrap();
        let part = classify_bsccs(&g).unwrap();
        let names: Vec<Vec<&str>> = part.bsccs.iter().map(|c| c.iter().map(|&v| g.names[v].as_str()).collect()).collect();
        assert_eq!(names, vec![vec!["(c,s1)", "(c,s0)"]]);
        assert_eq!(part.min_priority, vec![1]);
        assert_eq!(part.good, vec![false]);
        let v = check_quantitative(&m, &d, &q(1, 1), &CheckOptions::default()).unwrap();
        assert_eq!(v.probability, Some(Value::zero()));
        assert_eq!(v.outcome, Outcome::Fails);
        let v = check_qualitative(&m, &d, &CheckOptions::default()).unwrap();
        assert_eq!(v.outcome, Outcome::Fails);
    }

    #[test]
    fn universal_spec_holds() {
        let d = universal();
        for name in ["fig6.pvpa", "fig7.pvpa", "fig4.pvpa", "golden.pvpa"] {
            let m = bundled_pvpa(name).unwrap();
            let v = check_quantitative(&m, &d, &q(1, 1), &CheckOptions::default()).unwrap();
            assert_eq!(v.outcome, Outcome::Holds, "{name}");
            assert_eq!(v.probability, Some(Value::one()), "{name}");
            assert_eq!(check_qualitative(&m, &d, &CheckOptions::default()).unwrap().outcome, Outcome::Holds);
        }
    }

    #[test]
    fn fig6_half() {
        // Priority 0 right after a call: only the branch that keeps calling
        // sees it infinitely often at steps.
        let d = parse_vpa(
            "dvpa\nsymbol c call{}\nsymbol t int{}\nsymbol r ret{}\nstack Y\nstate a priority 1\nstate b priority 0\ninit a\ncall a c -> b Y\ncall b c -> b Y\nint a t -> a\nint b t -> a\nret a r * -> a\nret b r * -> a\n",
            "d",
        )
        .unwrap();
        let m = bundled_pvpa("fig6.pvpa").unwrap();
        let v = check_quantitative(&m, &d, &q(1, 2), &CheckOptions::default()).unwrap();
        assert_eq!(v.probability, Some(Value::Exact(q(1, 2))));
        assert_eq!(v.outcome, Outcome::Holds);
    }

    #[test]
    fn trivial_chains() {
        let one = |region: Region, rows: Vec<Vec<(usize, Value)>>, initial| {
            let n = rows.len();
            let c = StepChain { states: Vec::new(), names: vec![String::new(); n], initial, rows, priority: None };
            let mut regions = vec![Region::Unknown; n];
            regions[initial] = region;
            (c, regions)
        };
        let (c, regions) = one(Region::One, vec![vec![(0, Value::one())]], 0);
        let part = BsccPartition { bsccs: vec![vec![0]], min_priority: vec![0], good: vec![true], region: regions };
        assert_eq!(reach_probability(&c, &part).value, Value::one());
        // Initial vertex steps to a good sink with 1/3 and a bad one with 2/3.
        let rows = vec![vec![(1, Value::Exact(q(1, 3))), (2, Value::Exact(q(2, 3)))], vec![(1, Value::one())], vec![(2, Value::one())]];
        let (c, _) = one(Region::Unknown, rows, 0);
        let part = BsccPartition {
            bsccs: vec![vec![1], vec![2]],
            min_priority: vec![0, 1],
            good: vec![true, false],
            region: vec![Region::Unknown, Region::One, Region::Zero],
        };
        assert_eq!(reach_probability(&c, &part).value, Value::Exact(q(1, 3)));
    }

    #[test]
    fn fig6_all_even_bsccs() {
        let m = bundled_pvpa("fig6.pvpa").unwrap();
        let (p, _) = product_with_spec(&m, &universal(), LabelMatch::Exact, &CheckOptions::default()).unwrap();
        let t = solve(&p, &SolveOptions::default()).unwrap();
        let g = build_step_graph(&p, &t.div_sign).unwrap();
        let part = classify_bsccs(&g).unwrap();
        let names: Vec<&str> = part.bsccs.iter().map(|c| g.names[c[0]].as_str()).collect();
        assert_eq!(names, ["(q3,u)_bot", "(q2,u)"]);
        assert!(part.good.iter().all(|g| *g));
    }

    #[test]
    fn caret_matches_dvpa_path() {
        let m = bundled_pvpa("fig7.pvpa").unwrap();
        let phi = parse_caret("Fg Gg (call -> Xa ret)").unwrap();
        let v = check_caret(&m, &phi, &Query::AlmostSure, &CheckOptions::default()).unwrap();
        assert_eq!(v.outcome, Outcome::Fails);
        let v = check_caret(&m, &phi, &Query::AtLeast(q(1, 1)), &CheckOptions::default()).unwrap();
        assert_eq!(v.probability, Some(Value::zero()));
        let taut = parse_caret("call | int | ret").unwrap();
        assert_eq!(check_caret(&m, &taut, &Query::AlmostSure, &CheckOptions::default()).unwrap().outcome, Outcome::Holds);
    }

    #[test]
    fn caret_fig6_half() {
        let m = bundled_pvpa("fig6.pvpa").unwrap();
        let phi = parse_caret("Xg Xg ret").unwrap();
        let v = check_caret(&m, &phi, &Query::AtLeast(q(1, 2)), &CheckOptions::default()).unwrap();
        assert_eq!(v.probability, Some(Value::Exact(q(1, 2))));
        assert_eq!(v.outcome, Outcome::Holds);
    }

    #[test]
    fn thresholds_trichotomy() {
        let x = Value::interval(q(1, 3), q(1, 2));
        assert_eq!(compare(&x, &q(1, 4)), Outcome::Holds);
        assert_eq!(compare(&x, &q(2, 3)), Outcome::Fails);
        assert_eq!(compare(&x, &q(2, 5)), Outcome::UndecidedWithinGap);
        assert_eq!(compare(&Value::Exact(q(1, 2)), &q(1, 2)), Outcome::Holds);
    }
}
