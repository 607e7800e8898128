//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use caretprob::analysis::{
    check_caret, check_qualitative, check_quantitative, classify_bsccs, CheckOptions, Outcome, Query,
};
use caretprob::caret::{eval_caret_on_lasso, parse_caret};
use caretprob::format::{bundled_pvpa, bundled_vpa};
use caretprob::lasso::stair_parity_accepts_lasso;
use caretprob::probsolve::{solve, Backend, SolveOptions, Value};
use caretprob::product::build_product;
use caretprob::pvpa::{ExtState, Pvpa};
use caretprob::sim::{estimate_step_frequency, sample_step_sequences};
use caretprob::stepchain::{build_step_chain, build_step_graph, StepChain};
use caretprob::translate::{caret_to_nvpa, LazyDet};
use caretprob::vpa::DetTables;
use common::{ap_p, inv, lasso_corpus, random_formula, random_pvpa, rng};
use num_rational::BigRational;
use num_traits::ToPrimitive;

type Criterion = Result<String, String>;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fig7_returns() -> Criterion {
    let m = bundled_pvpa("fig7.pvpa").unwrap();
    let (tau, r, c) = (m.state_index("tau").unwrap(), m.state_index("r").unwrap(), m.state_index("c").unwrap());
    let z = m.stack_index("Z").unwrap();
    let want_ret = [((c, c), q(1, 6)), ((c, r), q(1, 12)), ((r, r), q(1, 3)), ((r, c), q(2, 3))];
    let want_div = [(c, q(3, 4)), (tau, q(1, 2)), (r, q(0, 1))];
    let t = solve(&m, &SolveOptions::default()).map_err(|e| e.to_string())?;
    for ((a, b), v) in &want_ret {
        ensure(t.ret(*a, z, *b) == Value::Exact(v.clone()), || format!("ret({}Z,{}) = {}", m.states[*a], m.states[*b], t.ret(*a, z, *b)))?;
    }
    for (a, v) in &want_div {
        ensure(t.div[*a] == Value::Exact(v.clone()), || format!("div({}) = {}", m.states[*a], t.div[*a]))?;
    }
    for backend in [Backend::Newton, Backend::Kleene] {
        let t = solve(&m, &SolveOptions { backend, ..Default::default() }).map_err(|e| e.to_string())?;
        for ((a, b), v) in &want_ret {
            let got = t.ret(*a, z, *b);
            ensure((got.to_f64() - v.to_f64().unwrap()).abs() < 1e-9, || format!("{backend:?} ret = {got}"))?;
        }
        for (a, v) in &want_div {
            ensure((t.div[*a].to_f64() - v.to_f64().unwrap()).abs() < 1e-9, || format!("{backend:?} div = {}", t.div[*a]))?;
        }
    }
    Ok("ret 1/6 1/12 1/3 2/3, div 3/4 1/2 0; float backends within 1e-9".into())
}

fn golden() -> Criterion {
    let m = bundled_pvpa("golden.pvpa").unwrap();
    let want = (5f64.sqrt() - 1.0) / 2.0;
    let t = solve(&m, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let v = t.ret(0, 1, 0);
    let err = (v.to_f64() - want).abs();
    ensure(err < 1e-9, || format!("{v} is {err:e} from (sqrt 5 - 1)/2"))?;
    Ok(format!("ret(q0Z,q0) = {:.12}, error {err:.1e}", v.to_f64()))
}

fn radical_free() -> Criterion {
    // Least root of x = x^5/6 + 1/2 on [0, 1] by bisection on the
    // increasing function x - x^5/6 - 1/2, which is negative at 0.
    let f = |x: f64| x - x.powi(5) / 6.0 - 0.5;
    let (mut lo, mut hi) = (0.0f64, 0.6f64);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = bundled_pvpa("radical-free.pvpa").unwrap();
    let a = m.state_index("a").unwrap();
    let t = solve(&m, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let v = t.ret(a, 1, a);
    let err = (v.to_f64() - lo).abs();
    ensure(err < 1e-9, || format!("{v} vs bisection {lo}"))?;
    Ok(format!("x = {:.12}, bisection {lo:.12}, error {err:.1e}", v.to_f64()))
}

fn edges(c: &StepChain) -> BTreeMap<(String, String), Value> {
    let mut out = BTreeMap::new();
    for (v, row) in c.rows.iter().enumerate() {
        for (t, x) in row {
            out.insert((c.names[v].clone(), c.names[*t].clone()), x.clone());
        }
    }
    out
}

fn table(rows: &[(&str, &str, BigRational)]) -> BTreeMap<(String, String), Value> {
    rows.iter().map(|(a, b, x)| ((a.to_string(), b.to_string()), Value::Exact(x.clone()))).collect()
}

fn chain_of(name: &str) -> Result<StepChain, String> {
    let m = bundled_pvpa(name).unwrap();
    let t = solve(&m, &SolveOptions::default()).map_err(|e| e.to_string())?;
    build_step_chain(&m, &t).map_err(|e| e.to_string())
}

fn step_chains() -> Criterion {
    let fig6 = chain_of("fig6.pvpa")?.reachable();
    let want6 = table(&[
        ("q0_bot", "q3_bot", q(1, 2)),
        ("q0_bot", "q1", q(1, 2)),
        ("q1", "q2", q(1, 1)),
        ("q2", "q2", q(1, 1)),
        ("q3_bot", "q3_bot", q(1, 1)),
    ]);
    ensure(edges(&fig6) == want6, || format!("fig6 chain {:?}", edges(&fig6)))?;
    let fig7 = chain_of("fig7.pvpa")?;
    let want7 = table(&[
        ("tau_bot", "r_bot", q(1, 3)),
        ("tau_bot", "c_bot", q(2, 3)),
        ("r_bot", "r_bot", q(1, 3)),
        ("r_bot", "c_bot", q(2, 3)),
        ("c_bot", "c_bot", q(1, 3)),
        ("c_bot", "r_bot", q(1, 6)),
        ("c_bot", "c", q(1, 2)),
        ("tau", "c", q(1, 1)),
        ("c", "c", q(1, 1)),
    ]);
    ensure(edges(&fig7) == want7, || format!("fig7 chain {:?}", edges(&fig7)))?;
    let mut names = fig7.names.clone();
    names.sort();
    ensure(names == ["c", "c_bot", "r_bot", "tau", "tau_bot"], || format!("fig7 vertices {names:?}"))?;
    Ok(format!("{} + {} exact edges", want6.len(), want7.len()))
}

fn product_classification() -> Criterion {
    let m = bundled_pvpa("fig7.pvpa").unwrap();
    let d = bundled_vpa("fig3.dvpa").unwrap();
    let p = build_product(&m, &d).map_err(|e| e.to_string())?;
    let mut states = p.states.clone();
    states.sort();
    ensure(states == ["(c,s0)", "(c,s1)", "(r,s0)", "(r,s1)", "(tau,s0)"], || format!("product states {states:?}"))?;
    let t = solve(&p, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let g = build_step_graph(&p, &t.div_sign).map_err(|e| e.to_string())?.restrict_reachable();
    let part = classify_bsccs(&g).map_err(|e| e.to_string())?;
    let sets: Vec<Vec<String>> = part
        .bsccs
        .iter()
        .map(|b| {
            let mut v: Vec<String> = b.iter().map(|&i| g.names[i].clone()).collect();
            v.sort();
            v
        })
        .collect();
    ensure(sets == vec![vec!["(c,s0)".to_string(), "(c,s1)".to_string()]], || format!("bsccs {sets:?}"))?;
    ensure(part.good == vec![false] && part.min_priority == vec![1], || format!("classification {:?} {:?}", part.good, part.min_priority))?;
    let opts = CheckOptions::default();
    let quant = check_quantitative(&m, &d, &q(1, 2), &opts).map_err(|e| e.to_string())?;
    ensure(quant.probability == Some(Value::zero()), || format!("probability {:?}", quant.probability))?;
    let qual = check_qualitative(&m, &d, &opts).map_err(|e| e.to_string())?;
    ensure(qual.outcome == Outcome::Fails, || format!("qualitative {:?}", qual.outcome))?;
    Ok("5 product states, single bad BSCC {(c,s0),(c,s1)}, probability 0, qualitative false".into())
}

fn caret_pipeline() -> Criterion {
    let m = bundled_pvpa("fig7.pvpa").unwrap();
    let d = bundled_vpa("fig3.dvpa").unwrap();
    let phi = parse_caret("Fg Gg (call -> Xa ret)").map_err(|e| e.to_string())?;
    let opts = CheckOptions::default();
    let via_caret = check_caret(&m, &phi, &Query::AtLeast(q(1, 2)), &opts).map_err(|e| e.to_string())?;
    let via_dvpa = check_quantitative(&m, &d, &q(1, 2), &opts).map_err(|e| e.to_string())?;
    ensure(via_caret.probability == Some(Value::zero()), || format!("caret path {:?}", via_caret.probability))?;
    ensure(via_caret.probability == via_dvpa.probability, || "paths differ".into())?;
    ensure(via_caret.outcome == via_dvpa.outcome, || "verdicts differ".into())?;
    let nvpa = caret_to_nvpa(&phi, &Default::default()).map_err(|e| e.to_string())?;
    let mut translated = LazyDet::new(&nvpa).map_err(|e| e.to_string())?;
    let mut reference = DetTables::new(&d).map_err(|e| e.to_string())?;
    let mut r = rng(6);
    let mut disagree = 0;
    for _ in 0..500 {
        let w = common::random_plain_lasso(&mut r, 6, 6);
        let a = stair_parity_accepts_lasso(&mut translated, &w).map_err(|e| e.to_string())?;
        let b = stair_parity_accepts_lasso(&mut reference, &w).map_err(|e| e.to_string())?;
        disagree += usize::from(a != b);
    }
    ensure(disagree == 0, || format!("{disagree} of 500 lassos disagree"))?;
    Ok(format!("both paths give 0; translated automaton ({} states seen) agrees on 500 lassos", translated.num_states()))
}

fn lasso_coherence() -> Criterion {
    let mut r = rng(7);
    let lassos = lasso_corpus(8, 50);
    let ap = ap_p();
    let mut disagree = Vec::new();
    for i in 0..200 {
        let phi = random_formula(&mut r, 4);
        let nvpa = caret_to_nvpa(&phi, &ap).map_err(|e| format!("{phi}: {e}"))?;
        let mut det = LazyDet::new(&nvpa).map_err(|e| format!("{phi}: {e}"))?;
        for w in &lassos {
            let a = eval_caret_on_lasso(&phi, w).map_err(|e| e.to_string())?;
            let b = stair_parity_accepts_lasso(&mut det, w).map_err(|e| e.to_string())?;
            if a != b {
                disagree.push(format!("formula {i} `{phi}`"));
                break;
            }
        }
    }
    ensure(disagree.is_empty(), || format!("{} disagreements, first {}", disagree.len(), disagree[0]))?;
    Ok("200 formulas x 50 lassos, no disagreement".into())
}

/// Compares sampled step-state prefixes of length up to five against the
/// chain's path probabilities, each within three standard deviations.
fn compare_prefixes(m: &Pvpa, c: &StepChain, samples: u64, seed: u64) -> Result<usize, String> {
    let mut checked = 0;
    for k in 0..=4 {
        let hist = sample_step_sequences(m, k, samples, 400, seed + k as u64).map_err(|e| e.to_string())?;
        let n: u64 = hist.values().sum();
        let mut seen: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for (seq, h) in &hist {
            let idx: Option<Vec<usize>> = seq.iter().map(|v: &ExtState| c.index(*v)).collect();
            let idx = idx.ok_or_else(|| format!("sampled a step state outside the chain: {seq:?}"))?;
            *seen.entry(idx).or_default() += h;
        }
        // Every chain path of length k from the initial vertex.
        let mut paths: Vec<(Vec<usize>, f64)> = vec![(vec![c.initial], 1.0)];
        for _ in 0..k {
            paths = paths
                .into_iter()
                .flat_map(|(p, x)| {
                    let last = *p.last().unwrap();
                    c.rows[last].iter().map(move |(t, v)| {
                        let mut p2 = p.clone();
                        p2.push(*t);
                        (p2, x * v.to_f64())
                    })
                })
                .collect();
        }
        let probs: BTreeMap<Vec<usize>, f64> = paths.into_iter().collect();
        for key in seen.keys() {
            ensure(probs.contains_key(key), || format!("sampled prefix {key:?} has probability 0"))?;
        }
        for (key, p) in &probs {
            let f = *seen.get(key).unwrap_or(&0) as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            ensure((f - p).abs() <= 3.0 * sigma, || format!("k={k} prefix {key:?}: frequency {f:.5}, chain {p:.5}, sigma {sigma:.5}"))?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn statistics() -> Criterion {
    let m = bundled_pvpa("fig7.pvpa").unwrap();
    let c = m.state_index("c").unwrap();
    let n = 100_000;
    let e = estimate_step_frequency(&m, c, n, 100, 400, 11).map_err(|e| e.to_string())?;
    let sigma = (0.75f64 * 0.25 / e.trials as f64).sqrt();
    ensure((e.freq - 0.75).abs() <= 3.0 * sigma, || format!("step frequency {} vs 3/4 (sigma {sigma:.5})", e.freq))?;
    let mut checked = 0;
    for name in ["fig6.pvpa", "fig7.pvpa"] {
        let m = bundled_pvpa(name).unwrap();
        let chain = chain_of(name)?;
        checked += compare_prefixes(&m, &chain, n, 21).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("step frequency of c {:.4} (3/4 +- {:.4}); {checked} prefix probabilities within 3 sigma", e.freq, 3.0 * sigma))
}

fn invariants() -> Criterion {
    let mut models = common::bundled_models();
    for seed in 0..100 {
        models.push((format!("random#{seed}"), random_pvpa(seed)));
    }
    let tol = 1e-12;
    for (name, m) in &models {
        let t = solve(m, &SolveOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let checks = [
            ("row stochasticity", inv::row_stochastic(m, &t)),
            ("Z-independence", inv::z_independent(m, &t, tol)),
            ("fixed-point residual", inv::lfp_residual(m, &t, tol)),
            ("sign agreement", inv::sign_agreement(m, &t)),
            ("support equality", inv::support_equal(m, &t)),
        ];
        for (what, r) in checks {
            r.map_err(|e| format!("{name}: {what}: {e}"))?;
        }
    }
    Ok(format!("{} models, 5 suites each", models.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Criterion, Duration); 9] = [
        ("fig7 return and divergence values", fig7_returns, Duration::from_secs(1)),
        ("golden ratio return value", golden, Duration::from_secs(1)),
        ("radical-free least fixed point", radical_free, Duration::from_secs(1)),
        ("step chains of fig6 and fig7", step_chains, Duration::from_secs(1)),
        ("product of fig7 and fig3, classification", product_classification, Duration::from_secs(2)),
        ("CaRet path equals DVPA path", caret_pipeline, Duration::from_secs(60)),
        ("lasso oracle coherence", lasso_coherence, Duration::from_secs(600)),
        ("statistical soundness", statistics, Duration::from_secs(60)),
        ("invariant suites", invariants, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = result.and_then(|msg| {
            if took <= *budget {
                Ok(msg)
            } else {
                Err(format!("took {took:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(msg) => println!("PASS {} {name} ({took:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name} ({took:.2?}): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
