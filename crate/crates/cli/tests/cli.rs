//! End-to-end runs of the binary: exit codes and report shape.

use std::process::Command;

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_caretprob")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn report(args: &[&str]) -> (i32, Value) {
    let (code, out) = run(args);
    let v: Value = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{args:?}: {e}\n{out}"));
    let schema: Value = serde_json::from_str(caretprob::report::SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(&v) {
        let msgs: Vec<String> = errors.map(|e| format!("{e} at {}", e.instance_path)).collect();
        panic!("{args:?}: report violates schema: {msgs:?}");
    }
    (code, v)
}

#[test]
fn dvpa_qualitative_fails_with_zero() {
    let (code, v) = report(&["check", "fig7.pvpa", "--dvpa", "repbdd.dvpa", "--qualitative"]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["probability"]["value"], "0");
}

#[test]
fn caret_path_matches_dvpa_path() {
    let (code, v) = report(&["check", "fig7.pvpa", "--caret", "Fg Gg (call -> Xa ret)", "--qualitative"]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["probability"]["value"], "0");
}

#[test]
fn tautology_holds() {
    let (code, _) = report(&["check", "fig6.pvpa", "--caret", "call | int | ret", "--qualitative"]);
    assert_eq!(code, 0);
}

fn temp_model(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join("caretprob-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Reaches `done` with probability (sqrt 5 - 1)/2.
const GOLDEN_ONCE: &str = "pvpa
stack Z W
state s call{}
state q0 int{}
state q1 call{}
state q2 call{}
state q3 ret{}
state done int{p}
init s
call s -> q0 W 1
int q0 -> q1 1/2
int q0 -> q3 1/2
call q1 -> q2 Z 1
call q2 -> q0 Z 1
ret q3 Z -> q0 1
ret q3 W -> done 1
ret q3 bot -> done 1
int done -> done 1
";

#[test]
fn irrational_probability_thresholds() {
    let m = temp_model("golden-once.pvpa", GOLDEN_ONCE);
    let (code, v) = report(&["check", &m, "--caret", "Fg p", "--threshold", "3/5"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["probability"]["repr"], "interval");
    assert!(v["result"]["probability"]["value"].as_str().unwrap().starts_with("0.618033988"));
    assert_eq!(report(&["check", &m, "--caret", "Fg p", "--threshold", "31/50"]).0, 1);
    // Within the certified enclosure of the irrational value.
    let (code, v) = report(&["check", &m, "--caret", "Fg p", "--threshold", "61803398874989484/100000000000000000"]);
    assert_eq!(code, 2);
    assert_eq!(v["result"]["outcome"], "undecided-within-gap");
    assert_eq!(v["result"]["gap"]["repr"], "interval");
}

#[test]
fn golden_return_value() {
    let (code, v) = report(&["returns", "golden.pvpa"]);
    assert_eq!(code, 0);
    let first = v["result"]["returns"].as_array().unwrap().iter().find(|e| e["from"] == "q0" && e["to"] == "q0").unwrap().clone();
    assert!(first["prob"]["value"].as_str().unwrap().starts_with("0.618033988"));
}

#[test]
fn returns_fig7() {
    let (code, v) = report(&["returns", "fig7.pvpa"]);
    assert_eq!(code, 0);
    let get = |q: &str, r: &str| {
        v["result"]["returns"].as_array().unwrap().iter().find(|e| e["from"] == q && e["to"] == r).unwrap()["prob"]["value"].clone()
    };
    assert_eq!(get("c", "c"), "1/6");
    assert_eq!(get("c", "r"), "1/12");
    assert_eq!(get("r", "r"), "1/3");
    assert_eq!(get("r", "c"), "2/3");
    let div: Vec<(String, String)> = v["result"]["diverge"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| (d["state"].as_str().unwrap().into(), d["prob"]["value"].as_str().unwrap().into()))
        .collect();
    assert!(div.contains(&("c".into(), "3/4".into())));
    assert!(div.contains(&("tau".into(), "1/2".into())));
    assert!(div.contains(&("r".into(), "0".into())));
}

#[test]
fn push_only_never_returns() {
    let (_, v) = report(&["returns", "push-only.pvpa"]);
    assert!(v["result"]["returns"].as_array().unwrap().is_empty());
    assert!(v["result"]["diverge"].as_array().unwrap().iter().all(|d| d["prob"]["value"] == "1"));
}

#[test]
fn stepchain_json_and_dot() {
    let (code, v) = report(&["stepchain", "fig6.pvpa", "--json", "--reachable"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["edges"].as_array().unwrap().len(), 5);
    let (code, dot) = run(&["stepchain", "fig7.pvpa", "--dvpa", "repbdd.dvpa", "--dot", "--reachable"]);
    assert_eq!(code, 0);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches(" -> v").count(), 12);
}

#[test]
fn single_internal_state_chain() {
    let p = temp_model("one.pvpa", "pvpa\nstack Z\nstate a int{}\ninit a\nint a -> a 1\n");
    let (_, v) = report(&["stepchain", &p, "--reachable"]);
    let edges = v["result"]["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 1);
    assert_eq!(edges[0]["from"], edges[0]["to"]);
}

#[test]
fn simulate_reports_and_rejects_zero_samples() {
    let (code, v) = report(&["simulate", "fig6.pvpa", "--horizon", "4", "--samples", "4000", "--seed", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["seed"], 3);
    for row in v["result"]["distribution"].as_array().unwrap() {
        let e = &row["estimate"];
        assert!(e["lo"].as_f64().unwrap() < 0.5 && 0.5 < e["hi"].as_f64().unwrap());
    }
    assert_eq!(run(&["simulate", "fig6.pvpa", "--samples", "0"]).0, 3);
}

#[test]
fn translate_writes_automata() {
    let (code, text) = run(&["translate", "--caret", "call", "--to", "nvpa"]);
    assert_eq!(code, 0);
    assert!(text.lines().filter(|l| l.starts_with("state ")).count() <= 8);
    let out = std::env::temp_dir().join("caretprob-rep.dvpa");
    let (code, _) = report(&["translate", "--caret", "Fg Gg (call -> Xa ret)", "--to", "dvpa", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, _) = report(&["check", "fig7.pvpa", "--dvpa", out.to_str().unwrap(), "--threshold", "1"]);
    assert_eq!(code, 1);
}

#[test]
fn input_errors_exit_three() {
    assert_eq!(run(&["check", "fig7.pvpa", "--dvpa", "missing.dvpa", "--qualitative"]).0, 3);
    assert_eq!(run(&["check", "fig7.pvpa", "--caret", "((", "--qualitative"]).0, 3);
    assert_eq!(run(&["check", "fig7.pvpa", "--caret", "p", "--threshold", "0.5"]).0, 3);
    assert_eq!(run(&["frobnicate"]).0, 3);
}
