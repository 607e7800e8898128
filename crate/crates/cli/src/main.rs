//! `caretprob`: model checking of probabilistic visibly pushdown automata.
//!
//! Exit codes: 0 holds (or success), 1 fails, 2 undecided, 3 input error.

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use caretprob::analysis::{check_caret, check_product, check_qualitative, check_quantitative, product_with_spec, CheckOptions, Outcome, Query, Verdict};
use caretprob::caret::parse_caret;
use caretprob::format::{bundled, parse_prob, parse_pvpa, parse_vpa, write_vpa, BUNDLED};
use caretprob::probsolve::{solve, Backend, SolveOptions};
use caretprob::product::LabelMatch;
use caretprob::pvpa::Pvpa;
use caretprob::report::{returns_json, Report};
use caretprob::sim::{estimate_return_frequency, estimate_state_distribution, estimate_step_frequency};
use caretprob::stepchain::{build_step_chain, build_step_graph};
use caretprob::translate::{caret_to_nvpa, determinize};
use caretprob::vpa::{Acceptance, Vpa};
use caretprob::Error;

#[derive(Parser)]
#[command(name = "caretprob", version, about = "Model checker for probabilistic visibly pushdown automata")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model against a DVPA, NVPA, or CaRet formula.
    Check(CheckArgs),
    /// Print return and divergence probabilities.
    Returns {
        model: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Print the step chain of a model, or of its product with a spec.
    Stepchain(StepchainArgs),
    /// Monte-Carlo statistics.
    Simulate(SimulateArgs),
    /// Translate a formula or NVPA into an automaton file.
    Translate(TranslateArgs),
    /// List the bundled example files.
    Models,
}

#[derive(Args)]
#[group(required = false, multiple = false)]
struct SpecArgs {
    /// Deterministic parity VPA file.
    #[arg(long)]
    dvpa: Option<String>,
    /// Nondeterministic Büchi VPA file.
    #[arg(long)]
    nvpa: Option<String>,
    /// CaRet formula.
    #[arg(long)]
    caret: Option<String>,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendArg,
    /// Certification tolerance; defaults to $CARETPROB_TOL or 1e-12.
    #[arg(long)]
    tol: Option<f64>,
    /// Use the one-counter procedure for divergence signs when applicable.
    #[arg(long)]
    pvoc: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Newton,
    Kleene,
}

#[derive(Args)]
struct CheckArgs {
    model: String,
    #[command(flatten)]
    spec: SpecArgs,
    /// Decide whether the property holds almost surely.
    #[arg(long, conflicts_with = "threshold")]
    qualitative: bool,
    /// Decide whether the probability is at least this rational.
    #[arg(long)]
    threshold: Option<String>,
    /// Skip the probability computation in qualitative mode.
    #[arg(long)]
    no_probability: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct StepchainArgs {
    model: String,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, conflicts_with = "json")]
    dot: bool,
    #[arg(long)]
    json: bool,
    /// Emit the sign-only underlying graph instead of the chain.
    #[arg(long)]
    graph: bool,
    /// Keep only vertices reachable from the initial one.
    #[arg(long)]
    reachable: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stat {
    /// Distribution of the state after `horizon` transitions.
    StateDist,
    /// Probability that the first non-bottom visit to `--state` is a step.
    StepFreq,
    /// Probability of popping `--stack` into `--target` from `--state`.
    ReturnFreq,
}

#[derive(Args)]
struct SimulateArgs {
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, value_enum, default_value = "state-dist")]
    stat: Stat,
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    stack: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Transitions observed after a visit when judging whether it is a step.
    #[arg(long, default_value_t = 400)]
    lookahead: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Nvpa,
    Dvpa,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long, conflicts_with = "nvpa", required_unless_present = "nvpa")]
    caret: Option<String>,
    #[arg(long)]
    nvpa: Option<String>,
    #[arg(long, value_enum)]
    to: Target,
    /// Extra atoms for the formula's alphabet, comma separated.
    #[arg(long, value_delimiter = ',')]
    ap: Vec<String>,
    #[arg(long)]
    out: Option<String>,
}

/// Failure with its exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        let code = if matches!(e, Error::Undecided(_)) { 2 } else { 3 };
        Fail(code, e.to_string())
    }
}

type Res<T> = std::result::Result<T, Fail>;

fn read_source(path: &str) -> Res<(String, String)> {
    if Path::new(path).exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Fail(3, format!("{path}: {e}")))?;
        return Ok((text, path.to_string()));
    }
    let name = path.strip_prefix("bundled:").unwrap_or(path);
    match bundled(name) {
        Some(t) => Ok((t.to_string(), name.to_string())),
        None => Err(Fail(3, format!("{path}: no such file or bundled model"))),
    }
}

fn load_model(path: &str) -> Res<Pvpa> {
    let (text, name) = read_source(path)?;
    Ok(parse_pvpa(&text, &name)?)
}

fn load_automaton(path: &str) -> Res<Vpa> {
    let (text, name) = read_source(path)?;
    Ok(parse_vpa(&text, &name)?)
}

fn solve_options(a: &SolverArgs) -> SolveOptions {
    let mut o = SolveOptions::default();
    o.backend = match a.backend {
        BackendArg::Exact => Backend::Exact,
        BackendArg::Newton => Backend::Newton,
        BackendArg::Kleene => Backend::Kleene,
    };
    if let Some(t) = a.tol {
        o.tol = t;
    }
    o.pvoc_fast_path = a.pvoc;
    o
}

fn solver_echo(a: &SolverArgs, o: &SolveOptions) -> Json {
    json!({ "backend": o.backend, "tol": o.tol, "pvoc": a.pvoc })
}

fn exit_of(v: &Verdict) -> u8 {
    match v.outcome {
        Outcome::Holds => 0,
        Outcome::Fails => 1,
        Outcome::UndecidedWithinGap => 2,
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print(r: &Report) {
    emit(&(serde_json::to_string_pretty(&r.to_json()).expect("json") + "\n"));
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn cmd_check(a: CheckArgs) -> Res<u8> {
    let t0 = Instant::now();
    let m = load_model(&a.model)?;
    let solve = solve_options(&a.solver);
    let opts = CheckOptions { solve: solve.clone(), with_probability: !a.no_probability, ..Default::default() };
    let query = match (&a.threshold, a.qualitative) {
        (Some(t), _) => Query::AtLeast(parse_prob(t).map_err(|e| Fail(3, format!("threshold: {e}")))?),
        (None, true) => Query::AlmostSure,
        (None, false) => return Err(Fail(3, "one of --qualitative or --threshold is required".into())),
    };
    let v = match (&a.spec.dvpa, &a.spec.nvpa, &a.spec.caret) {
        (Some(p), _, _) => {
            let d = load_automaton(p)?;
            match &query {
                Query::AtLeast(theta) => check_quantitative(&m, &d, theta, &opts)?,
                Query::AlmostSure => check_qualitative(&m, &d, &opts)?,
            }
        }
        (_, Some(p), _) => {
            let d = load_automaton(p)?;
            match &query {
                Query::AtLeast(_) => {
                    let (prod, n) = product_with_spec(&m, &d, LabelMatch::Exact, &opts)?;
                    check_product(&m, &prod, n, &query, &opts)?
                }
                Query::AlmostSure => check_qualitative(&m, &d, &opts)?,
            }
        }
        (_, _, Some(f)) => check_caret(&m, &parse_caret(f)?, &query, &opts)?,
        _ => return Err(Fail(3, "one of --dvpa, --nvpa, or --caret is required".into())),
    };
    let echo = json!({
        "model": a.model,
        "dvpa": a.spec.dvpa,
        "nvpa": a.spec.nvpa,
        "caret": a.spec.caret,
        "mode": if a.qualitative { "qualitative" } else { "quantitative" },
        "threshold": a.threshold,
        "solver": solver_echo(&a.solver, &solve),
    });
    let code = exit_of(&v);
    print(&Report::new("check", echo, serde_json::to_value(&v).expect("json"), ms(t0)));
    Ok(code)
}

fn cmd_returns(model: String, s: SolverArgs) -> Res<u8> {
    let t0 = Instant::now();
    let m = load_model(&model)?;
    let o = solve_options(&s);
    let t = solve(&m, &o)?;
    let echo = json!({ "model": model, "solver": solver_echo(&s, &o) });
    print(&Report::new("returns", echo, returns_json(&m, &t), ms(t0)));
    Ok(0)
}

fn spec_product(m: &Pvpa, spec: &SpecArgs, opts: &CheckOptions) -> Res<Option<Pvpa>> {
    let p = match (&spec.dvpa, &spec.nvpa, &spec.caret) {
        (Some(p), _, _) | (_, Some(p), _) => Some(product_with_spec(m, &load_automaton(p)?, LabelMatch::Exact, opts)?.0),
        (_, _, Some(f)) => {
            let phi = parse_caret(f)?;
            let nvpa = caret_to_nvpa(&phi, &phi.atoms())?;
            Some(product_with_spec(m, &nvpa, LabelMatch::Project, opts)?.0)
        }
        _ => None,
    };
    Ok(p)
}

fn cmd_stepchain(a: StepchainArgs) -> Res<u8> {
    let t0 = Instant::now();
    let m = load_model(&a.model)?;
    let solve_opts = solve_options(&a.solver);
    let opts = CheckOptions { solve: solve_opts.clone(), ..Default::default() };
    let target = spec_product(&m, &a.spec, &opts)?.unwrap_or(m);
    let t = solve(&target, &solve_opts)?;
    let (dot, body) = if a.graph {
        let mut g = build_step_graph(&target, &t.div_sign)?;
        if a.reachable {
            g = g.restrict_reachable();
        }
        (g.to_dot(), g.to_json())
    } else {
        let mut c = build_step_chain(&target, &t)?;
        if a.reachable {
            c = c.reachable();
        }
        (c.to_dot(), c.to_json())
    };
    if a.dot {
        emit(&dot);
    } else {
        let echo = json!({
            "model": a.model,
            "dvpa": a.spec.dvpa,
            "nvpa": a.spec.nvpa,
            "caret": a.spec.caret,
            "graph": a.graph,
            "reachable": a.reachable,
            "solver": solver_echo(&a.solver, &solve_opts),
        });
        print(&Report::new("stepchain", echo, body, ms(t0)));
    }
    Ok(0)
}

fn state_of(m: &Pvpa, name: &Option<String>, what: &str) -> Res<usize> {
    let n = name.as_deref().ok_or_else(|| Fail(3, format!("--{what} is required for this statistic")))?;
    m.state_index(n).ok_or_else(|| Fail(3, format!("unknown state `{n}`")))
}

fn cmd_simulate(a: SimulateArgs) -> Res<u8> {
    let t0 = Instant::now();
    let m = load_model(&a.model)?;
    let result = match a.stat {
        Stat::StateDist => {
            let d = estimate_state_distribution(&m, a.horizon, a.samples, a.seed)?;
            let rows: Vec<Json> = d.iter().map(|(q, e)| json!({ "state": m.states[*q], "estimate": e })).collect();
            json!({ "stat": "state-dist", "distribution": rows })
        }
        Stat::StepFreq => {
            let q = state_of(&m, &a.state, "state")?;
            let e = estimate_step_frequency(&m, q, a.samples, a.horizon, a.lookahead, a.seed)?;
            json!({ "stat": "step-freq", "state": m.states[q], "estimate": e })
        }
        Stat::ReturnFreq => {
            let q = state_of(&m, &a.state, "state")?;
            let r = state_of(&m, &a.target, "target")?;
            let zn = a.stack.as_deref().ok_or_else(|| Fail(3, "--stack is required for return-freq".into()))?;
            let z = m.stack_index(zn).ok_or_else(|| Fail(3, format!("unknown stack symbol `{zn}`")))?;
            let e = estimate_return_frequency(&m, q, z, r, a.samples, a.horizon, a.seed)?;
            json!({ "stat": "return-freq", "state": m.states[q], "stack": zn, "target": m.states[r], "estimate": e })
        }
    };
    let echo = json!({
        "model": a.model,
        "horizon": a.horizon,
        "samples": a.samples,
        "lookahead": a.lookahead,
    });
    let mut r = Report::new("simulate", echo, result, ms(t0));
    r.seed = Some(a.seed);
    print(&r);
    Ok(0)
}

fn cmd_translate(a: TranslateArgs) -> Res<u8> {
    let t0 = Instant::now();
    let nvpa = match (&a.caret, &a.nvpa) {
        (Some(f), _) => {
            let phi = parse_caret(f)?;
            let mut ap = phi.atoms();
            ap.extend(a.ap.iter().cloned());
            caret_to_nvpa(&phi, &ap)?
        }
        (_, Some(p)) => load_automaton(p)?,
        _ => unreachable!("clap requires one source"),
    };
    if !matches!(nvpa.acceptance, Acceptance::Buchi(_)) {
        return Err(Fail(3, "input automaton must be a Büchi NVPA".into()));
    }
    let out = match a.to {
        Target::Nvpa => nvpa,
        Target::Dvpa => determinize(&nvpa)?,
    };
    let text = write_vpa(&out);
    match &a.out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| Fail(3, format!("{path}: {e}")))?;
            let echo = json!({ "caret": a.caret, "nvpa": a.nvpa, "to": match a.to { Target::Nvpa => "nvpa", Target::Dvpa => "dvpa" }, "out": path });
            let result = json!({ "states": out.states.len(), "stack": out.stack.len(), "symbols": out.alphabet.len() });
            print(&Report::new("translate", echo, result, ms(t0)));
        }
        None => emit(&text),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let r = match cli.cmd {
        Cmd::Check(a) => cmd_check(a),
        Cmd::Returns { model, solver } => cmd_returns(model, solver),
        Cmd::Stepchain(a) => cmd_stepchain(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Translate(a) => cmd_translate(a),
        Cmd::Models => {
            emit(&BUNDLED.iter().map(|(n, _)| format!("{n}\n")).collect::<String>());
            Ok(0)
        }
    };
    match r {
        Ok(c) => ExitCode::from(c),
        Err(Fail(c, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(c)
        }
    }
}
