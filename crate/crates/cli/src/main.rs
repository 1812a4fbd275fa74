use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use glexrsm::checker::{check_certificate, CheckError};
use glexrsm::frontend::compile;
use glexrsm::interchange::{
    certificate_to_value, load_certificate, load_invariant, pcfg_from_str, pcfg_to_string,
    InterchangeError,
};
use glexrsm::linear::format_expr;
use glexrsm::model::{check_bsp, check_linpp_star, Invariant, Pcfg, TransitionKind, UpdateElement};
use glexrsm::num::format_rational;
use glexrsm::simulator::{
    counterexample_process, simulate_runs, summarize, Engine, EstimateOptions, NondetStrategy,
    SamplerRegistry, Scheduler, State, Strategy,
};
use glexrsm::synthesis::{
    synthesize_bsp_with, synthesize_general_with, SynthesisError, SynthesisOptions, Verdict,
};

// A closed pipe (say, into `head`) is not worth a panic.
macro_rules! out {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}
macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const EXIT_NO: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "glexrsm",
    version,
    about = "Almost-sure termination certificates for linear probabilistic programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lower a source program to the pCFG interchange format.
    Parse {
        source: PathBuf,
        /// Output path; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write a Graphviz description of the pCFG.
        #[arg(long, value_name = "PATH")]
        emit_dot: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Search for a certificate.
    Synthesize {
        /// pCFG JSON or source program.
        program: PathBuf,
        #[arg(short, long)]
        invariant: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: Mode,
        /// Where to write the certificate or the refusal document.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write every LP (CPLEX LP format) into this directory.
        #[arg(long, value_name = "DIR")]
        dump_lp: Option<PathBuf>,
        /// Progress as JSON lines on stderr.
        #[arg(short, long, action = clap::ArgAction::Count)]
        verbose: u8,
        #[arg(long)]
        json: bool,
    },
    /// Verify a certificate.
    Check {
        program: PathBuf,
        certificate: PathBuf,
        #[arg(short, long)]
        invariant: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Monte-Carlo termination estimate.
    Simulate {
        /// pCFG JSON or source program; not needed with --counterexample.
        #[arg(required_unless_present = "counterexample")]
        program: Option<PathBuf>,
        /// Initial valuation, e.g. `x=5,y=3`; unnamed variables start at 0.
        #[arg(long, default_value = "")]
        init: String,
        /// Start location; the program's initial location when absent.
        #[arg(long)]
        at: Option<String>,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        #[arg(long, default_value_t = glexrsm::simulator::DEFAULT_ESTIMATION_CAP)]
        cap: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "uniform")]
        scheduler: SchedKind,
        /// Transition ids in priority order for `--scheduler fixed`.
        #[arg(long, value_delimiter = ',')]
        priority: Vec<String>,
        #[arg(long, value_enum, default_value = "uniform")]
        nondet: NondetKind,
        /// Certificate guiding `--scheduler adversarial`.
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, env = "GLEXRSM_THREADS")]
        threads: Option<usize>,
        /// Simulate the built-in process that drops by 1 in expectation
        /// while non-negative, yet stops with probability below 1/2.
        #[arg(long)]
        counterexample: bool,
        /// CSV of `run,terminated,steps`.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// One JSON line per run.
        #[arg(long, value_name = "PATH")]
        runs_jsonl: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Mode {
    Auto,
    Bsp,
    General,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedKind {
    Uniform,
    Fixed,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum NondetKind {
    Uniform,
    Lower,
    Upper,
}

/// Failure with an exit code and a message for stderr.
struct Fail(u8, String);

impl From<InterchangeError> for Fail {
    fn from(e: InterchangeError) -> Self {
        match e {
            InterchangeError::StructuralMismatch(m) => {
                Fail(EXIT_PRECONDITION, format!("structural mismatch: {m}"))
            }
            e => Fail(EXIT_INPUT, e.to_string()),
        }
    }
}

type CmdResult = Result<u8, Fail>;

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// A pCFG from JSON, or compiled from source when the text is not JSON.
fn load_program(path: &Path) -> Result<Pcfg, Fail> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        Ok(pcfg_from_str(&text)?)
    } else {
        compile(&text)
            .map_err(|e| Fail(EXIT_INPUT, format!("{}:{e} [{}]", path.display(), e.kind())))
    }
}

fn load_inv(path: &Option<PathBuf>, p: &Pcfg) -> Result<Invariant, Fail> {
    match path {
        Some(path) => Ok(load_invariant(path, p)?),
        None => Ok(Invariant::trivial(p)),
    }
}

fn emit(json: bool, doc: &Value, text: impl FnOnce() -> String) {
    if json {
        outln!("{doc}");
    } else {
        out!("{}", text());
    }
}

fn dot(p: &Pcfg) -> String {
    let mut s = String::from("digraph pcfg {\n");
    for (l, name) in p.locations.iter().enumerate() {
        let shape = if l == p.terminal {
            "doublecircle"
        } else {
            "circle"
        };
        let _ = writeln!(s, "  \"{name}\" [shape={shape}];");
    }
    for t in &p.transitions {
        let src = &p.locations[t.source];
        match &t.kind {
            TransitionKind::Pb { branches } => {
                for (l, pr) in branches {
                    let _ = writeln!(
                        s,
                        "  \"{src}\" -> \"{}\" [label=\"{} p={}\", style=dashed];",
                        p.locations[*l],
                        t.id,
                        format_rational(pr)
                    );
                }
            }
            TransitionKind::Npb {
                dest,
                guard,
                update,
            } => {
                let mut label = format!("{} [{}]", t.id, guard.display(&p.variables));
                match update {
                    UpdateElement::NoUpdate => {}
                    UpdateElement::Expr {
                        target,
                        base,
                        sample,
                    } => {
                        let _ = write!(
                            label,
                            " {} := {}",
                            p.variables[*target],
                            format_expr(base, &p.variables)
                        );
                        if let Some((c, d)) = sample {
                            let _ = write!(label, " + {}*{}", format_rational(c), d.kind_name());
                        }
                    }
                    UpdateElement::Nondet { target, lo, hi } => {
                        let _ = write!(
                            label,
                            " {} := ndet[{}, {}]",
                            p.variables[*target],
                            format_rational(lo),
                            format_rational(hi)
                        );
                    }
                }
                let _ = writeln!(
                    s,
                    "  \"{src}\" -> \"{}\" [label=\"{}\"];",
                    p.locations[*dest],
                    label.replace('"', "\\\"")
                );
            }
        }
    }
    s.push_str("}\n");
    s
}

fn cmd_parse(source: &Path, out: Option<&Path>, emit_dot: Option<&Path>, json: bool) -> CmdResult {
    let text = read(source)?;
    let p = match compile(&text) {
        Ok(p) => p,
        Err(e) => {
            let (line, col) = e.position();
            let doc = json!({"status": "error", "kind": e.kind(), "line": line, "col": col, "message": e.to_string()});
            if json {
                outln!("{doc}");
            }
            return Err(Fail(
                EXIT_INPUT,
                format!("{}:{e} [{}]", source.display(), e.kind()),
            ));
        }
    };
    let doc = pcfg_to_string(&p);
    match out {
        Some(path) => write(path, &doc)?,
        None if !json => out!("{doc}"),
        None => {}
    }
    if let Some(path) = emit_dot {
        write(path, &dot(&p))?;
    }
    if json {
        outln!(
            "{}",
            json!({
                "status": "ok",
                "locations": p.locations.len(),
                "transitions": p.transitions.len(),
                "variables": p.variables,
                "output": out.map(|p| p.display().to_string()),
            })
        );
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_synthesize(
    program: &Path,
    invariant: &Option<PathBuf>,
    mode: Mode,
    out: Option<&Path>,
    dump_lp: Option<&Path>,
    verbose: u8,
    json: bool,
) -> CmdResult {
    let p = load_program(program)?;
    let inv = load_inv(invariant, &p)?;
    let bsp = match mode {
        Mode::Bsp => true,
        Mode::General => false,
        Mode::Auto => check_bsp(&p).0,
    };
    let opts = SynthesisOptions {
        keep_lp_text: dump_lp.is_some(),
        ..Default::default()
    };
    let mode_name = if bsp { "bsp" } else { "general" };
    let precondition = |msg: String| {
        let doc = json!({"status": "precondition-failure", "mode": mode_name, "message": msg});
        if let Some(path) = out {
            let _ = fs::write(path, format!("{doc:#}\n"));
        }
        if json {
            outln!("{doc}");
        }
        Fail(EXIT_PRECONDITION, msg)
    };
    if !bsp && !check_linpp_star(&p) {
        return Err(precondition(SynthesisError::NotLinPPStar.to_string()));
    }
    let result = if bsp {
        synthesize_bsp_with(&p, &inv, &opts)
    } else {
        synthesize_general_with(&p, &inv, &opts)
    };
    let outcome = result.map_err(|e| precondition(e.to_string()))?;

    if verbose > 0 {
        let mut err = std::io::stderr().lock();
        for r in &outcome.history {
            let _ = writeln!(err, "{}", serde_json::to_string(r).unwrap_or_default());
        }
    }
    if let Some(dir) = dump_lp {
        fs::create_dir_all(dir).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", dir.display())))?;
        for (n, r) in outcome.history.iter().enumerate() {
            if let Some(text) = &r.lp_text {
                write(
                    &dir.join(format!("lp{:03}_iter{}.lp", n, r.iteration)),
                    text,
                )?;
            }
        }
    }
    let iterations = serde_json::to_value(&outcome.history).unwrap_or(Value::Null);
    match &outcome.verdict {
        Verdict::Found(c) => {
            let cert = certificate_to_value(c, &p);
            if let Some(path) = out {
                write(path, &format!("{cert:#}\n"))?;
            }
            let doc = json!({
                "status": "certificate",
                "mode": mode_name,
                "dimension": c.dimension,
                "certificate": cert,
                "iterations": iterations,
            });
            emit(json, &doc, || {
                let mut s = format!(
                    "certificate found ({mode_name} mode, dimension {})\n",
                    c.dimension
                );
                if out.is_none() {
                    let _ = writeln!(s, "{cert:#}");
                }
                s
            });
            Ok(0)
        }
        Verdict::NoWitness { unranked } => {
            let (verdict, message) = if bsp {
                ("no-map", "no LinGLexRSM map exists for this invariant")
            } else {
                (
                    "unknown",
                    "termination unknown: no certificate of the supported form was found",
                )
            };
            let doc = json!({
                "status": "no-witness",
                "mode": mode_name,
                "verdict": verdict,
                "message": message,
                "unranked": unranked,
                "iterations": iterations,
            });
            if let Some(path) = out {
                write(path, &format!("{doc:#}\n"))?;
            }
            emit(json, &doc, || {
                format!("{message}\nunranked transitions: {}\n", unranked.join(", "))
            });
            Ok(EXIT_NO)
        }
    }
}

fn cmd_check(
    program: &Path,
    certificate: &Path,
    invariant: &Option<PathBuf>,
    json: bool,
) -> CmdResult {
    let p = load_program(program)?;
    let inv = load_inv(invariant, &p)?;
    let mismatch = |m: String| {
        if json {
            outln!(
                "{}",
                json!({"verdict": "structural-mismatch", "message": m})
            );
        }
        Fail(EXIT_PRECONDITION, format!("structural mismatch: {m}"))
    };
    let c = match load_certificate(certificate, &p) {
        Ok(c) => c,
        Err(InterchangeError::StructuralMismatch(m)) => return Err(mismatch(m)),
        Err(e) => return Err(e.into()),
    };
    let report = match check_certificate(&p, &inv, &c) {
        Ok(r) => r,
        Err(CheckError::StructuralMismatch(m)) => return Err(mismatch(m)),
        Err(e) => return Err(Fail(EXIT_PRECONDITION, e.to_string())),
    };
    let doc = report.to_json();
    emit(json, &doc, || {
        let mut s = String::new();
        if report.accepted() {
            let _ = writeln!(
                s,
                "accepted ({} mode): {}",
                c.mode.as_str(),
                report.argument()
            );
            for a in &report.assumptions {
                let _ = writeln!(s, "assumption: {a}");
            }
        } else {
            let _ = writeln!(s, "rejected");
            for v in report.violations() {
                let _ = write!(s, "  {} {}", v.transition, v.condition);
                if let Some(j) = v.component {
                    let _ = write!(s, " component {j}");
                }
                if let Some(cex) = &v.counterexample {
                    let pts: Vec<String> = cex.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    let _ = write!(s, " at {}", pts.join(", "));
                }
                if let Some(d) = &v.detail {
                    let _ = write!(s, ": {d}");
                }
                s.push('\n');
            }
        }
        s
    });
    Ok(if report.accepted() { 0 } else { EXIT_NO })
}

fn parse_init(p: &Pcfg, text: &str) -> Result<Vec<f64>, Fail> {
    let mut x = vec![0.0; p.num_vars()];
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, val) = part.split_once('=').ok_or_else(|| {
            Fail(
                EXIT_INPUT,
                format!("bad initial assignment '{part}' (expected name=value)"),
            )
        })?;
        let i = p
            .variable_index(name.trim())
            .ok_or_else(|| Fail(EXIT_INPUT, format!("unknown variable '{}'", name.trim())))?;
        x[i] = val
            .trim()
            .parse()
            .map_err(|_| Fail(EXIT_INPUT, format!("bad value in '{part}'")))?;
    }
    Ok(x)
}

struct SimArgs {
    program: Option<PathBuf>,
    init: String,
    at: Option<String>,
    runs: u64,
    cap: u64,
    seed: u64,
    scheduler: SchedKind,
    priority: Vec<String>,
    nondet: NondetKind,
    certificate: Option<PathBuf>,
    threads: Option<usize>,
    counterexample: bool,
    csv: Option<PathBuf>,
    runs_jsonl: Option<PathBuf>,
    json: bool,
}

fn cmd_simulate(a: SimArgs) -> CmdResult {
    if a.counterexample {
        let est = counterexample_process(a.seed, a.runs, a.threads)
            .map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
        let doc = serde_json::to_value(&est).unwrap_or(Value::Null);
        emit(a.json, &doc, || {
            format!(
                "empirical P[T < inf] = {:.6} (95% CI [{:.6}, {:.6}], {} runs)\nseries value p* = {:.10}\n",
                est.frequency, est.interval.0, est.interval.1, est.runs, est.series
            )
        });
        return Ok(0);
    }
    let program = a.program.as_deref().expect("clap requires a program");
    let p = load_program(program)?;
    let loc = match &a.at {
        Some(name) => p
            .location_index(name)
            .ok_or_else(|| Fail(EXIT_INPUT, format!("unknown location '{name}'")))?,
        None => p.init,
    };
    let init = State::new(&p, loc, parse_init(&p, &a.init)?)
        .map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
    let strategy = match a.scheduler {
        SchedKind::Uniform => Strategy::UniformRandom,
        SchedKind::Fixed => {
            let order = a
                .priority
                .iter()
                .map(|id| {
                    p.transition_index(id)
                        .ok_or_else(|| Fail(EXIT_INPUT, format!("unknown transition '{id}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut order = order;
            order.extend(
                (0..p.transitions.len())
                    .filter(|k| !order.contains(k))
                    .collect::<Vec<_>>(),
            );
            Strategy::FixedPriority(order)
        }
        SchedKind::Adversarial => {
            let path = a.certificate.as_ref().ok_or_else(|| {
                Fail(
                    EXIT_INPUT,
                    "--scheduler adversarial needs --certificate".into(),
                )
            })?;
            Strategy::Adversarial(Box::new(load_certificate(path, &p)?))
        }
    };
    let sched = Scheduler {
        strategy,
        nondet: match a.nondet {
            NondetKind::Uniform => NondetStrategy::Uniform,
            NondetKind::Lower => NondetStrategy::Lower,
            NondetKind::Upper => NondetStrategy::Upper,
        },
    };
    let engine =
        Engine::new(&p, &SamplerRegistry::new()).map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
    let opts = EstimateOptions {
        runs: a.runs,
        step_cap: a.cap,
        seed: a.seed,
        threads: a.threads,
    };
    let reports = simulate_runs(&engine, &init, &sched, &opts)
        .map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
        let io = |e: csv::Error| Fail(EXIT_INPUT, e.to_string());
        w.write_record(["run", "terminated", "steps"]).map_err(io)?;
        for r in &reports {
            w.write_record([
                r.run.to_string(),
                r.terminated.to_string(),
                r.steps.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
    }
    if let Some(path) = &a.runs_jsonl {
        let mut s = String::new();
        for r in &reports {
            let _ = writeln!(s, "{}", serde_json::to_string(r).unwrap_or_default());
        }
        write(path, &s)?;
    }
    let est = summarize(&reports);
    let doc = serde_json::to_value(&est).unwrap_or(Value::Null);
    emit(a.json, &doc, || {
        format!(
            "terminated {}/{} runs: fraction {:.6}, 95% CI [{:.6}, {:.6}]{}\n",
            est.terminated,
            est.runs,
            est.fraction,
            est.interval.0,
            est.interval.1,
            if est.stuck > 0 {
                format!(", {} stuck", est.stuck)
            } else {
                String::new()
            }
        )
    });
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Parse {
            source,
            out,
            emit_dot,
            json,
        } => cmd_parse(&source, out.as_deref(), emit_dot.as_deref(), json),
        Cmd::Synthesize {
            program,
            invariant,
            mode,
            out,
            dump_lp,
            verbose,
            json,
        } => cmd_synthesize(
            &program,
            &invariant,
            mode,
            out.as_deref(),
            dump_lp.as_deref(),
            verbose,
            json,
        ),
        Cmd::Check {
            program,
            certificate,
            invariant,
            json,
        } => cmd_check(&program, &certificate, &invariant, json),
        Cmd::Simulate {
            program,
            init,
            at,
            runs,
            cap,
            seed,
            scheduler,
            priority,
            nondet,
            certificate,
            threads,
            counterexample,
            csv,
            runs_jsonl,
            json,
        } => cmd_simulate(SimArgs {
            program,
            init,
            at,
            runs,
            cap,
            seed,
            scheduler,
            priority,
            nondet,
            certificate,
            threads,
            counterexample,
            csv,
            runs_jsonl,
            json,
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
