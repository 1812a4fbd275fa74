#![allow(dead_code)]

pub mod farkas_oracle;

use std::path::PathBuf;

use glexrsm::frontend::compile;
use glexrsm::interchange::{load_certificate, load_invariant, load_pcfg};
use glexrsm::model::{Certificate, Invariant, Pcfg};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn program(stem: &str) -> Pcfg {
    load_pcfg(fixture(&format!("{stem}.pcfg.json"))).unwrap()
}

pub fn source(stem: &str) -> String {
    std::fs::read_to_string(fixture(&format!("{stem}.prob"))).unwrap()
}

pub fn compiled(stem: &str) -> Pcfg {
    compile(&source(stem)).unwrap()
}

pub fn invariant(stem: &str, p: &Pcfg) -> Invariant {
    let path = fixture(&format!("{stem}.invariant.json"));
    if path.exists() {
        load_invariant(path, p).unwrap()
    } else {
        Invariant::trivial(p)
    }
}

pub fn certificate(name: &str, p: &Pcfg) -> Certificate {
    load_certificate(fixture(&format!("{name}.certificate.json")), p).unwrap()
}

/// One entry of `fixtures/mutations.json`, applied and checked.
#[derive(Debug)]
pub struct MutationOutcome {
    pub name: String,
    pub expected_accept: bool,
    pub accepted: bool,
    /// The pinned `(transition, condition)` is among the violations, when one
    /// is listed.
    pub pinned_violation_found: bool,
}

impl MutationOutcome {
    pub fn as_expected(&self) -> bool {
        self.accepted == self.expected_accept && self.pinned_violation_found
    }
}

pub fn run_mutations() -> Vec<MutationOutcome> {
    use glexrsm::checker::check_certificate;
    use glexrsm::num::parse_rational;
    use serde_json::Value;

    let text = std::fs::read_to_string(fixture("mutations.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let mut out = Vec::new();
    for suite in doc["suites"].as_array().unwrap() {
        let p = program(suite["program"].as_str().unwrap());
        let inv = invariant(suite["invariant"].as_str().unwrap(), &p);
        let base = certificate(suite["certificate"].as_str().unwrap(), &p);
        for m in suite["mutations"].as_array().unwrap() {
            let mut c = base.clone();
            let loc = p.location_index(m["location"].as_str().unwrap()).unwrap();
            let j = m["component"].as_u64().unwrap() as usize;
            let value = parse_rational(m["value"].as_str().unwrap()).unwrap();
            let e = &mut c.components[loc][j - 1];
            match m["term"].as_str().unwrap() {
                "const" => e.set_constant(value),
                v => {
                    let i = p.variable_index(v).unwrap();
                    let old = e.coeff(i);
                    e.add_term(i, value - old);
                }
            }
            let report = check_certificate(&p, &inv, &c).unwrap();
            let pinned = match (m.get("transition"), m.get("condition")) {
                (Some(t), Some(cond)) => report.violations().any(|v| {
                    v.transition == t.as_str().unwrap()
                        && v.condition.name() == cond.as_str().unwrap()
                }),
                _ => true,
            };
            out.push(MutationOutcome {
                name: m["name"].as_str().unwrap().to_string(),
                expected_accept: m["expect"] == "accept",
                accepted: report.accepted(),
                pinned_violation_found: pinned,
            });
        }
    }
    out
}

/// Start states used for the lowering comparison, by fixture.
pub fn lowering_inits(stem: &str) -> Vec<f64> {
    match stem {
        "fig1a" => vec![5.0, 3.0],
        "fig1b" => vec![3.0, 3.0],
        "prob_walk" => vec![6.0],
        "star_ndet" => vec![10.0, 0.0],
        "mixed" => vec![4.0, 0.0],
        "zero_drift" => vec![2.0],
        "divergent" => vec![0.0],
        _ => panic!("no start state for {stem}"),
    }
}

pub const LOWERING_FIXTURES: [&str; 7] = [
    "fig1a",
    "fig1b",
    "prob_walk",
    "star_ndet",
    "mixed",
    "zero_drift",
    "divergent",
];

/// Runs the source interpreter and the pCFG engine on the same seeds and
/// compares termination and the sequence of variable writes. The engine fuses
/// some statements into one transition, so the interpreter gets a larger
/// budget; when the engine runs out, its writes must be a prefix of the
/// interpreter's. Returns the number of
/// agreeing runs and a description of the first disagreement.
pub fn lowering_agreement(
    stem: &str,
    sched: &glexrsm::simulator::Scheduler,
    runs: u64,
    seed: u64,
) -> (u64, Option<String>) {
    use glexrsm::frontend::parse_program;
    use glexrsm::simulator::{interpret, Engine, SamplerRegistry, State};

    const CAP: u64 = 20_000;
    let ast = parse_program(&source(stem)).unwrap();
    let p = compiled(stem);
    let reg = SamplerRegistry::new();
    let engine = Engine::new(&p, &reg).unwrap();
    let init = lowering_inits(stem);
    let start = State::initial(&p, init.clone()).unwrap();
    let mut agree = 0;
    let mut first = None;
    for r in 0..runs {
        let a = interpret(&ast, &init, sched, &reg, 10 * CAP, seed, r).unwrap();
        let t = engine.trace(&start, sched, CAP, seed, r, None);
        let mut writes = Vec::new();
        for (i, &k) in t.transitions.iter().enumerate() {
            if let Some(v) = p.transitions[k].update().target() {
                writes.push((v, t.states[i + 1].1[v]));
            }
        }
        let ok = if t.report.terminated {
            a.terminated && a.writes == writes && a.final_state == t.report.final_state
        } else {
            a.writes.starts_with(&writes)
        };
        if ok {
            agree += 1;
        } else if first.is_none() {
            let n = a.writes.len().min(writes.len());
            let at = (0..n).find(|&i| a.writes[i] != writes[i]).unwrap_or(n);
            first = Some(format!(
                "{stem} run {r}: interpreter terminated={} writes={}, engine terminated={} writes={}, first difference at write {at}",
                a.terminated,
                a.writes.len(),
                t.report.terminated,
                writes.len()
            ));
        }
    }
    (agree, first)
}
