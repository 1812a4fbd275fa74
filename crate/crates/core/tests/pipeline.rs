//! Synthesis output cross-checked by the independent checker.

mod support;

use glexrsm::checker::check_certificate;
use glexrsm::interchange::certificate_to_string;
use glexrsm::model::{check_bsp, Invariant, Pcfg, TransitionKind};
use glexrsm::synthesis::{synthesize_bsp, synthesize_general, SynthesisOutcome, Verdict};
use glexrsm::{Polyhedron, Predicate};
use support::{compiled, invariant, program, run_mutations};

fn auto(p: &Pcfg, inv: &Invariant) -> SynthesisOutcome {
    if check_bsp(p).0 {
        synthesize_bsp(p, inv).unwrap()
    } else {
        synthesize_general(p, inv).unwrap()
    }
}

const PROVABLE: [&str; 5] = ["fig1a", "fig1b", "prob_walk", "star_ndet", "mixed"];

#[test]
fn checker_accepts_every_synthesized_certificate() {
    for stem in PROVABLE {
        let p = program(stem);
        let inv = invariant(stem, &p);
        let out = auto(&p, &inv);
        let c = out
            .certificate()
            .unwrap_or_else(|| panic!("{stem}: no certificate"));
        let report = check_certificate(&p, &inv, c).unwrap();
        assert!(
            report.accepted(),
            "{stem}: {:?}",
            report.violations().collect::<Vec<_>>()
        );
        if let Some(s) = &report.shift {
            assert!(
                s.sufficient(),
                "{stem}: shift {} < {}",
                s.applied,
                s.required
            );
        }
    }
}

#[test]
fn stored_programs_match_their_sources() {
    for stem in [
        "fig1a",
        "fig1b",
        "prob_walk",
        "star_ndet",
        "mixed",
        "zero_drift",
        "divergent",
    ] {
        assert_eq!(program(stem), compiled(stem), "{stem}");
    }
}

#[test]
fn synthesis_is_deterministic() {
    for stem in PROVABLE {
        let p = program(stem);
        let inv = invariant(stem, &p);
        let a = auto(&p, &inv);
        let b = auto(&p, &inv);
        let text = |o: &SynthesisOutcome| certificate_to_string(o.certificate().unwrap(), &p);
        assert_eq!(text(&a), text(&b), "{stem}");
    }
}

/// The same program with transitions and guard disjuncts listed in reverse.
fn reordered(p: &Pcfg) -> Pcfg {
    let mut q = p.clone();
    q.transitions.reverse();
    for t in &mut q.transitions {
        if let TransitionKind::Npb { guard, .. } = &mut t.kind {
            let mut ds: Vec<Polyhedron<_>> = guard.disjuncts().to_vec();
            ds.reverse();
            for d in &mut ds {
                d.constraints.reverse();
            }
            *guard = Predicate::raw(ds);
        }
    }
    q
}

#[test]
fn verdicts_do_not_depend_on_ordering() {
    for stem in PROVABLE.iter().chain(&["zero_drift", "divergent"]) {
        let p = program(stem);
        let inv = invariant(stem, &p);
        let q = reordered(&p);
        let a = auto(&p, &inv);
        let b = auto(&q, &inv);
        match (&a.verdict, &b.verdict) {
            (Verdict::Found(x), Verdict::Found(y)) => {
                assert_eq!(x.dimension, y.dimension, "{stem}");
                assert!(check_certificate(&q, &inv, y).unwrap().accepted(), "{stem}");
                // Same level per transition id.
                assert_eq!(x.levels_by_id(&p), y.levels_by_id(&q), "{stem}");
            }
            (Verdict::NoWitness { unranked: u }, Verdict::NoWitness { unranked: v }) => {
                let (mut u, mut v) = (u.clone(), v.clone());
                u.sort();
                v.sort();
                assert_eq!(u, v, "{stem}");
            }
            _ => panic!("{stem}: verdicts differ"),
        }
    }
}

#[test]
fn negative_fixtures_have_no_witness() {
    let p = program("zero_drift");
    let out = synthesize_general(&p, &Invariant::trivial(&p)).unwrap();
    assert!(matches!(out.verdict, Verdict::NoWitness { .. }));
    let p = program("divergent");
    let out = synthesize_bsp(&p, &Invariant::trivial(&p)).unwrap();
    assert!(matches!(out.verdict, Verdict::NoWitness { .. }));
}

#[test]
fn curated_mutations_get_expected_verdicts() {
    let outcomes = run_mutations();
    assert!(outcomes.len() >= 10);
    let wrong: Vec<_> = outcomes.iter().filter(|m| !m.as_expected()).collect();
    assert!(wrong.is_empty(), "{wrong:#?}");
}
