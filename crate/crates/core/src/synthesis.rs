//! Iterative LP synthesis of linear lexicographic certificates.
//!
//! Each iteration builds one linear program over a template expression per
//! location. Every still-unranked transition must keep the template
//! non-negative, not increase it in expectation, and (for non-branching
//! transitions) have non-negative minimal pre-expectation; branching
//! transitions instead get the three-case restricted condition. A slack
//! `ε_τ ∈ [0,1]` per transition measures decrease and the LP maximizes
//! their sum. Transitions with positive slack at the optimum are ranked by
//! the rescaled template and leave the set.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::linear::{negate_guards_to_dnf, LinConstraint, LinearError, DEFAULT_DNF_CAP};
use crate::lp::farkas::add_implication;
use crate::lp::FarkasImplication;
use crate::lp::{
    check_feasible, solve_lp_with, to_cplex_lp, LpError, LpOutcome, LpProblem, SolveOptions,
};
use crate::model::{
    check_bsp, check_linpp_star, effective_support_bound, validate_pcfg, Certificate,
    CertificateMode, Diagnostic, Invariant, LocId, Pcfg, TransitionKind, VarId,
};
use crate::num::format_rational;
use crate::param::ParamExpr;
use crate::preexp::{pre_form, pre_pb_restricted, PreExpError};
use crate::{QLinExpr, QPolyhedron, QPredicate, Rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("program is not well formed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProgram(Vec<Diagnostic>),
    #[error("a sampled distribution has unbounded support")]
    NotBsp,
    #[error("a probabilistic-branching successor is also the target of a sampling transition")]
    NotLinPPStar,
    #[error("invariant covers {got} locations, program has {want}")]
    InvariantShape { got: usize, want: usize },
    #[error(transparent)]
    Encoding(#[from] LinearError),
}

impl From<PreExpError> for SynthesisError {
    fn from(e: PreExpError) -> Self {
        match e {
            PreExpError::Encoding(l) => SynthesisError::Encoding(l),
            // Synthesis only asks for universal encodings and branching cases.
            other => unreachable!("unexpected pre-expectation error in synthesis: {other}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub dnf_cap: usize,
    pub solve: SolveOptions,
    /// Keep the text of every LP (CPLEX LP format) in the history.
    pub keep_lp_text: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            dnf_cap: DEFAULT_DNF_CAP,
            solve: SolveOptions::default(),
            keep_lp_text: false,
        }
    }
}

/// Extra constraints on one LP: template coefficients pinned to zero,
/// transitions that must be ranked, and transitions that must not be.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateRestriction {
    pub zero_coeffs: BTreeSet<(LocId, VarId)>,
    pub force_ranked: BTreeSet<usize>,
    pub force_unranked: BTreeSet<usize>,
}

/// One solved LP.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    /// 1-based component index this LP was trying to produce.
    pub iteration: usize,
    pub unranked: usize,
    pub lp_unknowns: usize,
    pub lp_constraints: usize,
    /// `"p/q"`; absent when the LP was infeasible or hit the pivot cap.
    pub objective: Option<String>,
    pub ranked: Vec<String>,
    /// The transition whose target coefficient was released, if any.
    pub candidate: Option<String>,
    pub accepted: bool,
    pub dropped_antecedents: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(skip)]
    pub lp_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Found(Certificate),
    /// No component ranks any of the listed transitions.
    NoWitness {
        unranked: Vec<String>,
    },
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub verdict: Verdict,
    pub history: Vec<IterationRecord>,
}

impl SynthesisOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match &self.verdict {
            Verdict::Found(c) => Some(c),
            Verdict::NoWitness { .. } => None,
        }
    }
}

/// The LP for one iteration plus what is needed to read a component back.
pub struct IterationLp {
    pub lp: LpProblem<Rational>,
    templates: Vec<ParamExpr>,
    eps: Vec<(usize, usize)>,
    pub dropped_antecedents: usize,
}

/// Result of solving an [`IterationLp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Per-location component, scaled so ranked transitions drop by >= 1.
    pub component: Vec<QLinExpr>,
    pub ranked: BTreeSet<usize>,
    pub objective: Rational,
}

struct Builder {
    lp: LpProblem<Rational>,
    templates: Vec<ParamExpr>,
    dropped: usize,
    tags: usize,
}

impl Builder {
    /// Adds `∀x. ante ⇒ cons >= 0`, dropping it when `ante` is empty.
    fn imply(&mut self, ante: &QPolyhedron, cons: ParamExpr) {
        let Some(ante) = ante.simplified() else {
            self.dropped += 1;
            return;
        };
        if check_feasible(&ante).is_none() {
            self.dropped += 1;
            return;
        }
        let f = FarkasImplication {
            antecedent: ante.relaxed(),
            consequent: cons,
        };
        let tag = self.tags.to_string();
        self.tags += 1;
        add_implication(&mut self.lp, &f, &tag).expect("antecedent was relaxed");
    }

    fn template(&self, loc: LocId) -> ParamExpr {
        self.templates[loc].clone()
    }
}

/// Guards of the transitions of `t` leaving `loc`.
fn unranked_guards(p: &Pcfg, t: &BTreeSet<usize>, loc: LocId) -> Vec<QPredicate> {
    t.iter()
        .map(|&k| &p.transitions[k])
        .filter(|tr| tr.source == loc)
        .map(|tr| tr.guard())
        .collect()
}

/// Feasible disjuncts of `I(ℓ) ∧ G(τ)` for every transition in `t`.
fn antecedents(p: &Pcfg, inv: &Invariant, k: usize) -> Vec<QPolyhedron> {
    let tr = &p.transitions[k];
    let base = inv.at(tr.source);
    tr.guard()
        .disjuncts()
        .iter()
        .filter_map(|g| base.conj(g).simplified())
        .filter(|d| check_feasible(d).is_some())
        .collect()
}

pub fn build_lp(
    p: &Pcfg,
    inv: &Invariant,
    t: &BTreeSet<usize>,
    restrict: &TemplateRestriction,
    cap: usize,
) -> Result<IterationLp, SynthesisError> {
    let n = p.num_vars();
    let mut b = Builder {
        lp: LpProblem::new(),
        templates: Vec::with_capacity(p.locations.len()),
        dropped: 0,
        tags: 0,
    };
    for (l, name) in p.locations.iter().enumerate() {
        let mut e = ParamExpr::zero();
        for (i, v) in p.variables.iter().enumerate() {
            let u = b.lp.add_free(format!("a_{name}_{v}"));
            if restrict.zero_coeffs.contains(&(l, i)) {
                b.lp.add_constraint(LinConstraint::eq(&QLinExpr::var(u), &QLinExpr::zero()));
            }
            e.set_coeff(i, QLinExpr::var(u));
        }
        let u = b.lp.add_free(format!("b_{name}"));
        e.set_constant(QLinExpr::var(u));
        b.templates.push(e);
    }
    let mut eps = Vec::new();
    for &k in t {
        let id = &p.transitions[k].id;
        let u = b.lp.add_var(
            format!("eps_{id}"),
            Some(Rational::zero()),
            Some(Rational::one()),
        );
        if restrict.force_ranked.contains(&k) {
            b.lp.add_constraint(LinConstraint::eq(
                &QLinExpr::var(u),
                &QLinExpr::constant(Rational::one()),
            ));
        }
        if restrict.force_unranked.contains(&k) {
            b.lp.add_constraint(LinConstraint::eq(&QLinExpr::var(u), &QLinExpr::zero()));
        }
        eps.push((k, u));
    }

    // Fresh universal variable standing for a nondeterministic choice.
    let fresh = n;
    for &(k, eps_u) in &eps {
        let tr = &p.transitions[k];
        let eta_here = b.template(tr.source);
        let form = pre_form(|l| b.templates[l].clone(), tr);
        let (pre, bounds) = form.universal(fresh);
        let pb_cases = match tr.kind {
            TransitionKind::Pb { .. } => {
                let in_set = |l: LocId| -> QPredicate {
                    negate_guards_to_dnf(&unranked_guards(p, t, l), cap)
                        .unwrap_or_else(|_| QPredicate::falsity())
                };
                // Surface a blowup as an error rather than silently using `false`.
                for l in tr.targets() {
                    negate_guards_to_dnf(&unranked_guards(p, t, l), cap)?;
                }
                Some(pre_pb_restricted(
                    |l| b.templates[l].clone(),
                    tr,
                    in_set,
                    cap,
                )?)
            }
            TransitionKind::Npb { .. } => None,
        };
        for d in antecedents(p, inv, k) {
            // Non-negativity.
            b.imply(&d, eta_here.clone());
            // eta - pre - eps >= 0: unaffecting, and a decrease of eps.
            let mut rank = eta_here.minus(&pre);
            rank.add_to_constant(&QLinExpr::var(eps_u).negated());
            b.imply(&d.conj(&bounds), rank);
            match &pb_cases {
                None => b.imply(&d.conj(&bounds), pre.clone()),
                Some(cases) => {
                    for (ctx, e) in cases {
                        for c in ctx.disjuncts() {
                            b.imply(&d.conj(c), e.clone());
                        }
                    }
                }
            }
        }
    }
    let mut obj = QLinExpr::zero();
    for &(_, u) in &eps {
        obj.add_term(u, Rational::one());
    }
    b.lp.set_objective(obj);
    Ok(IterationLp {
        lp: b.lp,
        templates: b.templates,
        eps,
        dropped_antecedents: b.dropped,
    })
}

impl IterationLp {
    /// `Ok(None)` when infeasible.
    pub fn solve(&self, opts: &SolveOptions) -> Result<Option<Ranking>, LpError> {
        let (assignment, value) = match solve_lp_with(&self.lp, opts)? {
            LpOutcome::Optimal {
                assignment, value, ..
            } => (assignment, value),
            LpOutcome::Infeasible => return Ok(None),
            LpOutcome::Unbounded => {
                unreachable!("the objective is a sum of variables bounded by 1")
            }
        };
        let positive: Vec<(usize, Rational)> = self
            .eps
            .iter()
            .filter(|(_, u)| assignment[*u].is_positive())
            .map(|(k, u)| (*k, assignment[*u].clone()))
            .collect();
        let scale = positive
            .iter()
            .map(|(_, e)| e.clone())
            .min()
            .map_or_else(Rational::one, |m| Rational::one() / m);
        let component = self
            .templates
            .iter()
            .map(|t| t.instantiate(&assignment).scaled(&scale))
            .collect();
        Ok(Some(Ranking {
            component,
            ranked: positive.into_iter().map(|(k, _)| k).collect(),
            objective: value,
        }))
    }
}

fn check_common(p: &Pcfg, inv: &Invariant) -> Result<(), SynthesisError> {
    let diags = validate_pcfg(p);
    if !diags.is_empty() {
        return Err(SynthesisError::InvalidProgram(diags));
    }
    if inv.per_location.len() > p.locations.len() {
        return Err(SynthesisError::InvariantShape {
            got: inv.per_location.len(),
            want: p.locations.len(),
        });
    }
    Ok(())
}

fn initial_set(p: &Pcfg) -> BTreeSet<usize> {
    (0..p.transitions.len())
        .filter(|&k| !p.is_terminal_self_loop(&p.transitions[k]))
        .collect()
}

struct Run<'a> {
    p: &'a Pcfg,
    inv: &'a Invariant,
    opts: &'a SynthesisOptions,
    t: BTreeSet<usize>,
    components: Vec<Vec<QLinExpr>>,
    history: Vec<IterationRecord>,
}

impl Run<'_> {
    /// Solves one LP and records it. Returns the ranking when it ranks at
    /// least one transition.
    fn attempt(
        &mut self,
        restrict: &TemplateRestriction,
        candidate: Option<usize>,
    ) -> Result<Option<Ranking>, SynthesisError> {
        let built = build_lp(self.p, self.inv, &self.t, restrict, self.opts.dnf_cap)?;
        let mut rec = IterationRecord {
            iteration: self.components.len() + 1,
            unranked: self.t.len(),
            lp_unknowns: built.lp.num_vars(),
            lp_constraints: built.lp.num_constraints(),
            objective: None,
            ranked: Vec::new(),
            candidate: candidate.map(|k| self.p.transitions[k].id.clone()),
            accepted: false,
            dropped_antecedents: built.dropped_antecedents,
            warning: None,
            lp_text: self.opts.keep_lp_text.then(|| to_cplex_lp(&built.lp)),
        };
        let out = match built.solve(&self.opts.solve) {
            Ok(r) => r,
            Err(e) => {
                log::warn!(
                    "iteration {}: {e}; treating the LP as infeasible",
                    rec.iteration
                );
                rec.warning = Some(e.to_string());
                None
            }
        };
        if let Some(r) = &out {
            rec.objective = Some(format_rational(&r.objective));
        }
        let out = out.filter(|r| !r.ranked.is_empty());
        if let Some(r) = &out {
            rec.ranked = r
                .ranked
                .iter()
                .map(|&k| self.p.transitions[k].id.clone())
                .collect();
            rec.accepted = true;
        }
        self.history.push(rec);
        Ok(out)
    }

    fn accept(&mut self, r: Ranking) {
        for k in &r.ranked {
            self.t.remove(k);
        }
        self.components.push(r.component);
    }

    fn no_witness(self) -> SynthesisOutcome {
        SynthesisOutcome {
            verdict: Verdict::NoWitness {
                unranked: self
                    .t
                    .iter()
                    .map(|&k| self.p.transitions[k].id.clone())
                    .collect(),
            },
            history: self.history,
        }
    }

    fn finish(self, mode: CertificateMode, shift_base: Option<Rational>) -> SynthesisOutcome {
        let p = self.p;
        let dimension = self.components.len();
        let mut per_loc: Vec<Vec<QLinExpr>> = (0..p.locations.len())
            .map(|l| self.components.iter().map(|c| c[l].clone()).collect())
            .collect();
        let levels = extract_level_map(p, &self.history);
        let mut cert = Certificate {
            dimension,
            components: std::mem::take(&mut per_loc),
            levels,
            shift: Rational::zero(),
            mode,
        };
        if let Some(n) = shift_base {
            let k = Rational::from_integer(2.into()) * n * cert.max_coeff();
            for comps in &mut cert.components {
                for e in comps {
                    e.add_constant(k.clone());
                }
            }
            cert.shift = k;
        }
        SynthesisOutcome {
            verdict: Verdict::Found(cert),
            history: self.history,
        }
    }
}

/// Levels from the accepted records: the iteration in which a transition
/// was ranked, 0 for terminal self-loops.
pub fn extract_level_map(p: &Pcfg, history: &[IterationRecord]) -> Vec<usize> {
    let mut levels = vec![0; p.transitions.len()];
    for rec in history.iter().filter(|r| r.accepted) {
        for id in &rec.ranked {
            if let Some(k) = p.transition_index(id) {
                levels[k] = rec.iteration;
            }
        }
    }
    levels
}

/// Synthesis for programs whose sampled distributions all have bounded
/// support. Complete for the given invariant: `NoWitness` means no linear
/// certificate of this kind exists.
pub fn synthesize_bsp(p: &Pcfg, inv: &Invariant) -> Result<SynthesisOutcome, SynthesisError> {
    synthesize_bsp_with(p, inv, &SynthesisOptions::default())
}

pub fn synthesize_bsp_with(
    p: &Pcfg,
    inv: &Invariant,
    opts: &SynthesisOptions,
) -> Result<SynthesisOutcome, SynthesisError> {
    check_common(p, inv)?;
    if !check_bsp(p).0 {
        return Err(SynthesisError::NotBsp);
    }
    let mut run = Run {
        p,
        inv,
        opts,
        t: initial_set(p),
        components: Vec::new(),
        history: Vec::new(),
    };
    while !run.t.is_empty() {
        match run.attempt(&TemplateRestriction::default(), None)? {
            Some(r) => run.accept(r),
            None => return Ok(run.no_witness()),
        }
    }
    let n = effective_support_bound(p).expect("bounded support was checked");
    Ok(run.finish(CertificateMode::BspComplete, Some(n)))
}

/// Synthesis for programs that may sample from unbounded distributions.
/// Sound but not complete for termination: `NoWitness` means unknown.
pub fn synthesize_general(p: &Pcfg, inv: &Invariant) -> Result<SynthesisOutcome, SynthesisError> {
    synthesize_general_with(p, inv, &SynthesisOptions::default())
}

pub fn synthesize_general_with(
    p: &Pcfg,
    inv: &Invariant,
    opts: &SynthesisOptions,
) -> Result<SynthesisOutcome, SynthesisError> {
    check_common(p, inv)?;
    if !check_linpp_star(p) {
        return Err(SynthesisError::NotLinPPStar);
    }
    let unb: Vec<usize> = p.unbounded_sampling();
    let pin = |k: usize| -> (LocId, VarId) {
        let tr = &p.transitions[k];
        let target = tr
            .update()
            .target()
            .expect("sampling transitions assign a variable");
        (tr.targets()[0], target)
    };
    let mut run = Run {
        p,
        inv,
        opts,
        t: initial_set(p),
        components: Vec::new(),
        history: Vec::new(),
    };
    while !run.t.is_empty() {
        let live: Vec<usize> = unb.iter().copied().filter(|k| run.t.contains(k)).collect();
        let zero: BTreeSet<(LocId, VarId)> = live.iter().map(|&k| pin(k)).collect();
        let base = TemplateRestriction {
            zero_coeffs: zero.clone(),
            ..Default::default()
        };
        if let Some(r) = run.attempt(&base, None)? {
            run.accept(r);
            continue;
        }
        let mut found = None;
        for &k0 in &live {
            let (l0, v0) = pin(k0);
            let mut zero_coeffs = zero.clone();
            zero_coeffs.remove(&(l0, v0));
            let force_ranked = live
                .iter()
                .copied()
                .filter(|&k| k == k0 || pin(k).0 == l0)
                .collect();
            let restrict = TemplateRestriction {
                zero_coeffs,
                force_ranked,
                force_unranked: BTreeSet::new(),
            };
            if let Some(r) = run.attempt(&restrict, Some(k0))? {
                found = Some(r);
                break;
            }
        }
        match found {
            Some(r) => run.accept(r),
            None => return Ok(run.no_witness()),
        }
    }
    Ok(run.finish(CertificateMode::GeneralSound, None))
}
