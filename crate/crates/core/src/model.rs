//! Probabilistic control-flow graphs and their structural checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};

#[cfg(test)]
use crate::num::ratio;
use crate::num::{format_rational, int};
use crate::{QLinExpr, QPolyhedron, QPredicate, Rational};

pub type LocId = usize;
pub type VarId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum DistKind {
    Normal {
        mean: Rational,
        stddev: Rational,
    },
    Uniform {
        lo: Rational,
        hi: Rational,
    },
    DiscreteFinite(Vec<(Rational, Rational)>),
    Bernoulli(Rational),
    /// Sampled through a registered sampler; synthesis only reads the mean
    /// and the support.
    Custom {
        sampler: String,
    },
}

/// A distribution together with the two facts synthesis relies on: its
/// mean and its support interval (`None` for an infinite end).
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub mean: Rational,
    pub support_lo: Option<Rational>,
    pub support_hi: Option<Rational>,
}

impl DistributionSpec {
    pub fn normal(mean: Rational, stddev: Rational) -> Self {
        DistributionSpec {
            mean: mean.clone(),
            kind: DistKind::Normal { mean, stddev },
            support_lo: None,
            support_hi: None,
        }
    }

    pub fn uniform(lo: Rational, hi: Rational) -> Self {
        DistributionSpec {
            mean: (lo.clone() + hi.clone()) / int(2),
            support_lo: Some(lo.clone()),
            support_hi: Some(hi.clone()),
            kind: DistKind::Uniform { lo, hi },
        }
    }

    pub fn discrete(points: Vec<(Rational, Rational)>) -> Self {
        let mean = points
            .iter()
            .fold(Rational::zero(), |acc, (v, p)| acc + v.clone() * p.clone());
        let lo = points.iter().map(|(v, _)| v.clone()).min();
        let hi = points.iter().map(|(v, _)| v.clone()).max();
        DistributionSpec {
            kind: DistKind::DiscreteFinite(points),
            mean,
            support_lo: lo,
            support_hi: hi,
        }
    }

    pub fn bernoulli(p: Rational) -> Self {
        DistributionSpec {
            mean: p.clone(),
            kind: DistKind::Bernoulli(p),
            support_lo: Some(Rational::zero()),
            support_hi: Some(Rational::one()),
        }
    }

    pub fn custom(
        sampler: impl Into<String>,
        mean: Rational,
        support_lo: Option<Rational>,
        support_hi: Option<Rational>,
    ) -> Self {
        DistributionSpec {
            kind: DistKind::Custom {
                sampler: sampler.into(),
            },
            mean,
            support_lo,
            support_hi,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.support_lo.is_some() && self.support_hi.is_some()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            DistKind::Normal { .. } => "normal",
            DistKind::Uniform { .. } => "uniform",
            DistKind::DiscreteFinite(_) => "discrete",
            DistKind::Bernoulli(_) => "bernoulli",
            DistKind::Custom { .. } => "custom",
        }
    }

    /// Problems with the declared mean, support or parameters.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(lo) = &self.support_lo {
            if self.mean < *lo {
                out.push(format!(
                    "mean {} below support",
                    format_rational(&self.mean)
                ));
            }
        }
        if let Some(hi) = &self.support_hi {
            if self.mean > *hi {
                out.push(format!(
                    "mean {} above support",
                    format_rational(&self.mean)
                ));
            }
        }
        if let (Some(lo), Some(hi)) = (&self.support_lo, &self.support_hi) {
            if lo > hi {
                out.push("empty support".to_string());
            }
        }
        let analytic = match &self.kind {
            DistKind::Normal { mean, stddev } => {
                if !stddev.is_positive() {
                    out.push("standard deviation must be positive".to_string());
                }
                if self.support_lo.is_some() || self.support_hi.is_some() {
                    out.push("normal distribution has unbounded support".to_string());
                }
                Some(mean.clone())
            }
            DistKind::Uniform { lo, hi } => {
                if lo >= hi {
                    out.push("uniform bounds must satisfy lo < hi".to_string());
                }
                if self.support_lo.as_ref() != Some(lo) || self.support_hi.as_ref() != Some(hi) {
                    out.push("uniform support must equal its bounds".to_string());
                }
                Some((lo.clone() + hi.clone()) / int(2))
            }
            DistKind::DiscreteFinite(points) => {
                if points.is_empty() {
                    out.push("discrete distribution needs at least one value".to_string());
                }
                if points.iter().any(|(_, p)| !p.is_positive()) {
                    out.push("discrete probabilities must be positive".to_string());
                }
                let total = points
                    .iter()
                    .fold(Rational::zero(), |a, (_, p)| a + p.clone());
                if !total.is_one() {
                    out.push(format!(
                        "discrete probabilities sum to {}",
                        format_rational(&total)
                    ));
                }
                let lo = points.iter().map(|(v, _)| v.clone()).min();
                let hi = points.iter().map(|(v, _)| v.clone()).max();
                if lo != self.support_lo || hi != self.support_hi {
                    out.push("discrete support must span its values".to_string());
                }
                Some(
                    points
                        .iter()
                        .fold(Rational::zero(), |a, (v, p)| a + v.clone() * p.clone()),
                )
            }
            DistKind::Bernoulli(p) => {
                if p.is_negative() || *p > Rational::one() {
                    out.push("bernoulli parameter outside [0, 1]".to_string());
                }
                if self.support_lo != Some(Rational::zero())
                    || self.support_hi != Some(Rational::one())
                {
                    out.push("bernoulli support must be [0, 1]".to_string());
                }
                Some(p.clone())
            }
            DistKind::Custom { .. } => None,
        };
        if let Some(m) = analytic {
            if m != self.mean {
                out.push(format!(
                    "declared mean {} differs from analytic mean {}",
                    format_rational(&self.mean),
                    format_rational(&m)
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateElement {
    NoUpdate,
    /// `x_target := base + coeff·X` with `X ~ dist` when a sample is present.
    Expr {
        target: VarId,
        base: QLinExpr,
        sample: Option<(Rational, DistributionSpec)>,
    },
    /// `x_target := any value in [lo, hi]`, chosen by the scheduler.
    Nondet {
        target: VarId,
        lo: Rational,
        hi: Rational,
    },
}

impl UpdateElement {
    pub fn target(&self) -> Option<VarId> {
        match self {
            UpdateElement::NoUpdate => None,
            UpdateElement::Expr { target, .. } | UpdateElement::Nondet { target, .. } => {
                Some(*target)
            }
        }
    }

    pub fn sample(&self) -> Option<&(Rational, DistributionSpec)> {
        match self {
            UpdateElement::Expr { sample, .. } => sample.as_ref(),
            _ => None,
        }
    }

    /// Samples from a distribution with unbounded support.
    pub fn has_unbounded_sampling(&self) -> bool {
        self.sample()
            .is_some_and(|(c, d)| !c.is_zero() && !d.is_bounded())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKind {
    /// Probabilistic branching: two successors with probabilities summing to one.
    Pb { branches: [(LocId, Rational); 2] },
    Npb {
        dest: LocId,
        guard: QPredicate,
        update: UpdateElement,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: String,
    pub source: LocId,
    pub kind: TransitionKind,
}

impl Transition {
    pub fn is_pb(&self) -> bool {
        matches!(self.kind, TransitionKind::Pb { .. })
    }

    /// Successor locations (one for NPB, two for PB).
    pub fn targets(&self) -> Vec<LocId> {
        match &self.kind {
            TransitionKind::Pb { branches } => vec![branches[0].0, branches[1].0],
            TransitionKind::Npb { dest, .. } => vec![*dest],
        }
    }

    /// The guard; probabilistic branching is always enabled.
    pub fn guard(&self) -> QPredicate {
        match &self.kind {
            TransitionKind::Pb { .. } => QPredicate::truth(),
            TransitionKind::Npb { guard, .. } => guard.clone(),
        }
    }

    pub fn update(&self) -> &UpdateElement {
        match &self.kind {
            TransitionKind::Pb { .. } => &UpdateElement::NoUpdate,
            TransitionKind::Npb { update, .. } => update,
        }
    }

    pub fn is_self_loop_at(&self, loc: LocId) -> bool {
        self.source == loc && self.targets().iter().all(|t| *t == loc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    pub variables: Vec<String>,
    pub locations: Vec<String>,
    pub init: LocId,
    pub terminal: LocId,
    pub transitions: Vec<Transition>,
}

/// One structural problem found by [`validate_pcfg`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    NonSelfLoopAtTerminal { transition: String },
    PBProbNotOne { transition: String },
    PBProbNotPositive { transition: String },
    NoOutgoingTransition { location: String },
    UnknownLocation { what: String },
    UnknownVariable { transition: String, index: usize },
    EmptyNondetInterval { transition: String },
    BadDistribution { transition: String, reason: String },
    DuplicateTransitionId { id: String },
    DuplicateName { name: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NonSelfLoopAtTerminal { transition } => {
                write!(f, "transition {transition} leaves the terminal location")
            }
            Diagnostic::PBProbNotOne { transition } => {
                write!(f, "branch probabilities of {transition} do not sum to 1")
            }
            Diagnostic::PBProbNotPositive { transition } => {
                write!(f, "branch probability of {transition} is not positive")
            }
            Diagnostic::NoOutgoingTransition { location } => {
                write!(f, "location {location} has no outgoing transition")
            }
            Diagnostic::UnknownLocation { what } => write!(f, "unknown location in {what}"),
            Diagnostic::UnknownVariable { transition, index } => {
                write!(
                    f,
                    "transition {transition} mentions unknown variable #{index}"
                )
            }
            Diagnostic::EmptyNondetInterval { transition } => {
                write!(f, "nondeterministic interval of {transition} is empty")
            }
            Diagnostic::BadDistribution { transition, reason } => {
                write!(f, "distribution in {transition}: {reason}")
            }
            Diagnostic::DuplicateTransitionId { id } => write!(f, "duplicate transition id {id}"),
            Diagnostic::DuplicateName { name } => write!(f, "duplicate name {name}"),
        }
    }
}

impl Diagnostic {
    pub fn code(&self) -> &'static str {
        match self {
            Diagnostic::NonSelfLoopAtTerminal { .. } => "NonSelfLoopAtTerminal",
            Diagnostic::PBProbNotOne { .. } => "PBProbNotOne",
            Diagnostic::PBProbNotPositive { .. } => "PBProbNotPositive",
            Diagnostic::NoOutgoingTransition { .. } => "NoOutgoingTransition",
            Diagnostic::UnknownLocation { .. } => "UnknownLocation",
            Diagnostic::UnknownVariable { .. } => "UnknownVariable",
            Diagnostic::EmptyNondetInterval { .. } => "EmptyNondetInterval",
            Diagnostic::BadDistribution { .. } => "BadDistribution",
            Diagnostic::DuplicateTransitionId { .. } => "DuplicateTransitionId",
            Diagnostic::DuplicateName { .. } => "DuplicateName",
        }
    }
}

fn expr_vars_ok(e: &QLinExpr, n: usize) -> Option<usize> {
    e.variables().find(|i| *i >= n)
}

fn polyhedron_vars_ok(p: &QPolyhedron, n: usize) -> Option<usize> {
    p.constraints.iter().find_map(|c| expr_vars_ok(&c.lhs, n))
}

pub fn validate_pcfg(p: &Pcfg) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let nloc = p.locations.len();
    let nvar = p.variables.len();

    let mut seen = BTreeSet::new();
    for name in p.locations.iter().chain(p.variables.iter()) {
        if !seen.insert(name.as_str()) {
            out.push(Diagnostic::DuplicateName { name: name.clone() });
        }
    }
    if p.init >= nloc {
        out.push(Diagnostic::UnknownLocation {
            what: "init".to_string(),
        });
    }
    if p.terminal >= nloc {
        out.push(Diagnostic::UnknownLocation {
            what: "terminal".to_string(),
        });
    }

    let mut ids = BTreeSet::new();
    let mut has_outgoing = vec![false; nloc];
    for t in &p.transitions {
        if !ids.insert(t.id.as_str()) {
            out.push(Diagnostic::DuplicateTransitionId { id: t.id.clone() });
        }
        if t.source >= nloc || t.targets().iter().any(|l| *l >= nloc) {
            out.push(Diagnostic::UnknownLocation {
                what: format!("transition {}", t.id),
            });
            continue;
        }
        has_outgoing[t.source] = true;
        if t.source == p.terminal && !t.is_self_loop_at(p.terminal) {
            out.push(Diagnostic::NonSelfLoopAtTerminal {
                transition: t.id.clone(),
            });
        }
        match &t.kind {
            TransitionKind::Pb { branches } => {
                if branches.iter().any(|(_, q)| !q.is_positive()) {
                    out.push(Diagnostic::PBProbNotPositive {
                        transition: t.id.clone(),
                    });
                }
                if !(branches[0].1.clone() + branches[1].1.clone()).is_one() {
                    out.push(Diagnostic::PBProbNotOne {
                        transition: t.id.clone(),
                    });
                }
            }
            TransitionKind::Npb { guard, update, .. } => {
                let mut bad_var = guard
                    .disjuncts()
                    .iter()
                    .find_map(|d| polyhedron_vars_ok(d, nvar));
                match update {
                    UpdateElement::NoUpdate => {}
                    UpdateElement::Expr {
                        target,
                        base,
                        sample,
                    } => {
                        if *target >= nvar {
                            bad_var = bad_var.or(Some(*target));
                        }
                        bad_var = bad_var.or(expr_vars_ok(base, nvar));
                        if let Some((_, d)) = sample {
                            for reason in d.problems() {
                                out.push(Diagnostic::BadDistribution {
                                    transition: t.id.clone(),
                                    reason,
                                });
                            }
                        }
                    }
                    UpdateElement::Nondet { target, lo, hi } => {
                        if *target >= nvar {
                            bad_var = bad_var.or(Some(*target));
                        }
                        if lo > hi {
                            out.push(Diagnostic::EmptyNondetInterval {
                                transition: t.id.clone(),
                            });
                        }
                    }
                }
                if let Some(index) = bad_var {
                    out.push(Diagnostic::UnknownVariable {
                        transition: t.id.clone(),
                        index,
                    });
                }
            }
        }
    }
    for (l, name) in p.locations.iter().enumerate() {
        if l != p.terminal && !has_outgoing[l] {
            out.push(Diagnostic::NoOutgoingTransition {
                location: name.clone(),
            });
        }
    }
    out
}

/// Whether every sampled distribution has bounded support, and if so the
/// least `N` with every support bound and nondeterministic endpoint in
/// `[-N, N]`.
pub fn check_bsp(p: &Pcfg) -> (bool, Option<Rational>) {
    let mut n = Rational::zero();
    let mut bump = |v: &Rational| {
        if v.abs() > n {
            n = v.abs();
        }
    };
    for t in &p.transitions {
        match t.update() {
            UpdateElement::Expr {
                sample: Some((_, d)),
                ..
            } => match (&d.support_lo, &d.support_hi) {
                (Some(lo), Some(hi)) => {
                    bump(lo);
                    bump(hi);
                }
                _ => return (false, None),
            },
            UpdateElement::Nondet { lo, hi, .. } => {
                bump(lo);
                bump(hi);
            }
            _ => {}
        }
    }
    (true, Some(n))
}

/// Largest deviation of a sampled or nondeterministic assignment from its
/// mean-substituted (resp. endpoint) value, per unit coefficient in the
/// map: with `x := base + c·X` and `X ∈ [-N, N]` the assigned value moves
/// by at most `|c|·2N`. Returns `max(|c|·N)` over sampling terms and `N`
/// over nondeterministic intervals, or `None` without the BSP.
pub fn effective_support_bound(p: &Pcfg) -> Option<Rational> {
    let mut n = Rational::zero();
    for t in &p.transitions {
        let cand = match t.update() {
            UpdateElement::Expr {
                sample: Some((c, d)),
                ..
            } => {
                let (lo, hi) = (d.support_lo.as_ref()?, d.support_hi.as_ref()?);
                c.abs() * std::cmp::max(lo.abs(), hi.abs())
            }
            UpdateElement::Nondet { lo, hi, .. } => std::cmp::max(lo.abs(), hi.abs()),
            _ => continue,
        };
        if cand > n {
            n = cand;
        }
    }
    Some(n)
}

/// Whether no location is both a probabilistic-branching successor and the
/// target of a sampling transition.
pub fn check_linpp_star(p: &Pcfg) -> bool {
    let pb_targets: BTreeSet<LocId> = p
        .transitions
        .iter()
        .filter(|t| t.is_pb())
        .flat_map(|t| t.targets())
        .collect();
    !p.transitions.iter().any(|t| {
        t.update().sample().is_some() && t.targets().iter().any(|l| pb_targets.contains(l))
    })
}

impl Pcfg {
    pub fn location_index(&self, name: &str) -> Option<LocId> {
        self.locations.iter().position(|l| l == name)
    }

    pub fn variable_index(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn transition_index(&self, id: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t.id == id)
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn outgoing(&self, loc: LocId) -> impl Iterator<Item = (usize, &Transition)> + '_ {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.source == loc)
    }

    pub fn is_terminal_self_loop(&self, t: &Transition) -> bool {
        t.is_self_loop_at(self.terminal)
    }

    /// Transitions that sample from an unbounded-support distribution.
    pub fn unbounded_sampling(&self) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.update().has_unbounded_sampling())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn has_nondet_assignment(&self) -> bool {
        self.transitions
            .iter()
            .any(|t| matches!(t.update(), UpdateElement::Nondet { .. }))
    }
}

/// Per-location polyhedral over-approximation of the reachable states.
#[derive(Debug, Clone, PartialEq)]
pub struct Invariant {
    pub per_location: Vec<QPolyhedron>,
}

impl Invariant {
    pub fn trivial(p: &Pcfg) -> Self {
        Invariant {
            per_location: vec![QPolyhedron::top(); p.locations.len()],
        }
    }

    pub fn at(&self, loc: LocId) -> QPolyhedron {
        self.per_location.get(loc).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, loc: LocId, poly: QPolyhedron) {
        if self.per_location.len() <= loc {
            self.per_location.resize(loc + 1, QPolyhedron::top());
        }
        self.per_location[loc] = poly;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateMode {
    /// A ranking map for a program with bounded supports, shift included.
    BspComplete,
    /// A map satisfying the premise conditions (including the zero-coefficient
    /// restriction for unbounded sampling) from which a piecewise ranking map
    /// is known to exist.
    GeneralSound,
}

impl CertificateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateMode::BspComplete => "bsp",
            CertificateMode::GeneralSound => "general",
        }
    }
}

/// A linear expression map with its level map.
///
/// `components[loc][j]` is component `j + 1` at location `loc`;
/// `levels[k]` is the level of transition `k` (0 only for terminal loops).
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub dimension: usize,
    pub components: Vec<Vec<QLinExpr>>,
    pub levels: Vec<usize>,
    pub shift: Rational,
    pub mode: CertificateMode,
}

impl Certificate {
    /// True when the map certifies termination through the premise
    /// conditions rather than being a ranking map itself.
    pub fn is_premise_witness(&self) -> bool {
        self.mode == CertificateMode::GeneralSound
    }

    pub fn component(&self, loc: LocId, j: usize) -> &QLinExpr {
        &self.components[loc][j - 1]
    }

    /// Largest absolute variable coefficient over all components and locations.
    pub fn max_coeff(&self) -> Rational {
        self.components
            .iter()
            .flatten()
            .map(|e| e.max_abs_coeff())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Evaluates the full vector at a state.
    pub fn eval(&self, loc: LocId, x: &[Rational]) -> Vec<Rational> {
        self.components[loc].iter().map(|e| e.eval(x)).collect()
    }

    pub fn levels_by_id(&self, p: &Pcfg) -> BTreeMap<String, usize> {
        p.transitions
            .iter()
            .zip(&self.levels)
            .map(|(t, l)| (t.id.clone(), *l))
            .collect()
    }
}
