//! Independent verification of a certificate against a program and invariant.
//!
//! Every condition is an entailment `I(ℓ) ∧ G(τ) ⇒ e ≥ 0` with a concrete
//! `e`, discharged disjunct by disjunct with an exact LP. Nondeterministic
//! assignments are resolved at interval endpoints since the coefficients are
//! known here.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::linear::{negate_guards_to_dnf, LinConstraint, LinearError, DEFAULT_DNF_CAP};
use crate::lp::{check_feasible, entailment_counterexample};
use crate::model::{
    effective_support_bound, Certificate, CertificateMode, LocId, Pcfg, Transition, TransitionKind,
};
use crate::num::format_rational;
use crate::preexp::{max_pre, min_pre, pre_pb_restricted, PreExpError};
use crate::{QLinExpr, QPolyhedron, QPredicate, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("certificate does not match the program: {0}")]
    StructuralMismatch(String),
    #[error(transparent)]
    Encoding(#[from] LinearError),
}

impl From<PreExpError> for CheckError {
    fn from(e: PreExpError) -> Self {
        match e {
            PreExpError::Encoding(l) => CheckError::Encoding(l),
            other => unreachable!("concrete pre-expectation cannot fail with {other}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Condition {
    #[serde(rename = "LEVEL")]
    Level,
    #[serde(rename = "P-RANK")]
    PRank,
    /// Components left of the level do not increase in expectation.
    #[serde(rename = "P-RANK-UNAFFECTING")]
    Unaffecting,
    #[serde(rename = "P-NNEG")]
    PNneg,
    #[serde(rename = "W-EXP-NNEG")]
    WExpNneg,
    #[serde(rename = "EXP-NNEG")]
    ExpNneg,
    #[serde(rename = "UNBOUND")]
    Unbound,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Level => "LEVEL",
            Condition::PRank => "P-RANK",
            Condition::Unaffecting => "P-RANK-UNAFFECTING",
            Condition::PNneg => "P-NNEG",
            Condition::WExpNneg => "W-EXP-NNEG",
            Condition::ExpNneg => "EXP-NNEG",
            Condition::Unbound => "UNBOUND",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one condition on one transition and component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub transition: String,
    pub condition: Condition,
    /// 1-based component, absent for level sanity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    #[serde(rename = "status", serialize_with = "status_text")]
    pub holds: bool,
    /// Variable name to `"p/q"` value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

fn status_text<S: serde::Serializer>(holds: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(if *holds { "holds" } else { "violated" })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub applied: Rational,
    /// `2·N·max_coeff` with `N` the effective support bound.
    pub required: Rational,
}

impl ShiftReport {
    pub fn sufficient(&self) -> bool {
        self.applied >= self.required
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub mode: CertificateMode,
    pub conditions: Vec<ConditionResult>,
    /// Only for bounded-support certificates.
    pub shift: Option<ShiftReport>,
    pub assumptions: Vec<String>,
}

impl CheckReport {
    pub fn accepted(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConditionResult> {
        self.conditions.iter().filter(|c| !c.holds)
    }

    /// How termination follows from the verified conditions.
    pub fn argument(&self) -> String {
        match (self.mode, &self.shift) {
            (CertificateMode::BspComplete, Some(s)) if s.sufficient() => {
                "the stored map is a ranking map: premise conditions hold and the applied shift covers the bounded supports".into()
            }
            (CertificateMode::BspComplete, Some(s)) => format!(
                "premise conditions hold; adding {} to every component yields a ranking map",
                format_rational(&(s.required.clone() - s.applied.clone()))
            ),
            _ => "premise conditions hold, including zero coefficients for unbounded sampling targets; a piecewise linear ranking map exists".into(),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "verdict": if self.accepted() { "accepted" } else { "rejected" },
            "mode": self.mode.as_str(),
            "conditions": self.conditions,
        });
        if self.accepted() {
            v["argument"] = json!(self.argument());
        }
        if let Some(s) = &self.shift {
            v["shift"] = json!({
                "applied": format_rational(&s.applied),
                "required": format_rational(&s.required),
                "sufficient": s.sufficient(),
            });
        }
        if !self.assumptions.is_empty() {
            v["assumptions"] = json!(self.assumptions);
        }
        v
    }
}

fn structural(p: &Pcfg, c: &Certificate) -> Result<(), CheckError> {
    let bad = |m: String| Err(CheckError::StructuralMismatch(m));
    if c.components.len() != p.locations.len() {
        return bad(format!(
            "{} locations in certificate, {} in program",
            c.components.len(),
            p.locations.len()
        ));
    }
    for (l, comps) in c.components.iter().enumerate() {
        if comps.len() != c.dimension {
            return bad(format!(
                "location {} has {} components, dimension is {}",
                p.locations[l],
                comps.len(),
                c.dimension
            ));
        }
        for e in comps {
            if let Some((i, _)) = e.coeffs().find(|(i, _)| *i >= p.num_vars()) {
                return bad(format!(
                    "component at {} uses variable index {i}",
                    p.locations[l]
                ));
            }
        }
    }
    if c.levels.len() != p.transitions.len() {
        return bad(format!(
            "{} levels for {} transitions",
            c.levels.len(),
            p.transitions.len()
        ));
    }
    if let Some(k) = c.levels.iter().position(|&l| l > c.dimension) {
        return bad(format!(
            "transition {} has level {} above dimension {}",
            p.transitions[k].id, c.levels[k], c.dimension
        ));
    }
    Ok(())
}

struct Ctx<'a> {
    p: &'a Pcfg,
    c: &'a Certificate,
    out: Vec<ConditionResult>,
}

impl Ctx<'_> {
    fn point(&self, x: Vec<Rational>) -> BTreeMap<String, String> {
        self.p
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let val = x.get(i).cloned().unwrap_or_else(Rational::zero);
                (v.clone(), format_rational(&val))
            })
            .collect()
    }

    /// Records whether `e ≥ 0` holds on every antecedent.
    fn require(
        &mut self,
        tr: &Transition,
        cond: Condition,
        j: usize,
        ante: &[QPolyhedron],
        e: &QLinExpr,
    ) {
        let c = LinConstraint::ge(e, &QLinExpr::zero());
        let cex = ante.iter().find_map(|d| entailment_counterexample(d, &c));
        self.out.push(ConditionResult {
            transition: tr.id.clone(),
            condition: cond,
            component: Some(j),
            holds: cex.is_none(),
            counterexample: cex.map(|x| self.point(x)),
            detail: None,
        });
    }

    fn eta(&self, j: usize) -> impl Fn(LocId) -> QLinExpr + '_ {
        move |l| self.c.component(l, j).clone()
    }

    /// Guards of transitions at `loc` whose level is at least `k`.
    fn high_guards(&self, loc: LocId, k: usize) -> Vec<QPredicate> {
        self.p
            .transitions
            .iter()
            .zip(&self.c.levels)
            .filter(|(t, &lev)| t.source == loc && lev >= k)
            .map(|(t, _)| t.guard())
            .collect()
    }
}

/// Checks the premise conditions for every transition.
///
/// The antecedent of each condition is every feasible disjunct of
/// `I(ℓ) ∧ G(τ)`. For branching transitions, non-negativity in expectation
/// is restricted to successors of level below the component, and the
/// successor set at a location is the complement of the guards of its
/// transitions with level at or above the component.
pub fn check_certificate(
    p: &Pcfg,
    inv: &crate::model::Invariant,
    c: &Certificate,
) -> Result<CheckReport, CheckError> {
    check_certificate_with_cap(p, inv, c, DEFAULT_DNF_CAP)
}

pub fn check_certificate_with_cap(
    p: &Pcfg,
    inv: &crate::model::Invariant,
    c: &Certificate,
    cap: usize,
) -> Result<CheckReport, CheckError> {
    structural(p, c)?;
    if inv.per_location.len() > p.locations.len() {
        return Err(CheckError::StructuralMismatch(format!(
            "invariant covers {} locations, program has {}",
            inv.per_location.len(),
            p.locations.len()
        )));
    }
    let mut cx = Ctx {
        p,
        c,
        out: Vec::new(),
    };
    for (k, tr) in p.transitions.iter().enumerate() {
        let lev = c.levels[k];
        let terminal_loop = p.is_terminal_self_loop(tr);
        if (lev == 0) != terminal_loop {
            cx.out.push(ConditionResult {
                transition: tr.id.clone(),
                condition: Condition::Level,
                component: None,
                holds: false,
                counterexample: None,
                detail: Some(if terminal_loop {
                    format!("terminal self-loop has level {lev}")
                } else {
                    "level 0 is reserved for terminal self-loops".into()
                }),
            });
        }
        if lev == 0 {
            continue;
        }
        let base = inv.at(tr.source);
        let ante: Vec<QPolyhedron> = tr
            .guard()
            .disjuncts()
            .iter()
            .map(|g| base.conj(g))
            .filter(|d| check_feasible(d).is_some())
            .collect();

        let here = |j: usize| c.component(tr.source, j).clone();
        for j in 1..=lev {
            let up = max_pre(cx.eta(j), tr)?;
            let mut d = here(j).minus(&up);
            if j == lev {
                d.add_constant(-Rational::one());
                cx.require(tr, Condition::PRank, j, &ante, &d);
            } else {
                cx.require(tr, Condition::Unaffecting, j, &ante, &d);
            }
            cx.require(tr, Condition::PNneg, j, &ante, &here(j));
            match tr.kind {
                TransitionKind::Npb { .. } => {
                    let lo = min_pre(cx.eta(j), tr)?;
                    cx.require(tr, Condition::WExpNneg, j, &ante, &lo);
                }
                TransitionKind::Pb { .. } => {
                    let in_set = |l: LocId| -> Result<QPredicate, LinearError> {
                        negate_guards_to_dnf(&cx.high_guards(l, j), cap)
                    };
                    // Compute the sets up front so blowups surface as errors.
                    let sets: BTreeMap<LocId, QPredicate> = tr
                        .targets()
                        .into_iter()
                        .map(|l| in_set(l).map(|s| (l, s)))
                        .collect::<Result<_, _>>()?;
                    let cases = pre_pb_restricted(cx.eta(j), tr, |l| sets[&l].clone(), cap)?;
                    let mut first_cex = None;
                    for (ctx, e) in &cases {
                        let narrowed: Vec<QPolyhedron> = ante
                            .iter()
                            .flat_map(|d| ctx.disjuncts().iter().map(move |g| d.conj(g)))
                            .collect();
                        let c = LinConstraint::ge(e, &QLinExpr::zero());
                        first_cex = narrowed
                            .iter()
                            .find_map(|d| entailment_counterexample(d, &c));
                        if first_cex.is_some() {
                            break;
                        }
                    }
                    cx.out.push(ConditionResult {
                        transition: tr.id.clone(),
                        condition: Condition::ExpNneg,
                        component: Some(j),
                        holds: first_cex.is_none(),
                        counterexample: first_cex.map(|x| cx.point(x)),
                        detail: None,
                    });
                }
            }
        }
    }

    let mut assumptions = Vec::new();
    let shift = match c.mode {
        CertificateMode::BspComplete => match effective_support_bound(p) {
            Some(n) => Some(ShiftReport {
                applied: c.shift.clone(),
                required: Rational::from_integer(2.into()) * n * c.max_coeff(),
            }),
            None => return Err(CheckError::StructuralMismatch(
                "bounded-support certificate for a program sampling from an unbounded distribution"
                    .into(),
            )),
        },
        CertificateMode::GeneralSound => {
            check_unbound(&mut cx);
            assumptions.push(
                "existence of a piecewise linear ranking map from the verified premise conditions is taken from the published proof; its constant depends on distribution tails and is not constructed".into(),
            );
            None
        }
    };

    let mut conditions = cx.out;
    conditions.sort_by(|a, b| {
        (&a.transition, a.component, a.condition).cmp(&(&b.transition, b.component, b.condition))
    });
    Ok(CheckReport {
        mode: c.mode,
        conditions,
        shift,
        assumptions,
    })
}

/// For a transition sampling from an unbounded distribution at level `j`,
/// components below `j` at its destination must ignore the sampled variable.
fn check_unbound(cx: &mut Ctx<'_>) {
    for k in cx.p.unbounded_sampling() {
        let tr = &cx.p.transitions[k];
        let lev = cx.c.levels[k];
        let Some(var) = tr.update().target() else {
            continue;
        };
        let dest = tr.targets()[0];
        for j in 1..lev {
            let coeff = cx.c.component(dest, j).coeff(var);
            let holds = coeff.is_zero();
            cx.out.push(ConditionResult {
                transition: tr.id.clone(),
                condition: Condition::Unbound,
                component: Some(j),
                holds,
                counterexample: None,
                detail: (!holds).then(|| {
                    format!(
                        "coefficient of {} at {} is {}",
                        cx.p.variables[var],
                        cx.p.locations[dest],
                        format_rational(&coeff)
                    )
                }),
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no transition is enabled at {location}")]
pub struct Stuck {
    pub location: String,
}

/// The largest level of a transition enabled at `(loc, x)`; 0 at the
/// terminal location.
pub fn state_level(p: &Pcfg, c: &Certificate, loc: LocId, x: &[Rational]) -> Result<usize, Stuck> {
    if loc == p.terminal {
        return Ok(0);
    }
    p.outgoing(loc)
        .filter(|(_, t)| t.guard().holds(x))
        .map(|(k, _)| c.levels[k])
        .max()
        .ok_or_else(|| Stuck {
            location: p.locations[loc].clone(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{compile, parse_condition};
    use crate::model::Invariant;
    use crate::num::int;

    const FIG_B: &str = "l0: while x >= 0 do
  if y >= 0 then
    y := y + Unif[-7, 1]
  else
    x := x + Unif[-7, 1];
    l1: y := y + Unif[-7, 1]
  fi
od";

    fn expr(p: &Pcfg, text: &str) -> QLinExpr {
        // `e >= 0` parses to the normalized constraint `-e <= 0`.
        let c = parse_condition(&format!("{text} >= 0"), &p.variables).unwrap();
        let pred = c.to_dnf(DEFAULT_DNF_CAP).unwrap();
        pred.disjuncts()[0].constraints[0].lhs.negated()
    }

    fn example3() -> (Pcfg, Invariant, Certificate) {
        let p = compile(FIG_B).unwrap();
        let mut inv = Invariant::trivial(&p);
        let l1 = p.location_index("l1").unwrap();
        let c = parse_condition("x >= -7", &p.variables).unwrap();
        inv.set(
            l1,
            c.to_dnf(DEFAULT_DNF_CAP).unwrap().disjuncts()[0].clone(),
        );
        let comps = |a: &str, b: &str, c: &str| vec![expr(&p, a), expr(&p, b), expr(&p, c)];
        let mut components = vec![Vec::new(); p.locations.len()];
        components[p.location_index("l0").unwrap()] = comps("1", "x + 7", "y + 7");
        components[l1] = comps("1", "x + 8", "y + 7");
        components[p.terminal] = comps("0", "x + 7", "y + 7");
        let levels = p
            .transitions
            .iter()
            .map(|t| {
                let src = &p.locations[t.source];
                let dst = &p.locations[t.targets()[0]];
                match (src.as_str(), dst.as_str()) {
                    (_, "l_out") if src != "l_out" => 1,
                    ("l0", "l1") | ("l1", "l0") => 2,
                    ("l0", "l0") => 3,
                    _ => 0,
                }
            })
            .collect();
        let cert = Certificate {
            dimension: 3,
            components,
            levels,
            shift: int(0),
            mode: CertificateMode::BspComplete,
        };
        (p, inv, cert)
    }

    #[test]
    fn example3_is_accepted_as_premise_witness() {
        let (p, inv, c) = example3();
        let r = check_certificate(&p, &inv, &c).unwrap();
        assert!(r.accepted(), "{:?}", r.violations().collect::<Vec<_>>());
        let s = r.shift.as_ref().unwrap();
        assert_eq!(s.required, int(14));
        assert!(!s.sufficient());
    }

    #[test]
    fn shifted_example3_is_a_ranking_map() {
        let (p, inv, mut c) = example3();
        for comps in &mut c.components {
            for e in comps {
                e.add_constant(int(14));
            }
        }
        c.shift = int(14);
        let r = check_certificate(&p, &inv, &c).unwrap();
        assert!(r.accepted());
        assert!(r.shift.unwrap().sufficient());
    }

    #[test]
    fn weakened_decrease_is_rejected_on_the_right_transition() {
        let (p, inv, mut c) = example3();
        let l1 = p.location_index("l1").unwrap();
        c.components[l1][1] = expr(&p, "x + 6");
        let r = check_certificate(&p, &inv, &c).unwrap();
        let bad: Vec<_> = r.violations().collect();
        let back = p
            .transitions
            .iter()
            .find(|t| t.source == l1)
            .unwrap()
            .id
            .clone();
        assert!(bad.iter().any(|v| v.transition == back
            && v.condition == Condition::PRank
            && v.component == Some(2)));
        let v = bad
            .iter()
            .find(|v| v.condition == Condition::PRank)
            .unwrap();
        assert!(v.counterexample.is_some());
    }

    #[test]
    fn wrong_dimension_is_structural() {
        let (p, inv, mut c) = example3();
        c.dimension = 2;
        assert!(matches!(
            check_certificate(&p, &inv, &c),
            Err(CheckError::StructuralMismatch(_))
        ));
    }

    #[test]
    fn level_zero_off_terminal_is_reported() {
        let (p, inv, mut c) = example3();
        c.levels[0] = 0;
        let r = check_certificate(&p, &inv, &c).unwrap();
        assert!(r.violations().any(|v| v.condition == Condition::Level));
    }

    #[test]
    fn state_levels() {
        let (p, _, c) = example3();
        let l0 = p.location_index("l0").unwrap();
        assert_eq!(state_level(&p, &c, p.terminal, &[int(5), int(5)]), Ok(0));
        let (x, y) = (
            p.variable_index("x").unwrap(),
            p.variable_index("y").unwrap(),
        );
        let mut s = vec![int(0), int(0)];
        s[x] = int(1);
        s[y] = int(1);
        assert_eq!(state_level(&p, &c, l0, &s), Ok(3));
        s[x] = int(-1);
        s[y] = int(0);
        assert_eq!(state_level(&p, &c, l0, &s), Ok(1));
    }

    #[test]
    fn verdict_json_shape() {
        let (p, inv, c) = example3();
        let v = check_certificate(&p, &inv, &c).unwrap().to_json();
        assert_eq!(v["verdict"], "accepted");
        assert_eq!(v["mode"], "bsp");
        let first = &v["conditions"][0];
        assert!(first["transition"].is_string());
        assert!(first["condition"].is_string());
        assert_eq!(first["status"], "holds");
    }
}
