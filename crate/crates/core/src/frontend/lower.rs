use std::collections::BTreeSet;

use num_traits::One;

use crate::linear::{LinearError, DEFAULT_DNF_CAP};
use crate::model::{LocId, Pcfg, Transition, TransitionKind, UpdateElement};
use crate::{QPolyhedron, QPredicate, Rational};

use super::ast::{Cond, Rhs, SourceProgram, Stmt, StmtKind};
use super::ParseError;

const TERMINAL_NAME: &str = "l_out";

/// A control path that has left `src` under `guard`, possibly having
/// performed one assignment, and still needs a destination.
#[derive(Debug, Clone)]
struct Pending {
    src: LocId,
    guard: QPolyhedron,
    update: Option<UpdateElement>,
}

impl Pending {
    fn at(src: LocId) -> Self {
        Pending {
            src,
            guard: QPolyhedron::top(),
            update: None,
        }
    }

    fn is_trivial(&self) -> bool {
        self.guard.is_top() && self.update.is_none()
    }
}

enum Edge {
    Npb {
        src: LocId,
        dest: LocId,
        guard: QPolyhedron,
        update: UpdateElement,
    },
    Pb {
        src: LocId,
        branches: [(LocId, Rational); 2],
    },
}

struct Lowerer {
    names: Vec<Option<String>>,
    edges: Vec<Edge>,
    used_labels: BTreeSet<String>,
    cap: usize,
}

type LResult<T> = Result<T, ParseError>;

impl Lowerer {
    fn fresh(&mut self, name: Option<String>) -> LocId {
        self.names.push(name);
        self.names.len() - 1
    }

    fn has_outgoing(&self, loc: LocId) -> bool {
        self.edges.iter().any(|e| match e {
            Edge::Npb { src, .. } | Edge::Pb { src, .. } => *src == loc,
        })
    }

    fn emit(&mut self, pending: Vec<Pending>, dest: LocId) {
        for p in pending {
            self.edges.push(Edge::Npb {
                src: p.src,
                dest,
                guard: p.guard,
                update: p.update.unwrap_or(UpdateElement::NoUpdate),
            });
        }
    }

    /// A location that every pending path reaches, reusing the current one
    /// when nothing happened since control arrived there.
    fn settle(&mut self, pending: Vec<Pending>, name: Option<String>) -> LocId {
        if let [only] = pending.as_slice() {
            if only.is_trivial() && !self.has_outgoing(only.src) {
                let src = only.src;
                if let Some(n) = name {
                    if self.names[src].is_none() {
                        self.names[src] = Some(n);
                    } else {
                        let loc = self.fresh(Some(n));
                        self.emit(pending, loc);
                        return loc;
                    }
                }
                return src;
            }
        }
        let loc = self.fresh(name);
        self.emit(pending, loc);
        loc
    }

    fn claim_label(&mut self, stmt: &Stmt) -> LResult<Option<String>> {
        let Some(l) = &stmt.label else {
            return Ok(None);
        };
        if !self.used_labels.insert(l.clone()) || l == TERMINAL_NAME {
            return Err(ParseError::syntax(
                stmt.line,
                stmt.col,
                format!("location label '{l}' is already in use"),
            ));
        }
        Ok(Some(l.clone()))
    }

    fn dnf(&self, c: &Cond, negate: bool, stmt: &Stmt) -> LResult<QPredicate> {
        let r = if negate {
            c.to_dnf(self.cap).and_then(|p| p.negate(self.cap))
        } else {
            c.to_dnf(self.cap)
        };
        r.map_err(|e| match e {
            LinearError::EncodingBlowup { cap } => ParseError::syntax(
                stmt.line,
                stmt.col,
                format!("condition has more than {cap} disjuncts in normal form"),
            ),
        })
    }

    fn restrict(pending: &[Pending], pred: &QPredicate) -> Vec<Pending> {
        let mut out = Vec::new();
        for p in pending {
            for d in pred.disjuncts() {
                if let Some(guard) = p.guard.conj(d).simplified() {
                    out.push(Pending {
                        src: p.src,
                        guard,
                        update: None,
                    });
                }
            }
        }
        out
    }

    fn seq(&mut self, stmts: &[Stmt], mut pending: Vec<Pending>) -> LResult<Vec<Pending>> {
        for s in stmts {
            pending = self.stmt(s, pending)?;
        }
        Ok(pending)
    }

    fn stmt(&mut self, s: &Stmt, mut pending: Vec<Pending>) -> LResult<Vec<Pending>> {
        let label = self.claim_label(s)?;
        if !matches!(s.kind, StmtKind::While { .. }) {
            if let Some(name) = label.clone() {
                let loc = self.settle(pending, Some(name));
                pending = vec![Pending::at(loc)];
            }
        }
        let needs_fresh_source = pending.iter().any(|p| p.update.is_some());
        Ok(match &s.kind {
            StmtKind::Skip => pending,
            StmtKind::Assign { var, rhs } => {
                let update = match rhs {
                    Rhs::Expr { base, sample } => UpdateElement::Expr {
                        target: *var,
                        base: base.clone(),
                        sample: sample.clone(),
                    },
                    Rhs::Ndet { lo, hi } => UpdateElement::Nondet {
                        target: *var,
                        lo: lo.clone(),
                        hi: hi.clone(),
                    },
                };
                if needs_fresh_source {
                    let loc = self.settle(pending, None);
                    pending = vec![Pending::at(loc)];
                }
                for p in &mut pending {
                    p.update = Some(update.clone());
                }
                pending
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if needs_fresh_source {
                    let loc = self.settle(pending, None);
                    pending = vec![Pending::at(loc)];
                }
                let yes = self.dnf(cond, false, s)?;
                let no = self.dnf(cond, true, s)?;
                let then_in = Self::restrict(&pending, &yes);
                let else_in = Self::restrict(&pending, &no);
                let mut out = self.seq(then_branch, then_in)?;
                out.extend(self.seq(else_branch, else_in)?);
                out
            }
            StmtKind::While { cond, body } => {
                let head = self.settle(pending, label);
                let yes = self.dnf(cond, false, s)?;
                let no = self.dnf(cond, true, s)?;
                let body_in = Self::restrict(&[Pending::at(head)], &yes);
                let body_out = self.seq(body, body_in)?;
                self.emit(body_out, head);
                Self::restrict(&[Pending::at(head)], &no)
            }
            StmtKind::IfProb {
                prob,
                then_branch,
                else_branch,
            } => {
                let src = self.settle(pending, None);
                let a = self.fresh(None);
                let b = self.fresh(None);
                self.edges.push(Edge::Pb {
                    src,
                    branches: [(a, prob.clone()), (b, Rational::one() - prob.clone())],
                });
                let mut out = self.seq(then_branch, vec![Pending::at(a)])?;
                out.extend(self.seq(else_branch, vec![Pending::at(b)])?);
                out
            }
            StmtKind::IfNondet {
                then_branch,
                else_branch,
            } => {
                if needs_fresh_source {
                    let loc = self.settle(pending, None);
                    pending = vec![Pending::at(loc)];
                }
                let a = self.fresh(None);
                let b = self.fresh(None);
                self.emit(pending.clone(), a);
                self.emit(pending, b);
                let mut out = self.seq(then_branch, vec![Pending::at(a)])?;
                out.extend(self.seq(else_branch, vec![Pending::at(b)])?);
                out
            }
        })
    }
}

pub fn lower_to_pcfg(ast: &SourceProgram) -> Result<Pcfg, ParseError> {
    lower_with_cap(ast, DEFAULT_DNF_CAP)
}

/// Lowers with a configurable bound on the size of guard normal forms.
///
/// Locations: one per loop head, plus one wherever a path would otherwise
/// carry two assignments, plus the two branch targets of each `if prob` and
/// `if *`. Unlabelled locations are named `l0, l1, ...` in creation order,
/// skipping user labels; the terminal is `l_out`.
pub fn lower_with_cap(ast: &SourceProgram, cap: usize) -> Result<Pcfg, ParseError> {
    let mut lw = Lowerer {
        names: Vec::new(),
        edges: Vec::new(),
        used_labels: BTreeSet::new(),
        cap,
    };
    let init = lw.fresh(None);
    let out = lw.seq(&ast.stmts, vec![Pending::at(init)])?;
    let terminal = lw.fresh(Some(TERMINAL_NAME.to_string()));
    lw.emit(out, terminal);

    let mut counter = 0usize;
    let locations: Vec<String> = lw
        .names
        .iter()
        .map(|n| match n {
            Some(n) => n.clone(),
            None => loop {
                let cand = format!("l{counter}");
                counter += 1;
                if !lw.used_labels.contains(&cand) {
                    break cand;
                }
            },
        })
        .collect();

    let mut transitions: Vec<Transition> = lw
        .edges
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let id = format!("t{k}");
            match e {
                Edge::Npb {
                    src,
                    dest,
                    guard,
                    update,
                } => Transition {
                    id,
                    source: src,
                    kind: TransitionKind::Npb {
                        dest,
                        guard: QPredicate::from_polyhedron(guard),
                        update,
                    },
                },
                Edge::Pb { src, branches } => Transition {
                    id,
                    source: src,
                    kind: TransitionKind::Pb { branches },
                },
            }
        })
        .collect();
    transitions.push(Transition {
        id: format!("t{}", transitions.len()),
        source: terminal,
        kind: TransitionKind::Npb {
            dest: terminal,
            guard: QPredicate::truth(),
            update: UpdateElement::NoUpdate,
        },
    });

    Ok(Pcfg {
        variables: ast.variables.clone(),
        locations,
        init,
        terminal,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile;
    use crate::linear::LinConstraint;
    use crate::model::{validate_pcfg, DistributionSpec};
    use crate::num::int;
    use crate::QLinExpr;

    const FIG_A: &str = "l0: while y >= 0 do
  x := y;
  l1: while x >= 0 do
    x := x - 1 + Norm(0, 1)
  od;
  y := y - 1
od";

    const FIG_B: &str = "l0: while x >= 0 do
  if y >= 0 then
    y := y + Unif[-7, 1]
  else
    x := x + Unif[-7, 1];
    l1: y := y + Unif[-7, 1]
  fi
od";

    fn guard_of(p: &Pcfg, src: &str, dest: &str) -> Vec<QPredicate> {
        let (s, d) = (
            p.location_index(src).unwrap(),
            p.location_index(dest).unwrap(),
        );
        p.transitions
            .iter()
            .filter(|t| t.source == s && t.targets() == vec![d])
            .map(|t| t.guard())
            .collect()
    }

    fn atom(c: LinConstraint<Rational>) -> QPredicate {
        QPredicate::from_polyhedron(QPolyhedron::new(vec![c]))
    }

    #[test]
    fn nested_loops_lower_to_three_locations() {
        let p = compile(FIG_A).unwrap();
        assert!(validate_pcfg(&p).is_empty());
        assert_eq!(p.locations, vec!["l0", "l1", "l_out"]);
        assert_eq!(p.variables, vec!["y", "x"]);
        assert_eq!(p.transitions.len(), 5);
        let (y, x) = (QLinExpr::var(0), QLinExpr::var(1));
        let zero = QLinExpr::zero();
        assert_eq!(
            guard_of(&p, "l0", "l1"),
            vec![atom(LinConstraint::ge(&y, &zero))]
        );
        assert_eq!(
            guard_of(&p, "l0", "l_out"),
            vec![atom(LinConstraint::lt(&y, &zero))]
        );
        assert_eq!(
            guard_of(&p, "l1", "l1"),
            vec![atom(LinConstraint::ge(&x, &zero))]
        );
        assert_eq!(
            guard_of(&p, "l1", "l0"),
            vec![atom(LinConstraint::lt(&x, &zero))]
        );
        let inner = p
            .transitions
            .iter()
            .find(|t| t.source == 1 && t.targets() == vec![1])
            .unwrap();
        assert_eq!(
            *inner.update(),
            UpdateElement::Expr {
                target: 1,
                base: x.plus(&QLinExpr::constant(int(-1))),
                sample: Some((int(1), DistributionSpec::normal(int(0), int(1)))),
            }
        );
        assert!(p.is_terminal_self_loop(p.transitions.last().unwrap()));
    }

    #[test]
    fn branching_loop_gets_extra_location() {
        let p = compile(FIG_B).unwrap();
        assert!(validate_pcfg(&p).is_empty());
        assert_eq!(p.locations, vec!["l0", "l1", "l_out"]);
        let non_loop: Vec<_> = p
            .transitions
            .iter()
            .filter(|t| !p.is_terminal_self_loop(t))
            .collect();
        assert_eq!(non_loop.len(), 4);
        assert_eq!(guard_of(&p, "l0", "l0").len(), 1);
        assert_eq!(guard_of(&p, "l0", "l1").len(), 1);
        assert_eq!(guard_of(&p, "l1", "l0"), vec![QPredicate::truth()]);
        assert_eq!(guard_of(&p, "l0", "l_out").len(), 1);
        for t in &non_loop {
            if t.targets() != vec![p.terminal] {
                assert!(t.update().sample().is_some());
            }
        }
    }

    #[test]
    fn empty_program_goes_straight_to_terminal() {
        let p = compile("").unwrap();
        assert_eq!(p.locations.len(), 2);
        assert_eq!(p.transitions.len(), 2);
        assert_eq!(p.transitions[0].guard(), QPredicate::truth());
        assert_eq!(p.transitions[0].targets(), vec![p.terminal]);
    }

    #[test]
    fn skip_loop() {
        let p = compile("while x >= 0 do skip od").unwrap();
        assert!(validate_pcfg(&p).is_empty());
        assert_eq!(p.locations, vec!["l0", "l_out"]);
        assert_eq!(p.transitions.len(), 3);
    }

    #[test]
    fn consecutive_assignments_split() {
        let p = compile("x := 1; y := 2; z := 3").unwrap();
        assert_eq!(p.locations.len(), 4);
        for t in &p.transitions {
            assert!(matches!(
                t.update(),
                UpdateElement::Expr { .. } | UpdateElement::NoUpdate
            ));
        }
        assert!(validate_pcfg(&p).is_empty());
    }

    #[test]
    fn prob_and_star_lowering() {
        let p = compile("while x >= 0 do if prob(1/3) then x := x - 1 else if * then x := x + 1 else skip fi fi od")
            .unwrap();
        assert!(validate_pcfg(&p).is_empty(), "{:?}", validate_pcfg(&p));
        let pb: Vec<_> = p.transitions.iter().filter(|t| t.is_pb()).collect();
        assert_eq!(pb.len(), 1);
        let TransitionKind::Pb { branches } = &pb[0].kind else {
            unreachable!()
        };
        assert_eq!(branches[0].1, crate::num::ratio(1, 3));
        assert_eq!(branches[1].1, crate::num::ratio(2, 3));
        // Both arms of the star start from the same source with a true guard.
        let src = p
            .transitions
            .iter()
            .filter(|t| !t.is_pb() && t.source == branches[1].0)
            .count();
        assert_eq!(src, 2);
    }

    #[test]
    fn disjunctive_loop_guard_splits() {
        let p = compile("while x >= 1 or y >= 1 do x := x - 1; y := y - 1 od").unwrap();
        assert!(validate_pcfg(&p).is_empty());
        let into_body = p
            .transitions
            .iter()
            .filter(|t| t.source == 0 && t.targets() != vec![0])
            .count();
        // Two body entries plus one exit (both atoms negated).
        assert_eq!(into_body, 3);
    }

    #[test]
    fn duplicate_label_is_rejected() {
        let err = compile("a: x := 1; a: x := 2").unwrap_err();
        assert_eq!(err.position(), (1, 12));
    }
}
