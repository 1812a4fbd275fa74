use crate::linear::{LinConstraint, LinearError, Relation};
use crate::model::{DistributionSpec, VarId};
use crate::{QLinExpr, QPolyhedron, QPredicate, Rational};

/// A parsed program. Expressions are already linearized; variables are
/// numbered in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceProgram {
    pub variables: Vec<String>,
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub label: Option<String>,
    pub kind: StmtKind,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Skip,
    Assign {
        var: VarId,
        rhs: Rhs,
    },
    While {
        cond: Cond,
        body: Vec<Stmt>,
    },
    If {
        cond: Cond,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    IfProb {
        prob: Rational,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    IfNondet {
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rhs {
    /// `base + coeff·X` with `X` drawn from the distribution when present.
    Expr {
        base: QLinExpr,
        sample: Option<(Rational, DistributionSpec)>,
    },
    Ndet {
        lo: Rational,
        hi: Rational,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    True,
    False,
    Atom(LinConstraint<Rational>),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl Cond {
    /// Evaluates with exact float comparisons, the semantics the simulator
    /// uses for guards.
    pub fn eval(&self, x: &[f64]) -> bool {
        match self {
            Cond::True => true,
            Cond::False => false,
            Cond::Atom(c) => {
                let v = c.lhs.to_f64().eval(x);
                match c.rel {
                    Relation::Le => v <= 0.0,
                    Relation::Lt => v < 0.0,
                    Relation::Eq => v == 0.0,
                }
            }
            Cond::Not(c) => !c.eval(x),
            Cond::And(a, b) => a.eval(x) && b.eval(x),
            Cond::Or(a, b) => a.eval(x) || b.eval(x),
        }
    }

    /// Disjunctive normal form, negations pushed to the atoms.
    pub fn to_dnf(&self, cap: usize) -> Result<QPredicate, LinearError> {
        self.dnf(false, cap)
    }

    fn dnf(&self, negated: bool, cap: usize) -> Result<QPredicate, LinearError> {
        Ok(match (self, negated) {
            (Cond::True, false) | (Cond::False, true) => QPredicate::truth(),
            (Cond::True, true) | (Cond::False, false) => QPredicate::falsity(),
            (Cond::Atom(c), false) => {
                QPredicate::from_polyhedron(QPolyhedron::new(vec![c.clone()]))
            }
            (Cond::Atom(c), true) => QPredicate::from_disjuncts(
                c.negation()
                    .into_iter()
                    .map(|a| QPolyhedron::new(vec![a]))
                    .collect(),
            ),
            (Cond::Not(c), n) => c.dnf(!n, cap)?,
            (Cond::And(a, b), false) | (Cond::Or(a, b), true) => {
                a.dnf(negated, cap)?.and(&b.dnf(negated, cap)?, cap)?
            }
            (Cond::Or(a, b), false) | (Cond::And(a, b), true) => {
                a.dnf(negated, cap)?.or(&b.dnf(negated, cap)?)
            }
        })
    }
}
