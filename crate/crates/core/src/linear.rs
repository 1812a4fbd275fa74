//! Linear expressions, constraints, polyhedra and DNF predicates.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{format_rational, Scalar};

/// Default bound on the number of disjuncts produced when negating guards.
pub const DEFAULT_DNF_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearError {
    #[error("guard negation produced more than {cap} disjuncts")]
    EncodingBlowup { cap: usize },
}

/// `Σ coeffs[i]·x_i + constant`. Zero coefficients are never stored.
#[derive(Clone, PartialEq)]
pub struct LinExpr<S> {
    coeffs: BTreeMap<usize, S>,
    constant: S,
}

impl<S: Scalar> Default for LinExpr<S> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<S: Scalar> LinExpr<S> {
    pub fn zero() -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: S::zero(),
        }
    }

    pub fn constant(c: S) -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, S::one())
    }

    pub fn term(i: usize, c: S) -> Self {
        let mut e = Self::zero();
        e.add_term(i, c);
        e
    }

    pub fn from_parts(coeffs: impl IntoIterator<Item = (usize, S)>, constant: S) -> Self {
        let mut e = Self::constant(constant);
        for (i, c) in coeffs {
            e.add_term(i, c);
        }
        e
    }

    pub fn coeff(&self, i: usize) -> S {
        self.coeffs.get(&i).cloned().unwrap_or_else(S::zero)
    }

    pub fn constant_term(&self) -> &S {
        &self.constant
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (usize, &S)> + '_ {
        self.coeffs.iter().map(|(i, c)| (*i, c))
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty() && self.constant.is_zero()
    }

    pub fn add_term(&mut self, i: usize, c: S) {
        if c.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(i).or_insert_with(S::zero);
        *slot = slot.clone() + c;
        if slot.is_zero() {
            self.coeffs.remove(&i);
        }
    }

    pub fn add_constant(&mut self, c: S) {
        self.constant = self.constant.clone() + c;
    }

    pub fn set_constant(&mut self, c: S) {
        self.constant = c;
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, &S::one());
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, &(-S::one()));
        out
    }

    /// `self += k·other`.
    pub fn add_scaled(&mut self, other: &Self, k: &S) {
        if k.is_zero() {
            return;
        }
        for (i, c) in &other.coeffs {
            self.add_term(*i, c.clone() * k.clone());
        }
        self.add_constant(other.constant.clone() * k.clone());
    }

    pub fn scaled(&self, k: &S) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        LinExpr {
            coeffs: self
                .coeffs
                .iter()
                .map(|(i, c)| (*i, c.clone() * k.clone()))
                .collect(),
            constant: self.constant.clone() * k.clone(),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(&(-S::one()))
    }

    /// Replaces `x_var` by `replacement`.
    pub fn substitute(&self, var: usize, replacement: &Self) -> Self {
        match self.coeffs.get(&var) {
            None => self.clone(),
            Some(c) => {
                let c = c.clone();
                let mut out = self.clone();
                out.coeffs.remove(&var);
                out.add_scaled(replacement, &c);
                out
            }
        }
    }

    /// Evaluates at `point`; variables beyond its length read as zero.
    pub fn eval(&self, point: &[S]) -> S {
        let mut acc = self.constant.clone();
        for (i, c) in &self.coeffs {
            if let Some(v) = point.get(*i) {
                acc = acc + c.clone() * v.clone();
            }
        }
        acc
    }

    /// Largest absolute coefficient over the variables (constant excluded).
    pub fn max_abs_coeff(&self) -> S {
        self.coeffs
            .values()
            .map(|c| c.abs())
            .fold(S::zero(), |m, c| if c > m { c } else { m })
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> LinExpr<T> {
        LinExpr::from_parts(
            self.coeffs.iter().map(|(i, c)| (*i, f(c))),
            f(&self.constant),
        )
    }

    /// Renames variables through `f`.
    pub fn reindex(&self, f: impl Fn(usize) -> usize) -> Self {
        LinExpr::from_parts(
            self.coeffs.iter().map(|(i, c)| (f(*i), c.clone())),
            self.constant.clone(),
        )
    }

    /// Scales so that the first variable coefficient has absolute value one.
    /// Constant-only expressions are scaled to -1, 0 or 1.
    pub fn normalized(&self) -> Self {
        let lead = match self.coeffs.values().next() {
            Some(c) => c.abs(),
            None => {
                if self.constant.is_zero() {
                    return self.clone();
                }
                self.constant.abs()
            }
        };
        self.scaled(&(S::one() / lead))
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> DisplayLinExpr<'a, S> {
        DisplayLinExpr { expr: self, names }
    }
}

impl LinExpr<BigRational> {
    pub fn to_f64(&self) -> LinExpr<f64> {
        self.map_scalar(<f64 as Scalar>::from_rational)
    }
}

impl<S: Scalar> fmt::Debug for LinExpr<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display(&[]))
    }
}

pub struct DisplayLinExpr<'a, S> {
    expr: &'a LinExpr<S>,
    names: &'a [String],
}

fn scalar_text<S: Scalar>(s: &S) -> String {
    if S::EXACT {
        // BigRational's Display already prints lowest terms as p/q.
        s.to_string()
    } else {
        format!("{s}")
    }
}

impl<S: Scalar> fmt::Display for DisplayLinExpr<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in &self.expr.coeffs {
            let name = self
                .names
                .get(*i)
                .cloned()
                .unwrap_or_else(|| format!("v{i}"));
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            if mag.is_one() {
                write!(f, "{name}")?;
            } else {
                write!(f, "{}*{name}", scalar_text(&mag))?;
            }
            first = false;
        }
        let k = &self.expr.constant;
        if first {
            write!(f, "{}", scalar_text(k))
        } else if !k.is_zero() {
            let sign = if k.is_negative() { "-" } else { "+" };
            write!(f, " {sign} {}", scalar_text(&k.abs()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Lt => "<",
            Relation::Eq => "=",
        }
    }
}

/// `lhs rel 0`.
#[derive(Clone, PartialEq)]
pub struct LinConstraint<S> {
    pub lhs: LinExpr<S>,
    pub rel: Relation,
}

impl<S: Scalar> LinConstraint<S> {
    pub fn new(lhs: LinExpr<S>, rel: Relation) -> Self {
        LinConstraint { lhs, rel }
    }

    /// `a <= b`
    pub fn le(a: &LinExpr<S>, b: &LinExpr<S>) -> Self {
        Self::new(a.minus(b), Relation::Le)
    }

    /// `a < b`
    pub fn lt(a: &LinExpr<S>, b: &LinExpr<S>) -> Self {
        Self::new(a.minus(b), Relation::Lt)
    }

    /// `a >= b`
    pub fn ge(a: &LinExpr<S>, b: &LinExpr<S>) -> Self {
        Self::new(b.minus(a), Relation::Le)
    }

    /// `a > b`
    pub fn gt(a: &LinExpr<S>, b: &LinExpr<S>) -> Self {
        Self::new(b.minus(a), Relation::Lt)
    }

    pub fn eq(a: &LinExpr<S>, b: &LinExpr<S>) -> Self {
        Self::new(a.minus(b), Relation::Eq)
    }

    pub fn is_strict(&self) -> bool {
        self.rel == Relation::Lt
    }

    pub fn holds(&self, point: &[S]) -> bool {
        let v = self.lhs.eval(point);
        match self.rel {
            Relation::Le => !v.definitely_positive(),
            Relation::Lt => v.definitely_negative(),
            Relation::Eq => v.near_zero(),
        }
    }

    /// Truth value when the constraint mentions no variable.
    pub fn constant_truth(&self) -> Option<bool> {
        if self.lhs.is_constant() {
            Some(self.holds(&[]))
        } else {
            None
        }
    }

    /// Strict constraints become non-strict; others are unchanged.
    pub fn relaxed(&self) -> Self {
        match self.rel {
            Relation::Lt => Self::new(self.lhs.clone(), Relation::Le),
            _ => self.clone(),
        }
    }

    /// Equalities as two inequalities; inequalities unchanged.
    pub fn split_equality(&self) -> Vec<Self> {
        match self.rel {
            Relation::Eq => vec![
                Self::new(self.lhs.clone(), Relation::Le),
                Self::new(self.lhs.negated(), Relation::Le),
            ],
            _ => vec![self.clone()],
        }
    }

    /// The complement as a disjunction of atoms.
    pub fn negation(&self) -> Vec<Self> {
        match self.rel {
            Relation::Le => vec![Self::new(self.lhs.negated(), Relation::Lt)],
            Relation::Lt => vec![Self::new(self.lhs.negated(), Relation::Le)],
            Relation::Eq => vec![
                Self::new(self.lhs.clone(), Relation::Lt),
                Self::new(self.lhs.negated(), Relation::Lt),
            ],
        }
    }

    pub fn normalized(&self) -> Self {
        Self::new(self.lhs.normalized(), self.rel)
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> LinConstraint<T> {
        LinConstraint::new(self.lhs.map_scalar(f), self.rel)
    }

    pub fn reindex(&self, f: impl Fn(usize) -> usize) -> Self {
        Self::new(self.lhs.reindex(f), self.rel)
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> DisplayConstraint<'a, S> {
        DisplayConstraint { c: self, names }
    }
}

impl<S: Scalar> fmt::Debug for LinConstraint<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display(&[]))
    }
}

pub struct DisplayConstraint<'a, S> {
    c: &'a LinConstraint<S>,
    names: &'a [String],
}

impl<S: Scalar> fmt::Display for DisplayConstraint<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Move the constant to the right-hand side for readability.
        let mut lhs = self.c.lhs.clone();
        let k = lhs.constant_term().clone();
        lhs.set_constant(S::zero());
        if lhs.is_constant() {
            return write!(f, "{} {} 0", scalar_text(&k), self.c.rel.symbol());
        }
        write!(
            f,
            "{} {} {}",
            lhs.display(self.names),
            self.c.rel.symbol(),
            scalar_text(&(-k))
        )
    }
}

/// Conjunction of constraints; the empty conjunction is `true`.
#[derive(Clone, PartialEq, Default)]
pub struct Polyhedron<S> {
    pub constraints: Vec<LinConstraint<S>>,
}

impl<S: Scalar> Polyhedron<S> {
    pub fn top() -> Self {
        Polyhedron {
            constraints: Vec::new(),
        }
    }

    /// A syntactically empty polyhedron (`1 <= 0`).
    pub fn bottom() -> Self {
        Polyhedron {
            constraints: vec![LinConstraint::new(
                LinExpr::constant(S::one()),
                Relation::Le,
            )],
        }
    }

    pub fn new(constraints: Vec<LinConstraint<S>>) -> Self {
        Polyhedron { constraints }
    }

    pub fn is_top(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn contains(&self, point: &[S]) -> bool {
        self.constraints.iter().all(|c| c.holds(point))
    }

    pub fn push(&mut self, c: LinConstraint<S>) {
        self.constraints.push(c);
    }

    pub fn conj(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.constraints.extend(other.constraints.iter().cloned());
        out
    }

    pub fn has_strict(&self) -> bool {
        self.constraints.iter().any(|c| c.is_strict())
    }

    pub fn relaxed(&self) -> Self {
        Polyhedron::new(self.constraints.iter().map(|c| c.relaxed()).collect())
    }

    /// Drops constant-true atoms and duplicate atoms; returns `None` when a
    /// constant-false atom shows the polyhedron is empty.
    pub fn simplified(&self) -> Option<Self> {
        let mut out: Vec<LinConstraint<S>> = Vec::new();
        let mut keys: Vec<LinConstraint<S>> = Vec::new();
        for c in &self.constraints {
            match c.constant_truth() {
                Some(true) => continue,
                Some(false) => return None,
                None => {}
            }
            let key = c.normalized();
            if keys.contains(&key) {
                continue;
            }
            keys.push(key);
            out.push(c.clone());
        }
        Some(Polyhedron::new(out))
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Polyhedron<T> {
        Polyhedron::new(self.constraints.iter().map(|c| c.map_scalar(&f)).collect())
    }

    pub fn reindex(&self, f: impl Fn(usize) -> usize) -> Self {
        Polyhedron::new(self.constraints.iter().map(|c| c.reindex(&f)).collect())
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> DisplayPolyhedron<'a, S> {
        DisplayPolyhedron { p: self, names }
    }
}

impl<S: Scalar> fmt::Debug for Polyhedron<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display(&[]))
    }
}

pub struct DisplayPolyhedron<'a, S> {
    p: &'a Polyhedron<S>,
    names: &'a [String],
}

impl<S: Scalar> fmt::Display for DisplayPolyhedron<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p.constraints.is_empty() {
            return write!(f, "true");
        }
        for (k, c) in self.p.constraints.iter().enumerate() {
            if k > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{}", c.display(self.names))?;
        }
        Ok(())
    }
}

/// Disjunction of polyhedra. Never empty: `false` is a single bottom disjunct.
#[derive(Clone, PartialEq)]
pub struct Predicate<S> {
    disjuncts: Vec<Polyhedron<S>>,
}

impl<S: Scalar> Predicate<S> {
    pub fn truth() -> Self {
        Predicate {
            disjuncts: vec![Polyhedron::top()],
        }
    }

    pub fn falsity() -> Self {
        Predicate {
            disjuncts: vec![Polyhedron::bottom()],
        }
    }

    pub fn from_polyhedron(p: Polyhedron<S>) -> Self {
        Predicate { disjuncts: vec![p] }
    }

    /// Builds a predicate, simplifying each disjunct. An empty list, or one
    /// whose disjuncts are all syntactically empty, yields `false`.
    pub fn from_disjuncts(ds: Vec<Polyhedron<S>>) -> Self {
        let mut kept: Vec<Polyhedron<S>> = Vec::new();
        for d in ds {
            if let Some(s) = d.simplified() {
                if s.is_top() {
                    return Self::truth();
                }
                if !kept.contains(&s) {
                    kept.push(s);
                }
            }
        }
        if kept.is_empty() {
            Self::falsity()
        } else {
            Predicate { disjuncts: kept }
        }
    }

    /// Keeps disjuncts exactly as given (no simplification).
    pub fn raw(ds: Vec<Polyhedron<S>>) -> Self {
        if ds.is_empty() {
            Self::falsity()
        } else {
            Predicate { disjuncts: ds }
        }
    }

    pub fn disjuncts(&self) -> &[Polyhedron<S>] {
        &self.disjuncts
    }

    pub fn into_disjuncts(self) -> Vec<Polyhedron<S>> {
        self.disjuncts
    }

    pub fn is_true(&self) -> bool {
        self.disjuncts.iter().any(|d| d.is_top())
    }

    /// Syntactic falsity: every disjunct contains a constant-false atom.
    pub fn is_false(&self) -> bool {
        self.disjuncts.iter().all(|d| d.simplified().is_none())
    }

    pub fn holds(&self, point: &[S]) -> bool {
        self.disjuncts.iter().any(|d| d.contains(point))
    }

    pub fn and(&self, other: &Self, cap: usize) -> Result<Self, LinearError> {
        if self.disjuncts.len().saturating_mul(other.disjuncts.len()) > cap {
            return Err(LinearError::EncodingBlowup { cap });
        }
        let mut out = Vec::new();
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                out.push(a.conj(b));
            }
        }
        Ok(Self::from_disjuncts(out))
    }

    pub fn or(&self, other: &Self) -> Self {
        let mut ds = self.disjuncts.clone();
        ds.extend(other.disjuncts.iter().cloned());
        Self::from_disjuncts(ds)
    }

    pub fn negate(&self, cap: usize) -> Result<Self, LinearError> {
        negate_guards_to_dnf(std::slice::from_ref(self), cap)
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Predicate<T> {
        Predicate {
            disjuncts: self.disjuncts.iter().map(|d| d.map_scalar(&f)).collect(),
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> DisplayPredicate<'a, S> {
        DisplayPredicate { p: self, names }
    }
}

impl<S: Scalar> fmt::Debug for Predicate<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display(&[]))
    }
}

pub struct DisplayPredicate<'a, S> {
    p: &'a Predicate<S>,
    names: &'a [String],
}

impl<S: Scalar> fmt::Display for DisplayPredicate<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p.is_false() {
            return write!(f, "false");
        }
        let many = self.p.disjuncts.len() > 1;
        for (k, d) in self.p.disjuncts.iter().enumerate() {
            if k > 0 {
                write!(f, " || ")?;
            }
            if many && d.constraints.len() > 1 {
                write!(f, "({})", d.display(self.names))?;
            } else {
                write!(f, "{}", d.display(self.names))?;
            }
        }
        Ok(())
    }
}

/// DNF of `¬(g_1 ∨ … ∨ g_k)`.
///
/// Each guard contributes, per disjunct, a clause of negated atoms; the
/// result is the distributed product of all clauses. Disjuncts that are
/// syntactically empty are pruned as they appear, and the count is checked
/// against `cap` after every multiplication step.
pub fn negate_guards_to_dnf<S: Scalar>(
    guards: &[Predicate<S>],
    cap: usize,
) -> Result<Predicate<S>, LinearError> {
    let mut acc: Vec<Polyhedron<S>> = vec![Polyhedron::top()];
    for g in guards {
        for d in g.disjuncts() {
            let Some(d) = d.simplified() else {
                // An empty disjunct contributes `¬false = true`.
                continue;
            };
            let clause: Vec<LinConstraint<S>> = d
                .constraints
                .iter()
                .flat_map(|c| c.split_equality())
                .flat_map(|c| c.negation())
                .collect();
            if clause.is_empty() {
                // ¬true: the whole conjunction is false.
                return Ok(Predicate::falsity());
            }
            let mut next: Vec<Polyhedron<S>> = Vec::new();
            for p in &acc {
                for atom in &clause {
                    let mut q = p.clone();
                    q.push(atom.clone());
                    if let Some(s) = q.simplified() {
                        if !next.contains(&s) {
                            next.push(s);
                        }
                    }
                }
                if next.len() > cap {
                    return Err(LinearError::EncodingBlowup { cap });
                }
            }
            if next.is_empty() {
                return Ok(Predicate::falsity());
            }
            acc = next;
        }
    }
    Ok(Predicate::raw(acc))
}

/// Text form of a rational-coefficient expression with named variables.
pub fn format_expr(e: &LinExpr<BigRational>, names: &[String]) -> String {
    e.display(names).to_string()
}

/// Exact-rational constraint with the constant on the right, `p/q` style.
pub fn format_constraint(c: &LinConstraint<BigRational>, names: &[String]) -> String {
    c.display(names).to_string()
}

#[doc(hidden)]
pub fn rational_text(r: &BigRational) -> String {
    format_rational(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use proptest::prelude::*;

    type Q = BigRational;

    fn x() -> LinExpr<Q> {
        LinExpr::var(0)
    }
    fn y() -> LinExpr<Q> {
        LinExpr::var(1)
    }
    fn k(n: i64) -> LinExpr<Q> {
        LinExpr::constant(int(n))
    }

    #[test]
    fn zero_coefficients_are_not_stored() {
        let e = x().plus(&y()).minus(&x());
        assert_eq!(e.variables().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn substitution_replaces_variable() {
        // (2x + y + 1)[x <- y - 3] = 3y - 5
        let e = LinExpr::from_parts([(0, int(2)), (1, int(1))], int(1));
        let r = e.substitute(0, &y().minus(&k(3)));
        assert_eq!(r, LinExpr::from_parts([(1, int(3))], int(-5)));
    }

    #[test]
    fn display_uses_names() {
        let names = vec!["x".to_string(), "y".to_string()];
        let e = LinExpr::from_parts([(0, ratio(1, 2)), (1, int(-1))], int(7));
        assert_eq!(e.display(&names).to_string(), "1/2*x - y + 7");
        let c = LinConstraint::ge(&x(), &k(-7));
        assert_eq!(c.display(&names).to_string(), "-x <= 7");
    }

    #[test]
    fn negating_single_guard() {
        let g = Predicate::from_polyhedron(Polyhedron::new(vec![LinConstraint::ge(&x(), &k(0))]));
        let n = negate_guards_to_dnf(&[g], DEFAULT_DNF_CAP).unwrap();
        assert_eq!(n.disjuncts().len(), 1);
        assert_eq!(
            n.disjuncts()[0].constraints,
            vec![LinConstraint::lt(&x(), &k(0))]
        );
    }

    #[test]
    fn negating_conjunction_is_de_morgan() {
        let g = Predicate::from_polyhedron(Polyhedron::new(vec![
            LinConstraint::ge(&x(), &k(0)),
            LinConstraint::ge(&y(), &k(0)),
        ]));
        let n = negate_guards_to_dnf(&[g], DEFAULT_DNF_CAP).unwrap();
        assert_eq!(n.disjuncts().len(), 2);
        assert!(n.holds(&[int(-1), int(5)]));
        assert!(n.holds(&[int(5), int(-1)]));
        assert!(!n.holds(&[int(0), int(0)]));
    }

    #[test]
    fn negating_two_guards_conjoins() {
        let g1 = Predicate::from_polyhedron(Polyhedron::new(vec![LinConstraint::ge(&x(), &k(0))]));
        let g2 = Predicate::from_polyhedron(Polyhedron::new(vec![LinConstraint::lt(&y(), &k(0))]));
        let n = negate_guards_to_dnf(&[g1, g2], DEFAULT_DNF_CAP).unwrap();
        assert_eq!(n.disjuncts().len(), 1);
        let d = &n.disjuncts()[0];
        assert_eq!(d.constraints.len(), 2);
        assert!(d.constraints.contains(&LinConstraint::lt(&x(), &k(0))));
        assert!(d.constraints.contains(&LinConstraint::ge(&y(), &k(0))));
    }

    #[test]
    fn negating_true_and_nothing() {
        let n = negate_guards_to_dnf::<Q>(&[Predicate::truth()], DEFAULT_DNF_CAP).unwrap();
        assert!(n.is_false());
        let n = negate_guards_to_dnf::<Q>(&[], DEFAULT_DNF_CAP).unwrap();
        assert!(n.is_true());
    }

    #[test]
    fn blowup_is_reported() {
        // Eight guards, each a conjunction of two atoms: 2^8 = 256 disjuncts.
        let guards: Vec<Predicate<Q>> = (0..8)
            .map(|i| {
                Predicate::from_polyhedron(Polyhedron::new(vec![
                    LinConstraint::ge(&LinExpr::var(2 * i), &k(0)),
                    LinConstraint::ge(&LinExpr::var(2 * i + 1), &k(0)),
                ]))
            })
            .collect();
        assert!(matches!(
            negate_guards_to_dnf(&guards, 100),
            Err(LinearError::EncodingBlowup { cap: 100 })
        ));
        assert_eq!(
            negate_guards_to_dnf(&guards, 256)
                .unwrap()
                .disjuncts()
                .len(),
            256
        );
    }

    #[test]
    fn equality_negation_is_two_strict_sides() {
        let g = Predicate::from_polyhedron(Polyhedron::new(vec![LinConstraint::eq(&x(), &k(2))]));
        let n = g.negate(DEFAULT_DNF_CAP).unwrap();
        assert!(n.holds(&[int(1)]));
        assert!(n.holds(&[int(3)]));
        assert!(!n.holds(&[int(2)]));
    }

    fn small_rational() -> impl Strategy<Value = Q> {
        (-20i64..=20, 1i64..=6).prop_map(|(n, d)| ratio(n, d))
    }

    fn expr(nvars: usize) -> impl Strategy<Value = LinExpr<Q>> {
        (
            proptest::collection::vec(small_rational(), nvars),
            small_rational(),
        )
            .prop_map(|(cs, k)| LinExpr::from_parts(cs.into_iter().enumerate(), k))
    }

    fn atom(nvars: usize) -> impl Strategy<Value = LinConstraint<Q>> {
        (expr(nvars), 0u8..3).prop_map(|(e, r)| {
            let rel = match r {
                0 => Relation::Le,
                1 => Relation::Lt,
                _ => Relation::Eq,
            };
            LinConstraint::new(e, rel)
        })
    }

    fn guard(nvars: usize) -> impl Strategy<Value = Predicate<Q>> {
        proptest::collection::vec(
            proptest::collection::vec(atom(nvars), 1..3).prop_map(Polyhedron::new),
            1..3,
        )
        .prop_map(Predicate::raw)
    }

    fn point(nvars: usize) -> impl Strategy<Value = Vec<Q>> {
        proptest::collection::vec(small_rational(), nvars)
    }

    proptest! {
        #[test]
        fn rational_add_sub_round_trips(a in small_rational(), b in small_rational()) {
            prop_assert_eq!((a.clone() + b.clone()) - b, a);
        }

        #[test]
        fn eval_is_linear(
            alpha in small_rational(),
            e1 in expr(3),
            e2 in expr(3),
            p in point(3),
        ) {
            let combined = e1.scaled(&alpha).plus(&e2);
            prop_assert_eq!(combined.eval(&p), alpha * e1.eval(&p) + e2.eval(&p));
        }

        #[test]
        fn negation_is_complement(
            guards in proptest::collection::vec(guard(2), 1..4),
            points in proptest::collection::vec(point(2), 40),
        ) {
            let neg = negate_guards_to_dnf(&guards, DEFAULT_DNF_CAP).unwrap();
            for p in &points {
                let inside = guards.iter().any(|g| g.holds(p));
                prop_assert_ne!(inside, neg.holds(p));
            }
        }
    }
}
