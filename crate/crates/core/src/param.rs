//! Program-variable expressions whose coefficients are affine in LP unknowns.
//!
//! A template `a_1·x_1 + … + a_n·x_n + b` with unknown `a_i`, `b` is a
//! [`ParamExpr`] whose entries are single-unknown [`QLinExpr`]s. Sums and
//! substitutions of concrete program expressions keep every entry affine.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::{QLinExpr, Rational};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamExpr {
    coeffs: BTreeMap<usize, QLinExpr>,
    constant: QLinExpr,
}

impl ParamExpr {
    pub fn zero() -> Self {
        ParamExpr::default()
    }

    /// A concrete expression, lifted with constant coefficients.
    pub fn from_concrete(e: &QLinExpr) -> Self {
        let mut out = ParamExpr::zero();
        for (i, c) in e.coeffs() {
            out.coeffs.insert(i, QLinExpr::constant(c.clone()));
        }
        out.constant = QLinExpr::constant(e.constant_term().clone());
        out
    }

    pub fn coeff(&self, var: usize) -> QLinExpr {
        self.coeffs.get(&var).cloned().unwrap_or_default()
    }

    pub fn constant(&self) -> &QLinExpr {
        &self.constant
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (usize, &QLinExpr)> + '_ {
        self.coeffs.iter().map(|(i, c)| (*i, c))
    }

    pub fn set_coeff(&mut self, var: usize, c: QLinExpr) {
        if c.is_zero() {
            self.coeffs.remove(&var);
        } else {
            self.coeffs.insert(var, c);
        }
    }

    pub fn set_constant(&mut self, c: QLinExpr) {
        self.constant = c;
    }

    /// `self += k·other`
    pub fn add_scaled(&mut self, other: &ParamExpr, k: &Rational) {
        if k.is_zero() {
            return;
        }
        for (i, c) in &other.coeffs {
            let mut cur = self.coeff(*i);
            cur.add_scaled(c, k);
            self.set_coeff(*i, cur);
        }
        self.constant.add_scaled(&other.constant, k);
    }

    pub fn plus(&self, other: &ParamExpr) -> ParamExpr {
        let mut out = self.clone();
        out.add_scaled(other, &Rational::from_integer(1.into()));
        out
    }

    pub fn minus(&self, other: &ParamExpr) -> ParamExpr {
        let mut out = self.clone();
        out.add_scaled(other, &Rational::from_integer((-1).into()));
        out
    }

    pub fn scaled(&self, k: &Rational) -> ParamExpr {
        let mut out = ParamExpr::zero();
        out.add_scaled(self, k);
        out
    }

    /// Adds an unknown-valued term to the constant part.
    pub fn add_to_constant(&mut self, e: &QLinExpr) {
        self.constant = self.constant.plus(e);
    }

    /// Replaces program variable `var` by the concrete expression `repl`.
    pub fn substitute(&self, var: usize, repl: &QLinExpr) -> ParamExpr {
        let Some(a) = self.coeffs.get(&var).cloned() else {
            return self.clone();
        };
        let mut out = self.clone();
        out.coeffs.remove(&var);
        for (j, c) in repl.coeffs() {
            let mut cur = out.coeff(j);
            cur.add_scaled(&a, c);
            out.set_coeff(j, cur);
        }
        out.constant.add_scaled(&a, repl.constant_term());
        out
    }

    /// The concrete expression obtained by fixing the unknowns.
    pub fn instantiate(&self, values: &[Rational]) -> QLinExpr {
        QLinExpr::from_parts(
            self.coeffs.iter().map(|(i, c)| (*i, c.eval(values))),
            self.constant.eval(values),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;

    #[test]
    fn substitution_keeps_coefficients_affine() {
        // template a·x + b with unknowns a = u0, b = u1; x <- x + 3
        let mut t = ParamExpr::zero();
        t.set_coeff(0, QLinExpr::var(0));
        t.set_constant(QLinExpr::var(1));
        let s = t.substitute(0, &QLinExpr::from_parts([(0, int(1))], int(3)));
        assert_eq!(s.coeff(0), QLinExpr::var(0));
        assert_eq!(
            *s.constant(),
            QLinExpr::from_parts([(0, int(3)), (1, int(1))], int(0))
        );
        let inst = s.instantiate(&[int(2), int(5)]);
        assert_eq!(inst, QLinExpr::from_parts([(0, int(2))], int(11)));
    }

    #[test]
    fn lifting_a_concrete_expression_round_trips() {
        let e = QLinExpr::from_parts([(1, int(-4))], int(9));
        assert_eq!(ParamExpr::from_concrete(&e).instantiate(&[]), e);
    }
}
