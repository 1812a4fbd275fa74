//! CPLEX LP text export, for cross-checking against external solvers.
//!
//! Every row is multiplied by the least common multiple of its
//! denominators so coefficients print as exact integers.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::linear::{LinExpr, Relation};
use crate::Rational;

use super::LpProblem;

fn lp_name(i: usize, raw: &str) -> String {
    let clean: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("v{i}_{clean}")
}

fn integer_row(e: &LinExpr<Rational>) -> (Vec<(usize, BigInt)>, BigInt) {
    let mut l = BigInt::one();
    for (_, c) in e.coeffs() {
        l = l.lcm(c.denom());
    }
    l = l.lcm(e.constant_term().denom());
    let scale = Rational::from_integer(l);
    let coeffs = e
        .coeffs()
        .map(|(i, c)| (i, (c.clone() * scale.clone()).to_integer()))
        .collect();
    let k = (e.constant_term().clone() * scale).to_integer();
    (coeffs, k)
}

fn write_terms(out: &mut String, terms: &[(usize, BigInt)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names.first().cloned().unwrap_or_else(|| "v0".into()));
        return;
    }
    for (k, (i, c)) in terms.iter().enumerate() {
        let sign = if c.is_negative() { "-" } else { "+" };
        if k == 0 && !c.is_negative() {
            let _ = write!(out, " {} {}", c, names[*i]);
        } else {
            let _ = write!(out, " {sign} {} {}", c.abs(), names[*i]);
        }
    }
}

fn write_bound_row(out: &mut String, tag: &str, var: &str, bound: &Rational, op: &str) {
    // d·x op n  with bound = n/d, d > 0
    let _ = writeln!(
        out,
        " {tag}: {} {var} {op} {}",
        bound.denom(),
        bound.numer()
    );
}

pub fn to_cplex_lp(lp: &LpProblem<Rational>) -> String {
    let names: Vec<String> = lp
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| lp_name(i, &v.name))
        .collect();
    let mut out = String::new();
    out.push_str("\\ exact rational LP; rows scaled to integer coefficients\n");
    out.push_str("Maximize\n obj:");
    let (terms, _) = integer_row(&lp.objective);
    write_terms(&mut out, &terms, &names);
    out.push_str("\nSubject To\n");
    for (r, c) in lp.constraints.iter().enumerate() {
        let (terms, k) = integer_row(&c.lhs);
        let _ = write!(out, " r{r}:");
        write_terms(&mut out, &terms, &names);
        let op = match c.rel {
            Relation::Eq => "=",
            _ => "<=",
        };
        let _ = writeln!(out, " {op} {}", -k);
    }
    let mut bounds = String::new();
    for (i, v) in lp.vars.iter().enumerate() {
        let name = &names[i];
        let integral = |b: &Option<Rational>| b.as_ref().is_none_or(|b| b.denom().is_one());
        if integral(&v.lower) && integral(&v.upper) {
            match (&v.lower, &v.upper) {
                (None, None) => {
                    let _ = writeln!(bounds, " {name} free");
                }
                (Some(l), None) => {
                    if !l.is_zero() {
                        let _ = writeln!(bounds, " {name} >= {}", l.numer());
                    }
                }
                (None, Some(u)) => {
                    let _ = writeln!(bounds, " -inf <= {name} <= {}", u.numer());
                }
                (Some(l), Some(u)) => {
                    let _ = writeln!(bounds, " {} <= {name} <= {}", l.numer(), u.numer());
                }
            }
        } else {
            // Fractional bounds go in as scaled rows; the column itself is free.
            let _ = writeln!(bounds, " {name} free");
            if let Some(l) = &v.lower {
                write_bound_row(&mut out, &format!("lb{i}"), name, l, ">=");
            }
            if let Some(u) = &v.upper {
                write_bound_row(&mut out, &format!("ub{i}"), name, u, "<=");
            }
        }
    }
    out.push_str("Bounds\n");
    out.push_str(&bounds);
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::LinConstraint;
    use crate::num::{int, ratio};

    #[test]
    fn rows_are_integral() {
        let mut lp = LpProblem::new();
        let a = lp.add_free("a");
        let e = lp.add_var("eps", Some(int(0)), Some(int(1)));
        lp.add_constraint(LinConstraint::new(
            LinExpr::from_parts([(a, ratio(1, 2)), (e, ratio(-1, 3))], ratio(1, 6)),
            Relation::Le,
        ));
        lp.set_objective(LinExpr::var(e));
        let text = to_cplex_lp(&lp);
        assert!(text.contains(" r0: 3 v0_a - 2 v1_eps <= -1"), "{text}");
        assert!(text.contains("v0_a free"));
        assert!(text.contains("0 <= v1_eps <= 1"));
        assert!(text.trim_end().ends_with("End"));
    }
}
