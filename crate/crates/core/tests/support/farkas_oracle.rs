//! Brute-force entailment by Fourier–Motzkin elimination, used to cross-check
//! the Farkas encoding. Exponential, so only for a handful of variables.

use glexrsm::lp::{encode_implication, solve_lp, FarkasImplication, LpOutcome, LpProblem};
use glexrsm::num::int;
use glexrsm::param::ParamExpr;
use glexrsm::{LinConstraint, LinExpr, Polyhedron, QLinExpr, QPolyhedron, Rational, Relation};
use num_traits::{Signed, Zero};
use rand::Rng;

/// `a·x <= b`, or `<` when `strict`.
#[derive(Debug, Clone)]
struct Row {
    a: Vec<Rational>,
    b: Rational,
    strict: bool,
}

fn rows_of(p: &QPolyhedron, n: usize) -> Vec<Row> {
    let mut out = Vec::new();
    for c in &p.constraints {
        let a: Vec<Rational> = (0..n).map(|i| c.lhs.coeff(i)).collect();
        let b = -c.lhs.constant_term().clone();
        match c.rel {
            Relation::Le => out.push(Row {
                a,
                b,
                strict: false,
            }),
            Relation::Lt => out.push(Row { a, b, strict: true }),
            Relation::Eq => {
                out.push(Row {
                    a: a.iter().map(|v| -v).collect(),
                    b: -b.clone(),
                    strict: false,
                });
                out.push(Row {
                    a,
                    b,
                    strict: false,
                });
            }
        }
    }
    out
}

/// Emptiness over the reals.
fn empty(mut rows: Vec<Row>, n: usize) -> bool {
    for i in 0..n {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for r in rows {
            if r.a[i].is_positive() {
                pos.push(r);
            } else if r.a[i].is_negative() {
                neg.push(r);
            } else {
                rest.push(r);
            }
        }
        for p in &pos {
            for q in &neg {
                let (sp, sq) = (-q.a[i].clone(), p.a[i].clone());
                let a =
                    p.a.iter()
                        .zip(&q.a)
                        .map(|(x, y)| x * &sp + y * &sq)
                        .collect();
                rest.push(Row {
                    a,
                    b: &p.b * &sp + &q.b * &sq,
                    strict: p.strict || q.strict,
                });
            }
        }
        rows = rest;
    }
    rows.iter().any(|r| {
        if r.strict {
            !r.b.is_positive()
        } else {
            r.b.is_negative()
        }
    })
}

pub fn fm_nonempty(p: &QPolyhedron, n: usize) -> bool {
    !empty(rows_of(p, n), n)
}

/// Whether `p ⊨ e >= 0`, by emptiness of `p ∧ e < 0`.
pub fn fm_entails(p: &QPolyhedron, e: &QLinExpr, n: usize) -> bool {
    let mut q = p.clone();
    q.push(LinConstraint::new(e.clone(), Relation::Lt));
    empty(rows_of(&q, n), n)
}

/// Feasibility of the Farkas system for `p ⇒ e >= 0`, solved as an LP.
pub fn farkas_entails(p: &QPolyhedron, e: &QLinExpr) -> bool {
    let f = FarkasImplication {
        antecedent: p.clone(),
        consequent: ParamExpr::from_concrete(e),
    };
    let enc = encode_implication(&f, 0).expect("non-strict antecedent");
    let mut lp = LpProblem::new();
    for r in 0..enc.multipliers {
        lp.add_nonneg(format!("lam{r}"));
    }
    for c in enc.constraints {
        match c.constant_truth() {
            Some(true) => {}
            Some(false) => return false,
            None => lp.add_constraint(c),
        }
    }
    match solve_lp(&lp).expect("solver") {
        LpOutcome::Optimal { .. } => true,
        LpOutcome::Infeasible => false,
        LpOutcome::Unbounded => unreachable!("no objective"),
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub vars: usize,
    pub antecedent: QPolyhedron,
    pub consequent: QLinExpr,
}

fn small(rng: &mut impl Rng, lo: i64, hi: i64) -> Rational {
    int(rng.random_range(lo..=hi))
}

fn random_expr(rng: &mut impl Rng, n: usize) -> QLinExpr {
    let mut e = LinExpr::constant(small(rng, -5, 5));
    for i in 0..n {
        e.add_term(i, small(rng, -3, 3));
    }
    e
}

/// A random non-empty, non-strict antecedent over 1–3 variables and a
/// concrete consequent. About half of the consequents are built as a
/// non-negative combination of antecedent rows plus a constant, so that both
/// verdicts are well represented.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    loop {
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=4usize);
        let mut ante = Polyhedron::top();
        for _ in 0..m {
            let e = random_expr(rng, n);
            if rng.random_bool(0.15) {
                ante.push(LinConstraint::new(e, Relation::Eq));
            } else {
                ante.push(LinConstraint::new(e, Relation::Le));
            }
        }
        if !fm_nonempty(&ante, n) {
            continue;
        }
        let consequent = if rng.random_bool(0.5) {
            // Rows are `e <= 0`, so `-e >= 0` is entailed.
            let mut e = LinExpr::constant(small(rng, -2, 2));
            for c in &ante.constraints {
                let k = small(rng, 0, 2);
                if !k.is_zero() {
                    e.add_scaled(&c.lhs.negated(), &k);
                }
            }
            e
        } else {
            random_expr(rng, n)
        };
        return Instance {
            vars: n,
            antecedent: ante,
            consequent,
        };
    }
}

/// Agreements, entailed count and the disagreeing instances over `count` draws.
pub fn compare(rng: &mut impl Rng, count: usize) -> (usize, usize, Vec<Instance>) {
    let mut agree = 0;
    let mut entailed = 0;
    let mut bad = Vec::new();
    for _ in 0..count {
        let inst = random_instance(rng);
        let want = fm_entails(&inst.antecedent, &inst.consequent, inst.vars);
        let got = farkas_entails(&inst.antecedent, &inst.consequent);
        entailed += want as usize;
        if want == got {
            agree += 1;
        } else {
            bad.push(inst);
        }
    }
    (agree, entailed, bad)
}
