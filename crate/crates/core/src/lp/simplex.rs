//! Two-phase primal simplex over a dense tableau with Bland's pivot rule.
//!
//! Rows are stored densely but pivots only touch the non-zero entries of the
//! pivot row, which keeps the sparse Farkas systems cheap.

use log::warn;

use crate::linear::{LinExpr, Relation};
use crate::num::Scalar;

use super::{LpError, LpOutcome, LpProblem, SolveOptions};

/// How an original unknown is expressed through non-negative columns.
#[derive(Debug, Clone)]
enum ColMap<S> {
    /// `x = lower + col`
    Shifted { col: usize, lower: S },
    /// `x = upper - col`
    Reflected { col: usize, upper: S },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    rhs: Vec<S>,
    basis: Vec<usize>,
    ncols: usize,
    /// Reduced costs of the current objective (maximize; enter when positive).
    reduced: Vec<S>,
    value: S,
    /// Columns that may never enter the basis.
    blocked: Vec<bool>,
    pivots: u64,
    cap: u64,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        if !p.is_one() {
            let inv = S::one() / p;
            for v in self.rows[r].iter_mut() {
                if !v.is_zero() {
                    *v = v.clone() * inv.clone();
                }
            }
            self.rhs[r] = self.rhs[r].clone() * inv;
        }
        self.rows[r][c] = S::one();
        let nz: Vec<usize> = (0..self.ncols)
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let prow: Vec<S> = nz.iter().map(|&j| self.rows[r][j].clone()).collect();
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c].clone();
            if f.is_zero() {
                continue;
            }
            let row = &mut self.rows[i];
            for (k, &j) in nz.iter().enumerate() {
                let v = row[j].clone() - f.clone() * prow[k].clone();
                row[j] = if v.near_zero() { S::zero() } else { v };
            }
            row[c] = S::zero();
            self.rhs[i] = self.rhs[i].clone() - f * prhs.clone();
            if self.rhs[i].near_zero() {
                self.rhs[i] = S::zero();
            }
        }
        let f = self.reduced[c].clone();
        if !f.is_zero() {
            for (k, &j) in nz.iter().enumerate() {
                let v = self.reduced[j].clone() - f.clone() * prow[k].clone();
                self.reduced[j] = if v.near_zero() { S::zero() } else { v };
            }
            self.reduced[c] = S::zero();
            self.value = self.value.clone() + f * prhs;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Installs `cost` (per column) as the objective, expressed in terms of
    /// the non-basic columns.
    fn set_objective(&mut self, cost: &[S]) {
        self.reduced = cost.to_vec();
        self.value = S::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b].clone();
            if cb.is_zero() {
                continue;
            }
            for j in 0..self.ncols {
                let a = &self.rows[i][j];
                if !a.is_zero() {
                    self.reduced[j] = self.reduced[j].clone() - cb.clone() * a.clone();
                }
            }
            self.value = self.value.clone() + cb * self.rhs[i].clone();
        }
        for &b in &self.basis {
            self.reduced[b] = S::zero();
        }
    }

    fn run(&mut self) -> Result<PhaseEnd, LpError> {
        loop {
            // Bland: lowest-index improving column enters.
            let Some(c) = (0..self.ncols)
                .find(|&j| !self.blocked[j] && self.reduced[j].definitely_positive())
            else {
                return Ok(PhaseEnd::Optimal);
            };
            // Ratio test; ties broken by lowest basic column index.
            let mut best: Option<(usize, S)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if !a.definitely_positive() {
                    continue;
                }
                let ratio = self.rhs[i].clone() / a.clone();
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = best else {
                return Ok(PhaseEnd::Unbounded);
            };
            if self.pivots >= self.cap {
                return Err(LpError::IterationCap {
                    pivots: self.pivots,
                });
            }
            self.pivot(r, c);
        }
    }
}

pub(super) fn solve<S: Scalar>(
    lp: &LpProblem<S>,
    opts: &SolveOptions,
) -> Result<LpOutcome<S>, LpError> {
    if let Some(k) = lp.constraints.iter().position(|c| c.rel == Relation::Lt) {
        return Err(LpError::StrictConstraint { row: k });
    }

    // Column layout for the structural variables.
    let mut ncols = 0usize;
    let mut maps: Vec<ColMap<S>> = Vec::with_capacity(lp.vars.len());
    // Extra rows `col <= upper - lower` for doubly bounded variables.
    let mut range_rows: Vec<(usize, S)> = Vec::new();
    for v in &lp.vars {
        match (&v.lower, &v.upper) {
            (Some(l), u) => {
                let col = ncols;
                ncols += 1;
                if let Some(u) = u {
                    if u < l {
                        return Ok(LpOutcome::Infeasible);
                    }
                    range_rows.push((col, u.clone() - l.clone()));
                }
                maps.push(ColMap::Shifted {
                    col,
                    lower: l.clone(),
                });
            }
            (None, Some(u)) => {
                maps.push(ColMap::Reflected {
                    col: ncols,
                    upper: u.clone(),
                });
                ncols += 1;
            }
            (None, None) => {
                maps.push(ColMap::Split {
                    pos: ncols,
                    neg: ncols + 1,
                });
                ncols += 2;
            }
        }
    }
    let structural = ncols;

    // Rows as (coefficients over structural columns, relation, rhs).
    let mut raw: Vec<(Vec<(usize, S)>, Relation, S)> = Vec::new();
    for c in &lp.constraints {
        let (coeffs, rhs) = substitute_columns(&c.lhs, &maps);
        raw.push((coeffs, c.rel, rhs));
    }
    for (col, width) in range_rows {
        raw.push((vec![(col, S::one())], Relation::Le, width));
    }

    let m = raw.len();
    let slack_count = raw.iter().filter(|r| r.1 == Relation::Le).count();
    let slack_base = structural;
    let art_base = slack_base + slack_count;
    let mut needs_art = Vec::with_capacity(m);
    let mut slack_of_row = vec![None; m];
    {
        let mut s = slack_base;
        for (i, r) in raw.iter().enumerate() {
            if r.1 == Relation::Le {
                slack_of_row[i] = Some(s);
                s += 1;
            }
        }
    }
    for (i, r) in raw.iter().enumerate() {
        let flipped = r.2.is_negative();
        needs_art.push(slack_of_row[i].is_none() || flipped);
    }
    let art_count = needs_art.iter().filter(|b| **b).count();
    let total = art_base + art_count;

    let mut rows = vec![vec![S::zero(); total]; m];
    let mut rhs = vec![S::zero(); m];
    let mut basis = vec![0usize; m];
    let mut next_art = art_base;
    for (i, (coeffs, _, b)) in raw.into_iter().enumerate() {
        let flip = b.is_negative();
        let sign = if flip { -S::one() } else { S::one() };
        for (j, a) in coeffs {
            rows[i][j] = a * sign.clone();
        }
        if let Some(s) = slack_of_row[i] {
            rows[i][s] = sign.clone();
        }
        rhs[i] = b * sign;
        if needs_art[i] {
            rows[i][next_art] = S::one();
            basis[i] = next_art;
            next_art += 1;
        } else {
            basis[i] = slack_of_row[i].expect("row without artificial has a slack");
        }
    }

    let mut t = Tableau {
        rows,
        rhs,
        basis,
        ncols: total,
        reduced: vec![S::zero(); total],
        value: S::zero(),
        blocked: vec![false; total],
        pivots: 0,
        cap: opts.iteration_cap,
    };

    if art_count > 0 {
        let mut cost = vec![S::zero(); total];
        for c in cost.iter_mut().skip(art_base) {
            *c = -S::one();
        }
        t.set_objective(&cost);
        match t.run()? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => unreachable!("phase one objective is bounded by zero"),
        }
        if t.value.definitely_negative() {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificials out of the basis or drop their rows.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= art_base {
                match (0..art_base).find(|&j| !t.rows[i][j].near_zero()) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.rhs.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for b in t.blocked.iter_mut().skip(art_base) {
            *b = true;
        }
    }

    // Phase two.
    let mut cost = vec![S::zero(); total];
    let mut obj_offset = lp.objective.constant_term().clone();
    for (i, c) in lp.objective.coeffs() {
        match &maps[i] {
            ColMap::Shifted { col, lower } => {
                cost[*col] = cost[*col].clone() + c.clone();
                obj_offset = obj_offset + c.clone() * lower.clone();
            }
            ColMap::Reflected { col, upper } => {
                cost[*col] = cost[*col].clone() - c.clone();
                obj_offset = obj_offset + c.clone() * upper.clone();
            }
            ColMap::Split { pos, neg } => {
                cost[*pos] = cost[*pos].clone() + c.clone();
                cost[*neg] = cost[*neg].clone() - c.clone();
            }
        }
    }
    t.set_objective(&cost);
    if let PhaseEnd::Unbounded = t.run()? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut colval = vec![S::zero(); total];
    for (i, &b) in t.basis.iter().enumerate() {
        colval[b] = t.rhs[i].clone();
    }
    let assignment: Vec<S> = maps
        .iter()
        .map(|m| match m {
            ColMap::Shifted { col, lower } => lower.clone() + colval[*col].clone(),
            ColMap::Reflected { col, upper } => upper.clone() - colval[*col].clone(),
            ColMap::Split { pos, neg } => colval[*pos].clone() - colval[*neg].clone(),
        })
        .collect();
    let value = lp.objective.eval(&assignment);
    if S::EXACT {
        debug_assert!(
            lp.constraints.iter().all(|c| c.holds(&assignment)),
            "simplex returned a point violating a constraint"
        );
        debug_assert!(value == t.value.clone() + obj_offset.clone());
    } else if lp.constraints.iter().any(|c| !c.holds(&assignment)) {
        warn!("floating-point simplex result violates a constraint beyond tolerance");
    }
    Ok(LpOutcome::Optimal {
        assignment,
        value,
        pivots: t.pivots,
    })
}

/// Rewrites `lhs rel 0` over columns as `Σ a_j col_j rel rhs`.
fn substitute_columns<S: Scalar>(lhs: &LinExpr<S>, maps: &[ColMap<S>]) -> (Vec<(usize, S)>, S) {
    let mut rhs = -lhs.constant_term().clone();
    let mut coeffs: Vec<(usize, S)> = Vec::new();
    for (i, a) in lhs.coeffs() {
        match &maps[i] {
            ColMap::Shifted { col, lower } => {
                coeffs.push((*col, a.clone()));
                rhs = rhs - a.clone() * lower.clone();
            }
            ColMap::Reflected { col, upper } => {
                coeffs.push((*col, -a.clone()));
                rhs = rhs - a.clone() * upper.clone();
            }
            ColMap::Split { pos, neg } => {
                coeffs.push((*pos, a.clone()));
                coeffs.push((*neg, -a.clone()));
            }
        }
    }
    (coeffs, rhs)
}
