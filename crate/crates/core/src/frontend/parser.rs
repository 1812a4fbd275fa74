use num_traits::{One, Zero};

use crate::linear::LinConstraint;
use crate::model::DistributionSpec;
use crate::{QLinExpr, Rational};

use super::ast::{Cond, Rhs, SourceProgram, Stmt, StmtKind};
use super::lexer::{lex, Tok, Token};
use super::ParseError;

/// An affine value with at most one sampling term.
#[derive(Debug, Clone)]
struct Val {
    lin: QLinExpr,
    sample: Option<(Rational, DistributionSpec)>,
}

impl Val {
    fn constant(c: Rational) -> Self {
        Val {
            lin: QLinExpr::constant(c),
            sample: None,
        }
    }

    fn as_constant(&self) -> Option<Rational> {
        (self.lin.is_constant() && self.sample.is_none()).then(|| self.lin.constant_term().clone())
    }

    fn scale(mut self, k: &Rational) -> Self {
        self.lin = self.lin.scaled(k);
        self.sample = self
            .sample
            .map(|(c, d)| (c * k.clone(), d))
            .filter(|(c, _)| !c.is_zero());
        self
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    vars: Vec<String>,
}

type PResult<T> = Result<T, ParseError>;

fn is_block_end(t: &Tok) -> bool {
    matches!(t, Tok::Eof) || matches!(t, Tok::Ident(w) if w == "od" || w == "fi" || w == "else")
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (l, c) = self.here();
        Err(ParseError::syntax(l, c, msg))
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!(
            "expected {wanted}, found {}",
            self.peek().describe()
        ))
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("'{kw}'"))
        }
    }

    fn expect(&mut self, t: Tok, wanted: &str) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.unexpected(wanted)
        }
    }

    fn var_index(&mut self, name: &str) -> usize {
        match self.vars.iter().position(|v| v == name) {
            Some(i) => i,
            None => {
                self.vars.push(name.to_string());
                self.vars.len() - 1
            }
        }
    }

    fn program(&mut self) -> PResult<Vec<Stmt>> {
        let stmts = self.seq()?;
        if *self.peek() != Tok::Eof {
            return self.unexpected("a statement or end of input");
        }
        Ok(stmts)
    }

    fn seq(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while !is_block_end(self.peek()) {
            if *self.peek() == Tok::Semi {
                self.bump();
                continue;
            }
            out.push(self.stmt()?);
            match self.peek() {
                Tok::Semi => {
                    self.bump();
                }
                t if is_block_end(t) => {}
                Tok::Ident(_) => {}
                _ => return self.unexpected("';' or a statement"),
            }
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let (line, col) = self.here();
        let mut label = None;
        if let (Tok::Ident(name), Tok::Colon) = (self.peek().clone(), self.peek_at(1).clone()) {
            self.bump();
            self.bump();
            label = Some(name);
        }
        let kind = match self.peek().clone() {
            Tok::Ident(w) if w == "skip" => {
                self.bump();
                StmtKind::Skip
            }
            Tok::Ident(w) if w == "while" => {
                self.bump();
                let cond = self.cond()?;
                self.expect_keyword("do")?;
                let body = self.seq()?;
                self.expect_keyword("od")?;
                StmtKind::While { cond, body }
            }
            Tok::Ident(w) if w == "if" => {
                self.bump();
                self.if_rest()?
            }
            Tok::Ident(w) if is_reserved(&w) => {
                return self.error(format!("unexpected keyword '{w}'"));
            }
            Tok::Ident(name) => {
                self.bump();
                self.expect(Tok::Assign, "':='")?;
                let var = self.var_index(&name);
                let rhs = self.rhs()?;
                StmtKind::Assign { var, rhs }
            }
            _ => return self.unexpected("a statement"),
        };
        Ok(Stmt {
            label,
            kind,
            line,
            col,
        })
    }

    fn if_rest(&mut self) -> PResult<StmtKind> {
        enum Head {
            Prob(Rational),
            Star,
            Cond(Cond),
        }
        let head = if self.is_keyword("prob") {
            self.bump();
            self.expect(Tok::LParen, "'('")?;
            let at = self.here();
            let v = self.expr()?;
            self.expect(Tok::RParen, "')'")?;
            let Some(p) = v.as_constant() else {
                return Err(ParseError::syntax(
                    at.0,
                    at.1,
                    "probability must be a constant",
                ));
            };
            if p <= Rational::zero() || p >= Rational::one() {
                return Err(ParseError::syntax(
                    at.0,
                    at.1,
                    "branching probability must lie strictly between 0 and 1",
                ));
            }
            Head::Prob(p)
        } else if *self.peek() == Tok::Star {
            self.bump();
            Head::Star
        } else {
            Head::Cond(self.cond()?)
        };
        self.expect_keyword("then")?;
        let then_branch = self.seq()?;
        let else_branch = if self.is_keyword("else") {
            self.bump();
            self.seq()?
        } else {
            Vec::new()
        };
        self.expect_keyword("fi")?;
        Ok(match head {
            Head::Prob(prob) => StmtKind::IfProb {
                prob,
                then_branch,
                else_branch,
            },
            Head::Star => StmtKind::IfNondet {
                then_branch,
                else_branch,
            },
            Head::Cond(cond) => StmtKind::If {
                cond,
                then_branch,
                else_branch,
            },
        })
    }

    fn rhs(&mut self) -> PResult<Rhs> {
        if self.is_keyword("ndet") {
            self.bump();
            let (lo, hi) = self.interval("ndet")?;
            if lo > hi {
                return self.error("empty nondeterministic interval");
            }
            return Ok(Rhs::Ndet { lo, hi });
        }
        let v = self.expr()?;
        Ok(Rhs::Expr {
            base: v.lin,
            sample: v.sample,
        })
    }

    /// `(a, b)` or `[a, b]` with constant endpoints.
    fn interval(&mut self, what: &str) -> PResult<(Rational, Rational)> {
        let close = match self.bump() {
            Tok::LParen => Tok::RParen,
            Tok::LBrack => Tok::RBrack,
            _ => {
                self.pos -= 1;
                return self.unexpected(&format!("'(' or '[' after {what}"));
            }
        };
        let lo = self.const_expr()?;
        self.expect(Tok::Comma, "','")?;
        let hi = self.const_expr()?;
        let wanted = if close == Tok::RParen { "')'" } else { "']'" };
        self.expect(close, wanted)?;
        Ok((lo, hi))
    }

    fn const_expr(&mut self) -> PResult<Rational> {
        let at = self.here();
        let v = self.expr()?;
        v.as_constant()
            .ok_or_else(|| ParseError::syntax(at.0, at.1, "expected a constant"))
    }

    /// A constant or `inf` / `-inf` (returned as `None`).
    fn bound(&mut self) -> PResult<Option<Rational>> {
        let neg =
            *self.peek() == Tok::Minus && matches!(self.peek_at(1), Tok::Ident(w) if w == "inf");
        if neg || self.is_keyword("inf") {
            if neg {
                self.bump();
            }
            self.bump();
            return Ok(None);
        }
        self.const_expr().map(Some)
    }

    fn expr(&mut self) -> PResult<Val> {
        let mut acc = self.term()?;
        loop {
            let sign = match self.peek() {
                Tok::Plus => Rational::one(),
                Tok::Minus => -Rational::one(),
                _ => return Ok(acc),
            };
            let at = self.here();
            self.bump();
            let rhs = self.term()?.scale(&sign);
            acc.lin = acc.lin.plus(&rhs.lin);
            acc.sample = match (acc.sample, rhs.sample) {
                (Some(_), Some(_)) => {
                    return Err(ParseError::MultipleSamplesInAssignment {
                        line: at.0,
                        col: at.1,
                    })
                }
                (a, b) => a.or(b),
            };
        }
    }

    fn term(&mut self) -> PResult<Val> {
        let mut acc = self.unary()?;
        loop {
            let op = self.peek().clone();
            if op != Tok::Star && op != Tok::Slash {
                return Ok(acc);
            }
            let at = self.here();
            self.bump();
            let rhs = self.unary()?;
            if op == Tok::Slash {
                match rhs.as_constant() {
                    Some(k) if !k.is_zero() => acc = acc.scale(&(Rational::one() / k)),
                    Some(_) => return Err(ParseError::syntax(at.0, at.1, "division by zero")),
                    None => {
                        return Err(ParseError::NonLinearExpression {
                            line: at.0,
                            col: at.1,
                        })
                    }
                }
            } else if let Some(k) = rhs.as_constant() {
                acc = acc.scale(&k);
            } else if let Some(k) = acc.as_constant() {
                acc = rhs.scale(&k);
            } else {
                return Err(ParseError::NonLinearExpression {
                    line: at.0,
                    col: at.1,
                });
            }
        }
    }

    fn unary(&mut self) -> PResult<Val> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(self.unary()?.scale(&-Rational::one()))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> PResult<Val> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Val::constant(v))
            }
            Tok::LParen => {
                self.bump();
                let v = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(v)
            }
            Tok::Ident(name) => {
                if let Some(kind) = dist_name(&name) {
                    if matches!(self.peek_at(1), Tok::LParen | Tok::LBrack) {
                        self.bump();
                        let d = self.distribution(kind)?;
                        return Ok(Val {
                            lin: QLinExpr::zero(),
                            sample: Some((Rational::one(), d)),
                        });
                    }
                }
                if name == "sample" && *self.peek_at(1) == Tok::LParen {
                    self.bump();
                    self.bump();
                    let v = self.atom()?;
                    self.expect(Tok::RParen, "')'")?;
                    if v.sample.is_none() || !v.lin.is_zero() {
                        return self.error("sample(...) expects a distribution");
                    }
                    return Ok(v);
                }
                if is_reserved(&name) {
                    return self.error(format!("unexpected keyword '{name}' in expression"));
                }
                self.bump();
                let i = self.var_index(&name);
                Ok(Val {
                    lin: QLinExpr::var(i),
                    sample: None,
                })
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn distribution(&mut self, kind: DistName) -> PResult<DistributionSpec> {
        let at = self.here();
        let bad = |msg: &str| Err(ParseError::syntax(at.0, at.1, msg));
        Ok(match kind {
            DistName::Uniform => {
                let (lo, hi) = self.interval("Unif")?;
                if lo >= hi {
                    return bad("uniform bounds must satisfy lo < hi");
                }
                DistributionSpec::uniform(lo, hi)
            }
            DistName::Normal => {
                let (m, s) = self.interval("Norm")?;
                if s <= Rational::zero() {
                    return bad("standard deviation must be positive");
                }
                DistributionSpec::normal(m, s)
            }
            DistName::Bernoulli => {
                self.expect(Tok::LParen, "'('")?;
                let p = self.const_expr()?;
                self.expect(Tok::RParen, "')'")?;
                if p < Rational::zero() || p > Rational::one() {
                    return bad("bernoulli parameter must lie in [0, 1]");
                }
                DistributionSpec::bernoulli(p)
            }
            DistName::Discrete => {
                self.expect(Tok::LParen, "'('")?;
                let mut points = Vec::new();
                loop {
                    let v = self.const_expr()?;
                    self.expect(Tok::Colon, "':'")?;
                    let p = self.const_expr()?;
                    points.push((v, p));
                    if *self.peek() == Tok::Comma {
                        self.bump();
                        continue;
                    }
                    self.expect(Tok::RParen, "')'")?;
                    break;
                }
                let d = DistributionSpec::discrete(points);
                if let Some(msg) = d.problems().into_iter().next() {
                    return Err(ParseError::syntax(at.0, at.1, msg));
                }
                d
            }
            DistName::Custom => {
                self.expect(Tok::LParen, "'('")?;
                let name = match self.bump() {
                    Tok::Ident(n) => n,
                    _ => {
                        self.pos -= 1;
                        return self.unexpected("a sampler name");
                    }
                };
                self.expect(Tok::Comma, "','")?;
                let mean = self.const_expr()?;
                self.expect(Tok::Comma, "','")?;
                let lo = self.bound()?;
                self.expect(Tok::Comma, "','")?;
                let hi = self.bound()?;
                self.expect(Tok::RParen, "')'")?;
                let d = DistributionSpec::custom(name, mean, lo, hi);
                if let Some(msg) = d.problems().into_iter().next() {
                    return Err(ParseError::syntax(at.0, at.1, msg));
                }
                d
            }
        })
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut acc = self.conj()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.conj()?;
            acc = Cond::Or(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn conj(&mut self) -> PResult<Cond> {
        let mut acc = self.neg()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.neg()?;
            acc = Cond::And(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn neg(&mut self) -> PResult<Cond> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(Cond::Not(Box::new(self.neg()?)));
        }
        if self.is_keyword("true") {
            self.bump();
            return Ok(Cond::True);
        }
        if self.is_keyword("false") {
            self.bump();
            return Ok(Cond::False);
        }
        if *self.peek() == Tok::LParen {
            // Either a parenthesized condition or an expression that starts
            // with a parenthesis; try the former and fall back.
            let save = self.pos;
            let saved_vars = self.vars.len();
            self.bump();
            if let Ok(c) = self.cond() {
                if *self.peek() == Tok::RParen {
                    self.bump();
                    if !is_expr_continuation(self.peek()) {
                        return Ok(c);
                    }
                }
            }
            self.pos = save;
            self.vars.truncate(saved_vars);
        }
        self.relation()
    }

    fn cond_operand(&mut self) -> PResult<QLinExpr> {
        let at = self.here();
        let v = self.expr()?;
        if v.sample.is_some() {
            return Err(ParseError::syntax(
                at.0,
                at.1,
                "sampling is not allowed in a condition",
            ));
        }
        Ok(v.lin)
    }

    /// `e1 op e2 [op e3 ...]`, chains read as conjunctions.
    fn relation(&mut self) -> PResult<Cond> {
        let mut lhs = self.cond_operand()?;
        let mut out: Option<Cond> = None;
        loop {
            let op = self.peek().clone();
            let atom = |a: &QLinExpr, b: &QLinExpr| -> Option<Cond> {
                Some(match op {
                    Tok::Le => Cond::Atom(LinConstraint::le(a, b)),
                    Tok::Lt => Cond::Atom(LinConstraint::lt(a, b)),
                    Tok::Ge => Cond::Atom(LinConstraint::ge(a, b)),
                    Tok::Gt => Cond::Atom(LinConstraint::gt(a, b)),
                    Tok::EqEq => Cond::Atom(LinConstraint::eq(a, b)),
                    Tok::Ne => Cond::Not(Box::new(Cond::Atom(LinConstraint::eq(a, b)))),
                    _ => return None,
                })
            };
            if atom(&lhs, &lhs).is_none() {
                break;
            }
            self.bump();
            let rhs = self.cond_operand()?;
            let c = atom(&lhs, &rhs).expect("operator checked above");
            out = Some(match out {
                None => c,
                Some(prev) => Cond::And(Box::new(prev), Box::new(c)),
            });
            lhs = rhs;
        }
        match out {
            Some(c) => Ok(c),
            None => self.unexpected("a comparison operator"),
        }
    }
}

fn is_expr_continuation(t: &Tok) -> bool {
    matches!(
        t,
        Tok::Plus
            | Tok::Minus
            | Tok::Star
            | Tok::Slash
            | Tok::Le
            | Tok::Lt
            | Tok::Ge
            | Tok::Gt
            | Tok::EqEq
            | Tok::Ne
    )
}

#[derive(Debug, Clone, Copy)]
enum DistName {
    Normal,
    Uniform,
    Bernoulli,
    Discrete,
    Custom,
}

fn dist_name(s: &str) -> Option<DistName> {
    Some(match s {
        "Norm" | "Normal" => DistName::Normal,
        "Unif" | "Uni" | "Uniform" => DistName::Uniform,
        "Bern" | "Bernoulli" => DistName::Bernoulli,
        "Disc" | "Discrete" => DistName::Discrete,
        "Custom" => DistName::Custom,
        _ => return None,
    })
}

const RESERVED: &[&str] = &[
    "while", "do", "od", "if", "then", "else", "fi", "skip", "prob", "ndet", "true", "false",
    "sample", "inf",
];

fn is_reserved(w: &str) -> bool {
    RESERVED.contains(&w)
}

pub fn parse_program(text: &str) -> Result<SourceProgram, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        vars: Vec::new(),
    };
    let mut stmts = p.program()?;
    if stmts.is_empty() {
        stmts.push(Stmt {
            label: None,
            kind: StmtKind::Skip,
            line: 1,
            col: 1,
        });
    }
    Ok(SourceProgram {
        variables: p.vars,
        stmts,
    })
}

/// Parses a condition over a fixed set of variable names; unknown names
/// are an error.
pub fn parse_condition(text: &str, variables: &[String]) -> Result<Cond, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        vars: variables.to_vec(),
    };
    let c = p.cond()?;
    if *p.peek() != Tok::Eof {
        return p.unexpected("end of condition");
    }
    if p.vars.len() > variables.len() {
        return Err(ParseError::syntax(
            1,
            1,
            format!("unknown variable '{}'", p.vars[variables.len()]),
        ));
    }
    Ok(c)
}
