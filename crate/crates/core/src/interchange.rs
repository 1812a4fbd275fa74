//! JSON interchange for programs, invariants and certificates.
//!
//! Rationals are `"p/q"` strings (plain integers and decimals are accepted
//! on input). Constraints are text such as `"x - 2*y <= 7"`; guards are
//! lists of disjuncts, each a list of constraints. Linear expressions in
//! updates and certificates are objects `{"x": "1/2", "const": "3"}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use num_traits::{Signed, Zero};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::frontend::parse_condition;
use crate::linear::{format_constraint, LinConstraint};
use crate::model::{
    Certificate, CertificateMode, DistKind, DistributionSpec, Invariant, Pcfg, Transition,
    TransitionKind, UpdateElement,
};
use crate::num::{format_rational, parse_rational};
use crate::{QLinExpr, QPolyhedron, QPredicate, Rational};

const CONST_KEY: &str = "const";

#[derive(Debug, thiserror::Error)]
pub enum InterchangeError {
    #[error("format error at {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_err(path: impl Into<String>, msg: impl Into<String>) -> InterchangeError {
    InterchangeError::Format {
        path: path.into(),
        msg: msg.into(),
    }
}

type IResult<T> = Result<T, InterchangeError>;

/// Rational read from a `"p/q"` string or a JSON number.
#[derive(Debug, Clone)]
struct Q(Rational);

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        let text = match &v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(de::Error::custom("expected a rational string like \"p/q\"")),
        };
        parse_rational(&text)
            .map(Q)
            .ok_or_else(|| de::Error::custom(format!("malformed rational '{text}'")))
    }
}

fn q(r: &Rational) -> Value {
    Value::String(format_rational(r))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PcfgDoc {
    variables: Vec<String>,
    locations: Vec<String>,
    init: String,
    terminal: String,
    transitions: Vec<TransitionDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    id: String,
    source: String,
    kind: String,
    #[serde(default)]
    dest: Option<String>,
    #[serde(default)]
    guard: Option<Vec<Vec<String>>>,
    #[serde(default)]
    update: Option<UpdateDoc>,
    #[serde(default)]
    branches: Option<Vec<BranchDoc>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    dest: String,
    prob: Q,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateDoc {
    kind: String,
    target: String,
    #[serde(default)]
    base: Option<BTreeMap<String, Q>>,
    #[serde(default)]
    sample: Option<SampleDoc>,
    #[serde(default)]
    lo: Option<Q>,
    #[serde(default)]
    hi: Option<Q>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDoc {
    coeff: Q,
    dist: DistDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DistDoc {
    kind: String,
    params: BTreeMap<String, Value>,
    mean: Q,
    support: (Option<Q>, Option<Q>),
}

struct Names<'a> {
    locations: &'a [String],
    variables: &'a [String],
}

impl Names<'_> {
    fn loc(&self, name: &str, path: &str) -> IResult<usize> {
        self.locations
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| format_err(path, format!("unknown location '{name}'")))
    }

    fn var(&self, name: &str, path: &str) -> IResult<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| format_err(path, format!("unknown variable '{name}'")))
    }

    fn linexpr(&self, m: &BTreeMap<String, Q>, path: &str) -> IResult<QLinExpr> {
        let mut e = QLinExpr::zero();
        for (k, v) in m {
            if k == CONST_KEY {
                e.add_constant(v.0.clone());
            } else {
                let i = self.var(k, &format!("{path}.{k}"))?;
                e.add_term(i, v.0.clone());
            }
        }
        Ok(e)
    }

    /// A conjunction of constraints written as text.
    fn polyhedron(&self, items: &[String], path: &str) -> IResult<QPolyhedron> {
        let mut out = Vec::new();
        for (k, text) in items.iter().enumerate() {
            let p = format!("{path}[{k}]");
            let cond =
                parse_condition(text, self.variables).map_err(|e| format_err(&p, e.to_string()))?;
            let dnf = cond
                .to_dnf(crate::linear::DEFAULT_DNF_CAP)
                .map_err(|e| format_err(&p, e.to_string()))?;
            match dnf.disjuncts() {
                [single] => out.extend(single.constraints.iter().cloned()),
                _ => return Err(format_err(&p, "constraint must be a conjunction of atoms")),
            }
        }
        Ok(QPolyhedron::new(out))
    }
}

fn update_from_doc(u: &UpdateDoc, names: &Names, path: &str) -> IResult<UpdateElement> {
    let target = names.var(&u.target, &format!("{path}.target"))?;
    match u.kind.as_str() {
        "expr" => {
            if u.lo.is_some() || u.hi.is_some() {
                return Err(format_err(
                    path,
                    "expr updates take `base` and `sample`, not `lo`/`hi`",
                ));
            }
            let base = u
                .base
                .as_ref()
                .ok_or_else(|| format_err(path, "missing field `base`"))?;
            let sample = match &u.sample {
                None => None,
                Some(s) => Some((
                    s.coeff.0.clone(),
                    dist_from_doc(&s.dist, &format!("{path}.sample.dist"))?,
                )),
            };
            Ok(UpdateElement::Expr {
                target,
                base: names.linexpr(base, &format!("{path}.base"))?,
                sample,
            })
        }
        "ndet" => {
            if u.base.is_some() || u.sample.is_some() {
                return Err(format_err(path, "ndet updates take `lo` and `hi` only"));
            }
            let lo =
                u.lo.as_ref()
                    .ok_or_else(|| format_err(path, "missing field `lo`"))?;
            let hi =
                u.hi.as_ref()
                    .ok_or_else(|| format_err(path, "missing field `hi`"))?;
            Ok(UpdateElement::Nondet {
                target,
                lo: lo.0.clone(),
                hi: hi.0.clone(),
            })
        }
        other => Err(format_err(
            format!("{path}.kind"),
            format!("unknown update kind '{other}' (expr or ndet)"),
        )),
    }
}

fn param(params: &BTreeMap<String, Value>, key: &str, path: &str) -> IResult<Rational> {
    let v = params.get(key).ok_or_else(|| {
        format_err(
            format!("{path}.params"),
            format!("missing parameter '{key}'"),
        )
    })?;
    Q::deserialize(v)
        .map(|q| q.0)
        .map_err(|e| format_err(format!("{path}.params.{key}"), e.to_string()))
}

fn dist_from_doc(d: &DistDoc, path: &str) -> IResult<DistributionSpec> {
    let kind = match d.kind.as_str() {
        "normal" => DistKind::Normal {
            mean: param(&d.params, "mean", path)?,
            stddev: param(&d.params, "stddev", path)?,
        },
        "uniform" => DistKind::Uniform {
            lo: param(&d.params, "lo", path)?,
            hi: param(&d.params, "hi", path)?,
        },
        "bernoulli" => DistKind::Bernoulli(param(&d.params, "p", path)?),
        "discrete" => {
            let pts = d.params.get("values").ok_or_else(|| {
                format_err(format!("{path}.params"), "missing parameter 'values'")
            })?;
            let pts: Vec<(Q, Q)> = serde_json::from_value(pts.clone())
                .map_err(|e| format_err(format!("{path}.params.values"), e.to_string()))?;
            DistKind::DiscreteFinite(pts.into_iter().map(|(v, p)| (v.0, p.0)).collect())
        }
        "custom" => match d.params.get("sampler") {
            Some(Value::String(s)) => DistKind::Custom { sampler: s.clone() },
            _ => {
                return Err(format_err(
                    format!("{path}.params.sampler"),
                    "custom distributions need a sampler name",
                ))
            }
        },
        other => {
            return Err(format_err(
                format!("{path}.kind"),
                format!("unknown distribution '{other}'"),
            ))
        }
    };
    let spec = DistributionSpec {
        kind,
        mean: d.mean.0.clone(),
        support_lo: d.support.0.as_ref().map(|q| q.0.clone()),
        support_hi: d.support.1.as_ref().map(|q| q.0.clone()),
    };
    if let Some(msg) = spec.problems().into_iter().next() {
        return Err(format_err(path, msg));
    }
    Ok(spec)
}

fn dist_to_value(d: &DistributionSpec) -> Value {
    let params = match &d.kind {
        DistKind::Normal { mean, stddev } => json!({"mean": q(mean), "stddev": q(stddev)}),
        DistKind::Uniform { lo, hi } => json!({"lo": q(lo), "hi": q(hi)}),
        DistKind::Bernoulli(p) => json!({"p": q(p)}),
        DistKind::DiscreteFinite(pts) => {
            json!({"values": pts.iter().map(|(v, p)| json!([q(v), q(p)])).collect::<Vec<_>>()})
        }
        DistKind::Custom { sampler } => json!({"sampler": sampler}),
    };
    json!({
        "kind": d.kind_name(),
        "params": params,
        "mean": q(&d.mean),
        "support": [d.support_lo.as_ref().map(q), d.support_hi.as_ref().map(q)],
    })
}

pub fn linexpr_to_value(e: &QLinExpr, vars: &[String]) -> Value {
    let mut m = Map::new();
    for (i, c) in e.coeffs() {
        m.insert(vars[i].clone(), q(c));
    }
    if !e.constant_term().is_zero() || m.is_empty() {
        m.insert(CONST_KEY.to_string(), q(e.constant_term()));
    }
    Value::Object(m)
}

fn polyhedron_to_value(p: &QPolyhedron, vars: &[String]) -> Value {
    Value::Array(
        p.constraints
            .iter()
            .map(|c| Value::String(format_constraint(c, vars)))
            .collect(),
    )
}

fn check_names(kind: &str, names: &[String]) -> IResult<()> {
    let mut seen = BTreeSet::new();
    for (k, n) in names.iter().enumerate() {
        if !seen.insert(n) {
            return Err(format_err(
                format!("{kind}[{k}]"),
                format!("duplicate name '{n}'"),
            ));
        }
    }
    Ok(())
}

fn check_variable_names(vars: &[String]) -> IResult<()> {
    check_names("variables", vars)?;
    for (k, v) in vars.iter().enumerate() {
        let ok = v
            .chars()
            .next()
            .is_some_and(|c| c.is_alphabetic() || c == '_')
            && v.chars()
                .all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
            && v != CONST_KEY;
        if !ok {
            return Err(format_err(
                format!("variables[{k}]"),
                format!("'{v}' is not a usable variable name"),
            ));
        }
    }
    Ok(())
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> IResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format_err(
            if path.is_empty() {
                "$".to_string()
            } else {
                path
            },
            e.into_inner().to_string(),
        )
    })
}

pub fn pcfg_from_str(text: &str) -> IResult<Pcfg> {
    let doc: PcfgDoc = from_json(text)?;
    check_variable_names(&doc.variables)?;
    check_names("locations", &doc.locations)?;
    let names = Names {
        locations: &doc.locations,
        variables: &doc.variables,
    };
    let init = names.loc(&doc.init, "init")?;
    let terminal = names.loc(&doc.terminal, "terminal")?;
    let mut transitions = Vec::new();
    for (k, t) in doc.transitions.iter().enumerate() {
        let path = format!("transitions[{k}]");
        let source = names.loc(&t.source, &format!("{path}.source"))?;
        let kind = match t.kind.as_str() {
            "npb" => {
                if t.branches.is_some() {
                    return Err(format_err(
                        format!("{path}.branches"),
                        "only pb transitions have branches",
                    ));
                }
                let dest = t
                    .dest
                    .as_deref()
                    .ok_or_else(|| format_err(&path, "missing field `dest`"))?;
                let guard = t.guard.clone().unwrap_or_else(|| vec![vec![]]);
                if guard.is_empty() {
                    return Err(format_err(
                        format!("{path}.guard"),
                        "guard needs at least one disjunct (use [[]] for true)",
                    ));
                }
                let disjuncts = guard
                    .iter()
                    .enumerate()
                    .map(|(d, conj)| names.polyhedron(conj, &format!("{path}.guard[{d}]")))
                    .collect::<IResult<Vec<_>>>()?;
                let update = match &t.update {
                    None => UpdateElement::NoUpdate,
                    Some(u) => update_from_doc(u, &names, &format!("{path}.update"))?,
                };
                TransitionKind::Npb {
                    dest: names.loc(dest, &format!("{path}.dest"))?,
                    guard: QPredicate::raw(disjuncts),
                    update,
                }
            }
            "pb" => {
                for (field, present) in [
                    ("dest", t.dest.is_some()),
                    ("guard", t.guard.is_some()),
                    ("update", t.update.is_some()),
                ] {
                    if present {
                        return Err(format_err(
                            format!("{path}.{field}"),
                            format!("pb transitions carry no {field}"),
                        ));
                    }
                }
                let branches = t
                    .branches
                    .as_deref()
                    .ok_or_else(|| format_err(&path, "missing field `branches`"))?;
                let [a, b] = branches else {
                    return Err(format_err(
                        format!("{path}.branches"),
                        "exactly two branches required",
                    ));
                };
                TransitionKind::Pb {
                    branches: [
                        (
                            names.loc(&a.dest, &format!("{path}.branches[0].dest"))?,
                            a.prob.0.clone(),
                        ),
                        (
                            names.loc(&b.dest, &format!("{path}.branches[1].dest"))?,
                            b.prob.0.clone(),
                        ),
                    ],
                }
            }
            other => {
                return Err(format_err(
                    format!("{path}.kind"),
                    format!("unknown transition kind '{other}' (npb or pb)"),
                ))
            }
        };
        transitions.push(Transition {
            id: t.id.clone(),
            source,
            kind,
        });
    }
    Ok(Pcfg {
        variables: doc.variables,
        locations: doc.locations,
        init,
        terminal,
        transitions,
    })
}

pub fn pcfg_to_value(p: &Pcfg) -> Value {
    let loc = |i: usize| Value::String(p.locations[i].clone());
    let transitions: Vec<Value> = p
        .transitions
        .iter()
        .map(|t| match &t.kind {
            TransitionKind::Pb { branches } => json!({
                "id": t.id,
                "source": loc(t.source),
                "kind": "pb",
                "branches": branches
                    .iter()
                    .map(|(d, pr)| json!({"dest": loc(*d), "prob": q(pr)}))
                    .collect::<Vec<_>>(),
            }),
            TransitionKind::Npb { dest, guard, update } => {
                let mut m = Map::new();
                m.insert("id".into(), json!(t.id));
                m.insert("source".into(), loc(t.source));
                m.insert("kind".into(), json!("npb"));
                m.insert("dest".into(), loc(*dest));
                m.insert(
                    "guard".into(),
                    Value::Array(
                        guard
                            .disjuncts()
                            .iter()
                            .map(|d| polyhedron_to_value(d, &p.variables))
                            .collect(),
                    ),
                );
                match update {
                    UpdateElement::NoUpdate => {}
                    UpdateElement::Expr { target, base, sample } => {
                        let mut u = json!({
                            "kind": "expr",
                            "target": p.variables[*target],
                            "base": linexpr_to_value(base, &p.variables),
                        });
                        if let Some((c, d)) = sample {
                            u["sample"] = json!({"coeff": q(c), "dist": dist_to_value(d)});
                        }
                        m.insert("update".into(), u);
                    }
                    UpdateElement::Nondet { target, lo, hi } => {
                        m.insert(
                            "update".into(),
                            json!({"kind": "ndet", "target": p.variables[*target], "lo": q(lo), "hi": q(hi)}),
                        );
                    }
                }
                Value::Object(m)
            }
        })
        .collect();
    json!({
        "variables": p.variables,
        "locations": p.locations,
        "init": loc(p.init),
        "terminal": loc(p.terminal),
        "transitions": transitions,
    })
}

pub fn pcfg_to_string(p: &Pcfg) -> String {
    pretty(&pcfg_to_value(p))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn read(path: &Path) -> IResult<String> {
    fs::read_to_string(path).map_err(|source| InterchangeError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> IResult<()> {
    fs::write(path, text).map_err(|source| InterchangeError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_pcfg(path: impl AsRef<Path>) -> IResult<Pcfg> {
    pcfg_from_str(&read(path.as_ref())?)
}

pub fn dump_pcfg(p: &Pcfg, path: impl AsRef<Path>) -> IResult<()> {
    write(path.as_ref(), &pcfg_to_string(p))
}

/// Invariant sidecar: `{location: [constraint, ...]}`. Locations that are
/// not mentioned get `true`.
pub fn invariant_from_str(text: &str, p: &Pcfg) -> IResult<Invariant> {
    let doc: BTreeMap<String, Vec<String>> = from_json(text)?;
    let names = Names {
        locations: &p.locations,
        variables: &p.variables,
    };
    let mut inv = Invariant::trivial(p);
    for (loc, items) in &doc {
        let l = names.loc(loc, loc)?;
        inv.set(l, names.polyhedron(items, loc)?);
    }
    Ok(inv)
}

pub fn invariant_to_value(inv: &Invariant, p: &Pcfg) -> Value {
    let mut m = Map::new();
    for (l, poly) in inv.per_location.iter().enumerate() {
        if !poly.is_top() {
            m.insert(
                p.locations[l].clone(),
                polyhedron_to_value(poly, &p.variables),
            );
        }
    }
    Value::Object(m)
}

pub fn invariant_to_string(inv: &Invariant, p: &Pcfg) -> String {
    pretty(&invariant_to_value(inv, p))
}

pub fn load_invariant(path: impl AsRef<Path>, p: &Pcfg) -> IResult<Invariant> {
    invariant_from_str(&read(path.as_ref())?, p)
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct CertificateDoc {
    dimension: usize,
    components: BTreeMap<String, Vec<BTreeMap<String, Q>>>,
    levels: BTreeMap<String, usize>,
    shift: Q,
    mode: String,
    #[serde(default)]
    witness: Option<String>,
}

impl Serialize for Q {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

const PREMISE_NOTE: &str = "premise-conditions";

pub fn certificate_from_str(text: &str, p: &Pcfg) -> IResult<Certificate> {
    let doc: CertificateDoc = from_json(text)?;
    let mode = match doc.mode.as_str() {
        "bsp" => CertificateMode::BspComplete,
        "general" => CertificateMode::GeneralSound,
        other => {
            return Err(format_err(
                "mode",
                format!("unknown mode '{other}' (bsp or general)"),
            ))
        }
    };
    if doc.shift.0.is_negative() {
        return Err(format_err("shift", "shift must be non-negative"));
    }
    let names = Names {
        locations: &p.locations,
        variables: &p.variables,
    };
    let mismatch = |m: String| InterchangeError::StructuralMismatch(m);
    let mut components = vec![Vec::new(); p.locations.len()];
    for (loc, exprs) in &doc.components {
        let l = p
            .location_index(loc)
            .ok_or_else(|| mismatch(format!("certificate names unknown location '{loc}'")))?;
        if exprs.len() != doc.dimension {
            return Err(mismatch(format!(
                "location '{loc}' has {} components, dimension is {}",
                exprs.len(),
                doc.dimension
            )));
        }
        for (j, e) in exprs.iter().enumerate() {
            let path = format!("components.{loc}[{j}]");
            let e = names
                .linexpr(e, &path)
                .map_err(|e| mismatch(e.to_string()))?;
            components[l].push(e);
        }
    }
    if let Some(l) = components.iter().position(|c| c.len() != doc.dimension) {
        return Err(mismatch(format!(
            "no components for location '{}'",
            p.locations[l]
        )));
    }
    let mut levels = Vec::with_capacity(p.transitions.len());
    for t in &p.transitions {
        let lev = *doc
            .levels
            .get(&t.id)
            .ok_or_else(|| mismatch(format!("no level for transition '{}'", t.id)))?;
        if lev > doc.dimension {
            return Err(mismatch(format!(
                "level {lev} of '{}' exceeds dimension {}",
                t.id, doc.dimension
            )));
        }
        levels.push(lev);
    }
    if let Some(id) = doc
        .levels
        .keys()
        .find(|id| p.transition_index(id).is_none())
    {
        return Err(mismatch(format!(
            "level given for unknown transition '{id}'"
        )));
    }
    Ok(Certificate {
        dimension: doc.dimension,
        components,
        levels,
        shift: doc.shift.0,
        mode,
    })
}

pub fn certificate_to_value(c: &Certificate, p: &Pcfg) -> Value {
    let mut comps = Map::new();
    for (l, exprs) in c.components.iter().enumerate() {
        comps.insert(
            p.locations[l].clone(),
            Value::Array(
                exprs
                    .iter()
                    .map(|e| linexpr_to_value(e, &p.variables))
                    .collect(),
            ),
        );
    }
    let mut v = json!({
        "dimension": c.dimension,
        "components": comps,
        "levels": c.levels_by_id(p),
        "shift": q(&c.shift),
        "mode": c.mode.as_str(),
    });
    if c.is_premise_witness() {
        v["witness"] = json!(PREMISE_NOTE);
    }
    v
}

pub fn certificate_to_string(c: &Certificate, p: &Pcfg) -> String {
    pretty(&certificate_to_value(c, p))
}

pub fn load_certificate(path: impl AsRef<Path>, p: &Pcfg) -> IResult<Certificate> {
    certificate_from_str(&read(path.as_ref())?, p)
}

pub fn dump_certificate(c: &Certificate, p: &Pcfg, path: impl AsRef<Path>) -> IResult<()> {
    write(path.as_ref(), &certificate_to_string(c, p))
}

/// A constraint list for a single location, parsed against `p`'s variables.
pub fn parse_constraints(items: &[String], p: &Pcfg) -> IResult<Vec<LinConstraint<Rational>>> {
    let names = Names {
        locations: &p.locations,
        variables: &p.variables,
    };
    Ok(names.polyhedron(items, "$")?.constraints)
}
