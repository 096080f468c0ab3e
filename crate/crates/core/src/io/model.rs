use std::fmt::Write as _;

use super::text::{header_count, lines, Line};
use crate::error::{Error, Result};
use crate::model::{Interval, PomdpBuilder, RobustPomdp};

pub const MODEL_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub format_version: String,
    pub name: Option<String>,
    pub model: RobustPomdp,
}

impl ModelDocument {
    pub fn new(model: RobustPomdp) -> Self {
        ModelDocument {
            format_version: MODEL_VERSION.into(),
            name: None,
            model,
        }
    }
}

fn check_interval(line: &Line<'_>, lo: f64, hi: f64) -> Result<Interval> {
    let iv = Interval::new(lo, hi);
    if !(lo > 0.0) {
        return Err(line.error(
            line.column(4),
            format!("lower bound {lo} must be strictly positive; leave the transition out to give it probability 0"),
        ));
    }
    if !iv.is_well_formed() {
        return Err(line.error(
            line.column(4),
            format!("interval [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"),
        ));
    }
    Ok(iv)
}

/// Parses a model document without running the semantic validator; syntax
/// and index errors are still reported with their location.
pub fn parse_model_unchecked(text: &str) -> Result<ModelDocument> {
    let lines = lines(text);
    let mut it = lines.iter().peekable();
    let header = it
        .next()
        .ok_or_else(|| Error::parse(1, 1, "empty document, expected `rpomdp v1`"))?;
    if header.keyword() != "rpomdp" {
        return Err(header.error(1, "expected header `rpomdp v1`"));
    }
    header.expect_fields(1, "rpomdp v1")?;
    if header.tokens[1].text != MODEL_VERSION {
        return Err(header.error(
            header.column(1),
            format!("unsupported version `{}`", header.tokens[1].text),
        ));
    }
    let mut name = None;
    if let Some(l) = it.peek().filter(|l| l.keyword() == "name") {
        if l.tokens.len() < 2 {
            return Err(l.error(l.end + 1, "missing model name"));
        }
        name = Some(l.tokens[1..].iter().map(|t| t.text).collect::<Vec<_>>().join(" "));
        it.next();
    }
    let ns = header_count(it.next(), "states")?;
    let na = header_count(it.next(), "actions")?;
    let nz = header_count(it.next(), "observations")?;
    let mut b = PomdpBuilder::<Interval>::new(ns, na, nz);
    let mut seen_obs = vec![false; ns];
    let mut seen_cost = vec![vec![false; na]; ns];
    let mut seen_init = vec![false; ns];
    let mut seen_trans = std::collections::HashSet::new();
    for line in it {
        let at = |e: Error| match e {
            Error::Structure(m) => line.error(1, m),
            e => e,
        };
        match line.keyword() {
            "obs" => {
                line.expect_fields(2, "obs s z")?;
                let s = line.index(1, "state", ns)?;
                let z = line.index(2, "observation", nz)?;
                if std::mem::replace(&mut seen_obs[s], true) {
                    return Err(line.error(line.column(1), format!("observation of state {s} given twice")));
                }
                b.observation(s, z).map_err(at)?;
            }
            "trans" => {
                line.expect_fields(5, "trans s a s' lo hi")?;
                let s = line.index(1, "state", ns)?;
                let a = line.index(2, "action", na)?;
                let t = line.index(3, "state", ns)?;
                let lo: f64 = line.field(4, "probability")?;
                let hi: f64 = line.field(5, "probability")?;
                let iv = check_interval(line, lo, hi)?;
                if !seen_trans.insert((s, a, t)) {
                    return Err(line.error(line.column(1), format!("duplicate transition {s} {a} {t}")));
                }
                b.transition(s, a, t, iv).map_err(at)?;
            }
            "cost" => {
                line.expect_fields(3, "cost s a c")?;
                let s = line.index(1, "state", ns)?;
                let a = line.index(2, "action", na)?;
                let c: f64 = line.field(3, "cost")?;
                if !(c.is_finite() && c >= 0.0) {
                    return Err(line.error(line.column(3), "cost must be finite and nonnegative"));
                }
                if std::mem::replace(&mut seen_cost[s][a], true) {
                    return Err(line.error(line.column(1), format!("cost of ({s}, {a}) given twice")));
                }
                b.cost(s, a, c).map_err(at)?;
            }
            "goal" => {
                line.expect_fields(1, "goal s")?;
                let s = line.index(1, "state", ns)?;
                b.goal(s).map_err(at)?;
            }
            "init" => {
                line.expect_fields(2, "init s p")?;
                let s = line.index(1, "state", ns)?;
                let p: f64 = line.field(2, "probability")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(line.error(line.column(2), "initial probability must lie in [0, 1]"));
                }
                if std::mem::replace(&mut seen_init[s], true) {
                    return Err(line.error(line.column(1), format!("initial probability of state {s} given twice")));
                }
                b.initial(s, p).map_err(at)?;
            }
            other => {
                return Err(line.error(line.column(0), format!("unknown directive `{other}`")));
            }
        }
    }
    if let Some(s) = seen_obs.iter().position(|&x| !x) {
        return Err(Error::parse(0, 0, format!("state {s} has no `obs` line")));
    }
    Ok(ModelDocument {
        format_version: MODEL_VERSION.into(),
        name,
        model: b.build()?,
    })
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<ModelDocument> {
    let doc = parse_model_unchecked(text)?;
    doc.model.validate().into_result()?;
    Ok(doc)
}

/// Canonical text: declarations, then `obs` by state, `trans` by
/// `(s, a, s')`, nonzero `cost` by `(s, a)`, `goal` and nonzero `init` by
/// state. Numbers use the shortest representation that parses back to the
/// same value.
pub fn serialize_model(doc: &ModelDocument) -> String {
    let m = &doc.model;
    let mut out = String::new();
    let _ = writeln!(out, "rpomdp {}", doc.format_version);
    if let Some(name) = &doc.name {
        let _ = writeln!(out, "name {name}");
    }
    let _ = writeln!(out, "states {}", m.num_states());
    let _ = writeln!(out, "actions {}", m.num_actions());
    let _ = writeln!(out, "observations {}", m.num_observations());
    for s in 0..m.num_states() {
        let _ = writeln!(out, "obs {s} {}", m.observation(s));
    }
    for s in 0..m.num_states() {
        for a in 0..m.num_actions() {
            for (t, iv) in m.row(s, a) {
                let _ = writeln!(out, "trans {s} {a} {t} {} {}", iv.lo, iv.hi);
            }
        }
    }
    for s in 0..m.num_states() {
        for a in 0..m.num_actions() {
            let c = m.cost(s, a);
            if c != 0.0 {
                let _ = writeln!(out, "cost {s} {a} {c}");
            }
        }
    }
    for s in m.goals() {
        let _ = writeln!(out, "goal {s}");
    }
    for (s, &p) in m.initial_belief().iter().enumerate() {
        if p != 0.0 {
            let _ = writeln!(out, "init {s} {p}");
        }
    }
    out
}
