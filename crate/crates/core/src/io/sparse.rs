//! Import of explicit sparse-matrix dumps in the style of PRISM `.tra`
//! files: a header `num_states num_choices num_transitions` followed by
//! `src choice dst prob` lines, where `prob` is a number or an interval
//! `[lo,hi]`. Observations come as `s z` lines and costs as `s a c` lines.

use super::text::{lines, Line};
use crate::error::{Error, Result};
use crate::model::{Interval, PomdpBuilder, RobustPomdp};

fn probability(line: &Line<'_>, i: usize) -> Result<Interval> {
    let tok = line.tokens[i];
    let bad = || line.error(tok.column, format!("invalid probability `{}`", tok.text));
    let iv = if let Some(inner) = tok.text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
        Interval::new(
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        )
    } else {
        Interval::point(tok.text.parse().map_err(|_| bad())?)
    };
    if !iv.is_well_formed() {
        return Err(line.error(tok.column, "interval must satisfy 0 < lo <= hi <= 1"));
    }
    Ok(iv)
}

pub struct ExplicitDump<'a> {
    pub transitions: &'a str,
    pub observations: &'a str,
    pub costs: Option<&'a str>,
    pub goals: &'a [usize],
    pub initial: &'a [(usize, f64)],
}

pub fn import_explicit(dump: &ExplicitDump<'_>) -> Result<RobustPomdp> {
    let tra = lines(dump.transitions);
    let head = tra.first().ok_or_else(|| Error::parse(1, 1, "empty transition dump"))?;
    head.expect_fields(2, "num_states num_choices num_transitions")?;
    let ns: usize = head.field(0, "state count")?;
    let mut rows = Vec::new();
    let mut na = 0;
    for line in &tra[1..] {
        if line.tokens.len() != 4 {
            return Err(line.error(1, "expected `src choice dst prob`"));
        }
        let s = line.index(0, "state", ns)?;
        let a: usize = line.field(1, "choice")?;
        let t = line.index(2, "state", ns)?;
        rows.push((line.number, s, a, t, probability(line, 3)?));
        na = na.max(a + 1);
    }
    let obs = lines(dump.observations);
    let mut pairs = Vec::new();
    let mut nz = 0;
    for line in &obs {
        if line.tokens.len() != 2 {
            return Err(line.error(1, "expected `s z`"));
        }
        let s = line.index(0, "state", ns)?;
        let z: usize = line.field(1, "observation")?;
        nz = nz.max(z + 1);
        pairs.push((s, z));
    }
    let mut b = PomdpBuilder::<Interval>::new(ns, na.max(1), nz.max(1));
    for (s, z) in pairs {
        b.observation(s, z)?;
    }
    for (number, s, a, t, iv) in rows {
        b.transition(s, a, t, iv)
            .map_err(|e| Error::parse(number, 1, e.to_string()))?;
    }
    if let Some(costs) = dump.costs {
        for line in lines(costs) {
            if line.tokens.len() != 3 {
                return Err(line.error(1, "expected `s a c`"));
            }
            let s = line.index(0, "state", ns)?;
            let a = line.index(1, "action", na)?;
            let c: f64 = line.field(2, "cost")?;
            b.cost(s, a, c).map_err(|e| line.error(1, e.to_string()))?;
        }
    }
    for &g in dump.goals {
        b.goal(g)?;
    }
    for &(s, p) in dump.initial {
        b.initial(s, p)?;
    }
    let model = b.build()?;
    model.validate().into_result()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imports_a_small_dump() {
        let dump = ExplicitDump {
            transitions: "2 1 2\n0 0 0 [0.4,0.6]\n0 0 1 [0.4,0.6]\n",
            observations: "0 0\n1 0\n",
            costs: Some("0 0 1\n"),
            goals: &[1],
            initial: &[(0, 1.0)],
        };
        let m = import_explicit(&dump).unwrap();
        assert_eq!(m.row(0, 0).len(), 2);
        assert_eq!(m.cost(0, 0), 1.0);
        assert!(m.is_goal(1));
    }
}
