use std::fmt::Write as _;

use super::text::{header_count, lines};
use crate::error::{Error, Result};
use crate::model::Fsc;

/// Controller text: `fsc v1`, `nodes K`, optional `observations Z` and
/// `actions A`, `init n`, then `act n z a p` for every positive action
/// probability and `mem n z n'` for every node and observation.
pub fn serialize_fsc(fsc: &Fsc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "fsc v1");
    let _ = writeln!(out, "nodes {}", fsc.num_nodes());
    let _ = writeln!(out, "observations {}", fsc.num_observations());
    let _ = writeln!(out, "actions {}", fsc.num_actions());
    let _ = writeln!(out, "init {}", fsc.initial_node());
    for n in 0..fsc.num_nodes() {
        for z in 0..fsc.num_observations() {
            for (a, &p) in fsc.action_distribution(n, z).iter().enumerate() {
                if p != 0.0 {
                    let _ = writeln!(out, "act {n} {z} {a} {p}");
                }
            }
        }
    }
    for n in 0..fsc.num_nodes() {
        for z in 0..fsc.num_observations() {
            let _ = writeln!(out, "mem {n} {z} {}", fsc.next_node(n, z));
        }
    }
    out
}

pub fn parse_fsc(text: &str) -> Result<Fsc> {
    let lines = lines(text);
    let mut it = lines.iter().peekable();
    let header = it
        .next()
        .ok_or_else(|| Error::parse(1, 1, "empty document, expected `fsc v1`"))?;
    if header.keyword() != "fsc" {
        return Err(header.error(1, "expected header `fsc v1`"));
    }
    header.expect_fields(1, "fsc v1")?;
    if header.tokens[1].text != "v1" {
        return Err(header.error(
            header.column(1),
            format!("unsupported version `{}`", header.tokens[1].text),
        ));
    }
    let k = header_count(it.next(), "nodes")?;
    if k == 0 {
        return Err(Error::parse(
            lines[1].number,
            lines[1].column(1),
            "a controller needs at least one node",
        ));
    }
    let mut declared = |key: &str| -> Result<Option<usize>> {
        match it.peek() {
            Some(l) if l.keyword() == key => header_count(it.next(), key).map(Some),
            _ => Ok(None),
        }
    };
    let nz = declared("observations")?;
    let na = declared("actions")?;
    let bound = |d: Option<usize>| d.unwrap_or(usize::MAX);
    let mut init = None;
    let mut acts = Vec::new();
    let mut mems = Vec::new();
    for line in it {
        match line.keyword() {
            "init" => {
                line.expect_fields(1, "init n")?;
                if init.is_some() {
                    return Err(line.error(1, "initial node given twice"));
                }
                init = Some(line.index(1, "node", k)?);
            }
            "act" => {
                line.expect_fields(4, "act n z a p")?;
                let n = line.index(1, "node", k)?;
                let z = line.index(2, "observation", bound(nz))?;
                let a = line.index(3, "action", bound(na))?;
                let p: f64 = line.field(4, "probability")?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(line.error(line.column(4), "action probability must lie in (0, 1]"));
                }
                acts.push((line.number, n, z, a, p));
            }
            "mem" => {
                line.expect_fields(3, "mem n z n'")?;
                let n = line.index(1, "node", k)?;
                let z = line.index(2, "observation", bound(nz))?;
                let m = line.index(3, "node", k)?;
                mems.push((line.number, n, z, m));
            }
            other => return Err(line.error(line.column(0), format!("unknown directive `{other}`"))),
        }
    }
    let init = init.ok_or_else(|| Error::parse(0, 0, "missing `init n`"))?;
    let nz = nz.unwrap_or_else(|| {
        acts.iter()
            .map(|a| a.2 + 1)
            .chain(mems.iter().map(|m| m.2 + 1))
            .max()
            .unwrap_or(0)
    });
    let na = na.unwrap_or_else(|| acts.iter().map(|a| a.3 + 1).max().unwrap_or(0));
    let mut action_map = vec![vec![vec![0.0; na]; nz]; k];
    let mut memory_map = vec![vec![usize::MAX; nz]; k];
    for &(line, n, z, a, p) in &acts {
        let slot = &mut action_map[n][z][a];
        if *slot != 0.0 {
            return Err(Error::parse(
                line,
                1,
                format!("probability of action {a} at ({n}, {z}) given twice"),
            ));
        }
        *slot = p;
    }
    for &(line, n, z, m) in &mems {
        if std::mem::replace(&mut memory_map[n][z], m) != usize::MAX {
            return Err(Error::parse(
                line,
                1,
                format!("memory update at ({n}, {z}) given twice"),
            ));
        }
    }
    for n in 0..k {
        for z in 0..nz {
            if memory_map[n][z] == usize::MAX {
                return Err(Error::parse(
                    0,
                    0,
                    format!("no `mem` line for node {n}, observation {z}"),
                ));
            }
        }
    }
    Fsc::new(init, action_map, memory_map).map_err(|e| Error::parse(0, 0, e.to_string()))
}
