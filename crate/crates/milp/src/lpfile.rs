//! Plain-text dump/restore in an LP-style layout:
//!
//! ```text
//! \ mesbench-milp lp v1
//! Minimize
//!  obj: + 1 x - 1 y + 5
//! Subject To
//!  r0: + 1 x + 2 y <= 4
//! Bounds
//!  0 <= x <= 10
//!  -inf <= y <= +inf
//! Generals
//!  x
//! End
//! ```
//!
//! Every term is `sign coefficient name`; the objective may end with a bare
//! `sign constant`. Every variable gets exactly one bounds line. Numbers are
//! written in shortest round-trip form, so dump -> restore is exact.

use std::fmt::Write as _;

use crate::error::MilpError;
use crate::problem::{LpProblem, MilpProblem, RowSense};

const HEADER: &str = "\\ mesbench-milp lp v1";

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    for (name, v) in terms {
        let sign = if v.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", fmt_num(v.abs()));
    }
}

pub fn write_lp(p: &MilpProblem) -> String {
    let lp = &p.base;
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    out.push_str("Minimize\n obj:");
    write_terms(&mut out, lp.c.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (lp.var_name(j), c)));
    if lp.obj_offset != 0.0 {
        let sign = if lp.obj_offset < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {}", fmt_num(lp.obj_offset.abs()));
    }
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, " r{i}:");
        write_terms(&mut out, row.coefs.iter().map(|&(j, v)| (lp.var_name(j), v)));
        let _ = writeln!(out, " {} {}", row.sense, fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let _ = writeln!(out, " {} <= {} <= {}", fmt_num(lo), lp.var_name(j), fmt_num(hi));
    }
    out.push_str("Generals\n");
    for &j in &p.int_vars {
        let _ = writeln!(out, " {}", lp.var_name(j));
    }
    out.push_str("End\n");
    out
}

#[derive(PartialEq)]
enum Section {
    Start,
    Objective,
    Rows,
    Bounds,
    Generals,
    End,
}

fn parse_num(tok: &str, line: usize) -> Result<f64, MilpError> {
    match tok {
        "+inf" | "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| MilpError::Parse { line, msg: format!("bad number `{tok}`") }),
    }
}

/// Parses `sign coef name` terms; returns the terms and a trailing bare constant.
fn parse_terms(toks: &[&str], line: usize) -> Result<(Vec<(String, f64)>, f64), MilpError> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut k = 0;
    while k < toks.len() {
        let sign = match toks[k] {
            "+" => 1.0,
            "-" => -1.0,
            t => return Err(MilpError::Parse { line, msg: format!("expected sign, found `{t}`") }),
        };
        let Some(num) = toks.get(k + 1) else {
            return Err(MilpError::Parse { line, msg: "dangling sign".into() });
        };
        let v = sign * parse_num(num, line)?;
        match toks.get(k + 2) {
            Some(&name) if name != "+" && name != "-" => {
                terms.push((name.to_string(), v));
                k += 3;
            }
            _ => {
                constant += v;
                k += 2;
            }
        }
    }
    Ok((terms, constant))
}

pub fn read_lp(text: &str) -> Result<MilpProblem, MilpError> {
    let mut section = Section::Start;
    let mut obj_terms: Vec<(String, f64)> = Vec::new();
    let mut offset = 0.0;
    let mut rows: Vec<(Vec<(String, f64)>, RowSense, f64)> = Vec::new();
    let mut bounds: Vec<(String, f64, f64)> = Vec::new();
    let mut generals: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('\\') {
            continue;
        }
        match s {
            "Minimize" => {
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Rows;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Generals" => {
                section = Section::Generals;
                continue;
            }
            "End" => {
                section = Section::End;
                continue;
            }
            _ => {}
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        match section {
            Section::Objective => {
                let body = toks.strip_prefix(&["obj:"]).unwrap_or(&toks);
                let (terms, c) = parse_terms(body, line)?;
                obj_terms.extend(terms);
                offset += c;
            }
            Section::Rows => {
                let body = if toks.first().is_some_and(|t| t.ends_with(':')) { &toks[1..] } else { &toks[..] };
                if body.len() < 2 {
                    return Err(MilpError::Parse { line, msg: "row needs a sense and rhs".into() });
                }
                let sense = match body[body.len() - 2] {
                    "<=" => RowSense::Le,
                    ">=" => RowSense::Ge,
                    "=" => RowSense::Eq,
                    t => return Err(MilpError::Parse { line, msg: format!("bad sense `{t}`") }),
                };
                let rhs = parse_num(body[body.len() - 1], line)?;
                let (terms, c) = parse_terms(&body[..body.len() - 2], line)?;
                if c != 0.0 {
                    return Err(MilpError::Parse { line, msg: "constant term in a row".into() });
                }
                rows.push((terms, sense, rhs));
            }
            Section::Bounds => {
                if toks.len() != 5 || toks[1] != "<=" || toks[3] != "<=" {
                    return Err(MilpError::Parse { line, msg: "bounds line must be `lo <= name <= hi`".into() });
                }
                bounds.push((toks[2].to_string(), parse_num(toks[0], line)?, parse_num(toks[4], line)?));
            }
            Section::Generals => generals.extend(toks.iter().map(|t| t.to_string())),
            Section::Start | Section::End => {
                return Err(MilpError::Parse { line, msg: format!("unexpected `{s}`") });
            }
        }
    }
    if section != Section::End {
        return Err(MilpError::Parse { line: text.lines().count(), msg: "missing End".into() });
    }

    let mut lp = LpProblem::new();
    let mut index = std::collections::HashMap::new();
    for (name, lo, hi) in &bounds {
        if index.contains_key(name) {
            return Err(MilpError::Parse { line: 0, msg: format!("variable `{name}` bounded twice") });
        }
        let j = lp.add_named_var(name.clone(), 0.0, *lo, *hi);
        index.insert(name.clone(), j);
    }
    let lookup = |name: &str| {
        index.get(name).copied().ok_or_else(|| MilpError::Parse { line: 0, msg: format!("unknown variable `{name}`") })
    };
    for (name, v) in obj_terms {
        lp.c[lookup(&name)?] += v;
    }
    lp.obj_offset = offset;
    for (terms, sense, rhs) in rows {
        let coefs = terms.iter().map(|(n, v)| lookup(n).map(|j| (j, *v))).collect::<Result<Vec<_>, _>>()?;
        lp.add_row(coefs, sense, rhs);
    }
    let mut p = MilpProblem::new(lp);
    for name in generals {
        let j = lookup(&name)?;
        p.int_vars.insert(j);
    }
    p.validate()?;
    Ok(p)
}
