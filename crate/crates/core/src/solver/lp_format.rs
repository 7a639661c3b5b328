//! Plain-text LP dump of a [`LinearModel`], a subset of the CPLEX LP format.
//!
//! The writer emits one statement per line and lists every variable in the
//! `Bounds` section so the reader can restore declaration order exactly.
//! Coefficients use the shortest decimal that round-trips, so
//! `read(write(m)) == m` holds bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Cmp, Constraint, LinExpr, LinearModel, Sense, Var, VarDef, VarKind};
use crate::error::{Error, Result};

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn write_expr(out: &mut String, e: &LinExpr, names: &[VarDef]) {
    let mut first = true;
    for &(v, c) in &e.terms {
        let sign = if c < 0.0 || (c == 0.0 && c.is_sign_negative()) { "-" } else { "+" };
        if first && sign == "+" {
            let _ = write!(out, "{} {}", fmt_num(c.abs()), names[v.0].name);
        } else {
            let _ = write!(out, "{}{} {} {}", if first { "" } else { " " }, sign, fmt_num(c.abs()), names[v.0].name);
        }
        first = false;
    }
    if e.constant != 0.0 || first {
        let c = e.constant;
        let sign = if c < 0.0 { "-" } else { "+" };
        let _ = write!(out, "{}{} {}", if first { "" } else { " " }, sign, fmt_num(c.abs()));
    }
}

/// Renders the model as LP text.
pub fn write_lp(model: &LinearModel) -> String {
    let mut s = String::new();
    s.push_str(match model.sense {
        Sense::Maximize => "Maximize\n",
        Sense::Minimize => "Minimize\n",
    });
    s.push_str(" obj: ");
    write_expr(&mut s, &model.objective, &model.vars);
    s.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(s, " {}: ", c.name);
        write_expr(&mut s, &c.lhs, &model.vars);
        let _ = writeln!(s, " {} {}", c.cmp, fmt_num(c.rhs));
    }
    s.push_str("Bounds\n");
    for v in &model.vars {
        let _ = writeln!(s, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
    }
    let bins: Vec<&str> = model
        .vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        s.push_str("Binaries\n");
        for b in bins {
            let _ = writeln!(s, " {b}");
        }
    }
    s.push_str("End\n");
    s
}

fn lp_err(line: usize, message: impl Into<String>) -> Error {
    Error::LpFormat {
        line,
        message: message.into(),
    }
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| lp_err(line, format!("bad number '{tok}'"))),
    }
}

fn parse_expr(tokens: &[&str], vars: &HashMap<String, Var>, line: usize) -> Result<LinExpr> {
    let mut e = LinExpr::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut sign = 1.0;
        if tokens[i] == "+" || tokens[i] == "-" {
            if tokens[i] == "-" {
                sign = -1.0;
            }
            i += 1;
        }
        let tok = *tokens.get(i).ok_or_else(|| lp_err(line, "dangling sign"))?;
        if let Ok(c) = parse_num(tok, line) {
            match tokens.get(i + 1).and_then(|n| vars.get(*n)) {
                Some(&v) => {
                    e.terms.push((v, sign * c));
                    i += 2;
                }
                None => {
                    e.constant += sign * c;
                    i += 1;
                }
            }
        } else {
            let v = *vars
                .get(tok)
                .ok_or_else(|| lp_err(line, format!("unknown variable '{tok}'")))?;
            e.terms.push((v, sign));
            i += 1;
        }
    }
    Ok(e)
}

#[derive(PartialEq)]
enum Section {
    Start,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

/// Parses text produced by [`write_lp`].
pub fn read_lp(text: &str) -> Result<LinearModel> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('\\'))
        .collect();

    // Bounds come after constraints in the text but define the variables, so
    // collect them first.
    let mut model = LinearModel::new(Sense::Maximize);
    let mut vars: HashMap<String, Var> = HashMap::new();
    let mut section = Section::Start;
    for &(ln, l) in &lines {
        match l.to_ascii_lowercase().as_str() {
            "bounds" => section = Section::Bounds,
            "binaries" | "binary" => section = Section::Binaries,
            "end" => section = Section::End,
            "subject to" | "maximize" | "minimize" => section = Section::Start,
            _ if section == Section::Bounds => {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 5 || t[1] != "<=" || t[3] != "<=" {
                    return Err(lp_err(ln, "expected 'lower <= name <= upper'"));
                }
                if vars.contains_key(t[2]) {
                    return Err(lp_err(ln, format!("variable '{}' declared twice", t[2])));
                }
                let v = model.add_variable(t[2], VarKind::Continuous, parse_num(t[0], ln)?, parse_num(t[4], ln)?);
                vars.insert(t[2].to_string(), v);
            }
            _ if section == Section::Binaries => {
                for name in l.split_whitespace() {
                    let v = *vars
                        .get(name)
                        .ok_or_else(|| lp_err(ln, format!("unknown binary '{name}'")))?;
                    model.vars[v.0].kind = VarKind::Binary;
                }
            }
            _ => {}
        }
    }

    section = Section::Start;
    for &(ln, l) in &lines {
        match l.to_ascii_lowercase().as_str() {
            "maximize" | "maximise" | "max" => {
                model.sense = Sense::Maximize;
                section = Section::Objective;
                continue;
            }
            "minimize" | "minimise" | "min" => {
                model.sense = Sense::Minimize;
                section = Section::Objective;
                continue;
            }
            "subject to" | "st" | "s.t." => {
                section = Section::Constraints;
                continue;
            }
            "bounds" | "binaries" | "binary" | "end" => {
                section = Section::End;
                continue;
            }
            _ if section == Section::End => continue,
            _ => {}
        }
        let (name, body) = match l.split_once(':') {
            Some((n, b)) => (n.trim(), b.trim()),
            None => return Err(lp_err(ln, "expected 'name: expression'")),
        };
        let tokens: Vec<&str> = body.split_whitespace().collect();
        match section {
            Section::Objective => model.objective = parse_expr(&tokens, &vars, ln)?,
            Section::Constraints => {
                let pos = tokens
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "=" | "=<" | "=>"))
                    .ok_or_else(|| lp_err(ln, "constraint without comparison"))?;
                let cmp = match tokens[pos] {
                    "<=" | "=<" => Cmp::Le,
                    ">=" | "=>" => Cmp::Ge,
                    _ => Cmp::Eq,
                };
                if pos + 2 != tokens.len() {
                    return Err(lp_err(ln, "right-hand side must be a single number"));
                }
                let lhs = parse_expr(&tokens[..pos], &vars, ln)?;
                if lhs.constant != 0.0 {
                    return Err(lp_err(ln, "constant on the left-hand side"));
                }
                model.constraints.push(Constraint {
                    name: name.to_string(),
                    lhs,
                    cmp,
                    rhs: parse_num(tokens[pos + 1], ln)?,
                });
            }
            _ => return Err(lp_err(ln, "statement outside a section")),
        }
    }
    Ok(model)
}
