//! Fixed-format MPS export and a reader for the subset it writes.
//!
//! Names are replaced by eight-character codes (`C0000001`, `R0000001`)
//! and the original names are returned as a [`NameMap`], which callers
//! write next to the MPS file. MPS minimises by convention, so the
//! objective row carries negated coefficients; [`parse_mps`] undoes this.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::MilpError;
use crate::problem::{MilpProblem, Sense, VarId};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NameMap {
    /// `(short, original)` for every column, in column order.
    pub columns: Vec<(String, String)>,
    /// `(short, original)` for every row, in row order.
    pub rows: Vec<(String, String)>,
}

impl NameMap {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (a, b) in &self.columns {
            let _ = writeln!(s, "C {a} {b}");
        }
        for (a, b) in &self.rows {
            let _ = writeln!(s, "R {a} {b}");
        }
        s
    }
}

fn col_code(j: usize) -> String {
    format!("C{:07}", j + 1)
}

fn row_code(i: usize) -> String {
    format!("R{:07}", i + 1)
}

/// Formats a number into at most 12 characters, keeping as many
/// significant digits as the field allows.
fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        return s;
    }
    let fixed = (0..=11).map(|p| format!("{v:.p$}"));
    let sci = (0..=10).map(|p| format!("{v:.p$e}"));
    fixed
        .chain(sci)
        .filter(|c| c.len() <= 12)
        .min_by(|a, b| {
            let ea = (a.parse::<f64>().unwrap_or(f64::INFINITY) - v).abs();
            let eb = (b.parse::<f64>().unwrap_or(f64::INFINITY) - v).abs();
            ea.total_cmp(&eb)
        })
        .unwrap_or_else(|| format!("{v:.0e}"))
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str) {
    let _ = writeln!(out, " {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}");
}

pub fn export_mps(problem: &MilpProblem) -> (String, NameMap) {
    let mut map = NameMap::default();
    let mut out = String::new();
    let _ = writeln!(out, "* objective negated: the model maximises");
    if problem.objective_constant != 0.0 {
        let _ = writeln!(out, "* objective constant {}", problem.objective_constant);
    }
    let name: String = problem.name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
    let _ = writeln!(out, "NAME          {}", if name.is_empty() { "MODEL" } else { &name });
    let _ = writeln!(out, "ROWS");
    let _ = writeln!(out, " N  OBJ");
    for (i, c) in problem.constraints.iter().enumerate() {
        let code = row_code(i);
        let t = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {t}  {code}");
        map.rows.push((code, c.name.clone()));
    }

    // column-wise coefficients
    let n = problem.num_vars();
    let mut cols: Vec<Vec<(String, f64)>> = vec![Vec::new(); n];
    for (v, a) in problem.objective_dense().into_iter().enumerate() {
        if a != 0.0 {
            cols[v].push(("OBJ".to_string(), -a));
        }
    }
    for (i, c) in problem.constraints.iter().enumerate() {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for &(v, a) in &c.coeffs {
            match merged.iter_mut().find(|(j, _)| *j == v.0) {
                Some(e) => e.1 += a,
                None => merged.push((v.0, a)),
            }
        }
        for (j, a) in merged {
            if a != 0.0 {
                cols[j].push((row_code(i), a));
            }
        }
    }

    let _ = writeln!(out, "COLUMNS");
    let mut in_int = false;
    let mut markers = 0;
    for (j, var) in problem.variables.iter().enumerate() {
        let code = col_code(j);
        map.columns.push((code.clone(), var.name.clone()));
        if var.integer != in_int {
            let tag = if var.integer { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    M{markers:07}  'MARKER'                 {tag}");
            markers += 1;
            in_int = var.integer;
        }
        if cols[j].is_empty() {
            line(&mut out, "", &code, "OBJ", "0");
        }
        for (r, a) in &cols[j] {
            line(&mut out, "", &code, r, &num(*a));
        }
    }
    if in_int {
        let _ = writeln!(out, "    M{markers:07}  'MARKER'                 'INTEND'");
    }

    let _ = writeln!(out, "RHS");
    for (i, c) in problem.constraints.iter().enumerate() {
        if c.rhs != 0.0 {
            line(&mut out, "", "RHS", &row_code(i), &num(c.rhs));
        }
    }

    let _ = writeln!(out, "BOUNDS");
    for (j, v) in problem.variables.iter().enumerate() {
        let code = col_code(j);
        let (l, h) = (v.lower, v.upper);
        if l == h {
            line(&mut out, "FX", "BND", &code, &num(l));
            continue;
        }
        match (l.is_finite(), h.is_finite()) {
            (false, false) => line(&mut out, "FR", "BND", &code, ""),
            (false, true) => {
                line(&mut out, "MI", "BND", &code, "");
                line(&mut out, "UP", "BND", &code, &num(h));
            }
            (true, fin_h) => {
                if l != 0.0 || v.integer {
                    line(&mut out, "LO", "BND", &code, &num(l));
                }
                if fin_h {
                    line(&mut out, "UP", "BND", &code, &num(h));
                } else if v.integer {
                    line(&mut out, "PL", "BND", &code, "");
                }
            }
        }
    }
    let _ = writeln!(out, "ENDATA");
    (out, map)
}

fn perr(line: usize, msg: impl Into<String>) -> MilpError {
    MilpError::Parse { line, msg: msg.into() }
}

fn pnum(line: usize, s: &str) -> Result<f64, MilpError> {
    s.parse::<f64>().map_err(|_| perr(line, format!("bad number {s:?}")))
}

/// Reads MPS text as written by [`export_mps`]. Names are the codes in the
/// file; the objective is negated back to maximisation form.
pub fn parse_mps(text: &str) -> Result<MilpProblem, MilpError> {
    #[derive(PartialEq)]
    enum Sec {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
    }
    let mut p = MilpProblem::new("");
    let mut sec = Sec::None;
    let mut obj_row: Option<String> = None;
    let mut rows: HashMap<String, usize> = HashMap::new();
    let mut cols: HashMap<String, VarId> = HashMap::new();
    let mut integer = false;
    let mut bounded: Vec<bool> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.starts_with('*') || raw.trim().is_empty() {
            if let Some(c) = raw.strip_prefix("* objective constant ") {
                p.objective_constant = pnum(ln, c.trim())?;
            }
            continue;
        }
        if !raw.starts_with(' ') {
            let mut it = raw.split_whitespace();
            match it.next() {
                Some("NAME") => p.name = it.next().unwrap_or("").to_string(),
                Some("ROWS") => sec = Sec::Rows,
                Some("COLUMNS") => sec = Sec::Columns,
                Some("RHS") => sec = Sec::Rhs,
                Some("BOUNDS") => sec = Sec::Bounds,
                Some("ENDATA") => break,
                Some(s) => return Err(perr(ln, format!("unknown section {s}"))),
                None => {}
            }
            continue;
        }
        let f: Vec<&str> = raw.split_whitespace().collect();
        match sec {
            Sec::None => return Err(perr(ln, "data before any section")),
            Sec::Rows => {
                if f.len() != 2 {
                    return Err(perr(ln, "ROWS entry needs type and name"));
                }
                let sense = match f[0] {
                    "N" => {
                        obj_row = Some(f[1].to_string());
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(perr(ln, format!("unknown row type {t}"))),
                };
                let id = p.add_constraint(f[1], Vec::new(), sense, 0.0);
                rows.insert(f[1].to_string(), id.0);
            }
            Sec::Columns => {
                if f.len() >= 3 && f[1] == "'MARKER'" {
                    integer = match f[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        m => return Err(perr(ln, format!("unknown marker {m}"))),
                    };
                    continue;
                }
                if f.len() != 3 && f.len() != 5 {
                    return Err(perr(ln, "COLUMNS entry needs 3 or 5 fields"));
                }
                let v = match cols.get(f[0]) {
                    Some(&v) => v,
                    None => {
                        let (l, h) = if integer { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
                        let v = p.add_var(f[0], l, h, integer);
                        cols.insert(f[0].to_string(), v);
                        bounded.push(false);
                        v
                    }
                };
                for pair in f[1..].chunks(2) {
                    let a = pnum(ln, pair[1])?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        if a != 0.0 {
                            p.objective.push((v, -a));
                        }
                    } else {
                        let &i = rows.get(pair[0]).ok_or_else(|| perr(ln, format!("unknown row {}", pair[0])))?;
                        p.constraints[i].coeffs.push((v, a));
                    }
                }
            }
            Sec::Rhs => {
                if f.len() != 3 && f.len() != 5 {
                    return Err(perr(ln, "RHS entry needs 3 or 5 fields"));
                }
                for pair in f[1..].chunks(2) {
                    let a = pnum(ln, pair[1])?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        p.objective_constant = -a;
                    } else {
                        let &i = rows.get(pair[0]).ok_or_else(|| perr(ln, format!("unknown row {}", pair[0])))?;
                        p.constraints[i].rhs = a;
                    }
                }
            }
            Sec::Bounds => {
                if f.len() < 3 {
                    return Err(perr(ln, "BOUNDS entry too short"));
                }
                let &v = cols.get(f[2]).ok_or_else(|| perr(ln, format!("unknown column {}", f[2])))?;
                let val = if f.len() > 3 { Some(pnum(ln, f[3])?) } else { None };
                let need = |x: Option<f64>| x.ok_or_else(|| perr(ln, "bound value missing"));
                let var = &mut p.variables[v.0];
                if !bounded[v.0] && var.integer {
                    // explicit bounds replace the implied binary domain
                    var.upper = f64::INFINITY;
                }
                bounded[v.0] = true;
                match f[0] {
                    "UP" => var.upper = need(val)?,
                    "LO" => var.lower = need(val)?,
                    "FX" => {
                        let x = need(val)?;
                        var.lower = x;
                        var.upper = x;
                    }
                    "FR" => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    "MI" => var.lower = f64::NEG_INFINITY,
                    "PL" => var.upper = f64::INFINITY,
                    "BV" => {
                        var.lower = 0.0;
                        var.upper = 1.0;
                        var.integer = true;
                    }
                    t => return Err(perr(ln, format!("unknown bound type {t}"))),
                }
            }
        }
    }
    Ok(p)
}

/// A solution read back from an external solver, re-checked against the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub row_violation: f64,
    pub integrality_violation: f64,
}

impl ImportedSolution {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.row_violation <= tol && self.integrality_violation <= tol
    }
}

/// Reads `<name> <value>` lines, where `name` is either the original
/// variable name or its MPS code. Unlisted variables default to 0.
pub fn import_solution(problem: &MilpProblem, map: &NameMap, text: &str) -> Result<ImportedSolution, MilpError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (j, v) in problem.variables.iter().enumerate() {
        index.insert(v.name.as_str(), j);
    }
    for (j, (code, _)) in map.columns.iter().enumerate() {
        index.insert(code.as_str(), j);
    }
    let mut values = vec![0.0; problem.num_vars()];
    for (ln, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('*') {
            continue;
        }
        let mut it = t.split_whitespace();
        let (Some(name), Some(val)) = (it.next(), it.next()) else {
            return Err(perr(ln + 1, "expected `<name> <value>`"));
        };
        let &j = index.get(name).ok_or_else(|| MilpError::UnknownVariable(name.to_string()))?;
        values[j] = pnum(ln + 1, val)?;
    }
    let (row_violation, integrality_violation) = problem.max_violation(&values);
    Ok(ImportedSolution {
        objective: problem.evaluate(&values),
        values,
        row_violation,
        integrality_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_fits_field() {
        for v in [1.0 / 3.0, 1e-17, -123456789.123, 100000.0, 0.3] {
            let s = num(v);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - v).abs() <= 1e-9 * v.abs().max(1e-12), "{v} -> {s}");
        }
    }

    #[test]
    fn codes_are_eight_chars() {
        assert_eq!(col_code(0), "C0000001");
        assert_eq!(row_code(41), "R0000042");
    }
}
