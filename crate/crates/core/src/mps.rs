//! Free-format MPS writer and a reader sufficient to load what the writer
//! emits (plus the common bound types).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{MilpModel, Relation};

const OBJ_ROW: &str = "obj";

/// 17 significant digits with a C-style exponent, e.g. `-1.2500000000000000e+02`.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.16e}");
    match s.split_once('e') {
        Some((mant, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            let sign = if e < 0 { '-' } else { '+' };
            format!("{mant}e{sign}{:02}", e.abs())
        }
        None => s,
    }
}

/// Serializes `model` as free-format MPS. Column order follows the model's
/// variable order and row order follows its row order.
pub fn write_mps(model: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", model.name);
    out.push_str("OBJSENSE\n    MAX\n");
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJ_ROW}");
    for row in &model.rows {
        let kind = match row.relation {
            Relation::Le => 'L',
            Relation::Eq => 'E',
            Relation::Ge => 'G',
        };
        let _ = writeln!(out, " {kind}  {}", row.name);
    }

    // Transpose the row-wise storage into per-column entry lists.
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_vars()];
    for (i, row) in model.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            columns[j].push((i, a));
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, var) in model.vars.iter().enumerate() {
        if var.integer != in_int {
            let tag = if var.integer { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    MARKER  'MARKER'  '{tag}'");
            in_int = var.integer;
        }
        let _ = writeln!(out, "    {}  {OBJ_ROW}  {}", var.name, format_number(model.objective[j]));
        for &(i, a) in &columns[j] {
            let _ = writeln!(out, "    {}  {}  {}", var.name, model.rows[i].name, format_number(a));
        }
    }
    if in_int {
        out.push_str("    MARKER  'MARKER'  'INTEND'\n");
    }

    out.push_str("RHS\n");
    for row in &model.rows {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "    RHS  {}  {}", row.name, format_number(row.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for var in &model.vars {
        if var.lower == var.upper {
            let _ = writeln!(out, " FX BND  {}  {}", var.name, format_number(var.lower));
            continue;
        }
        if var.lower == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND  {}", var.name);
        } else {
            let _ = writeln!(out, " LO BND  {}  {}", var.name, format_number(var.lower));
        }
        if var.upper == f64::INFINITY {
            let _ = writeln!(out, " PL BND  {}", var.name);
        } else {
            let _ = writeln!(out, " UP BND  {}  {}", var.name, format_number(var.upper));
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Mps {
        line,
        message: message.into(),
    })
}

fn number(line: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if !v.is_nan() => Ok(v),
        _ => err(line, format!("bad number '{tok}'")),
    }
}

/// Parses free-format MPS into a maximization model. `OBJSENSE MIN` models
/// are converted by negating the objective.
pub fn parse_mps(text: &str) -> Result<MilpModel> {
    let mut model = MilpModel::new("");
    let mut section = Section::Start;
    let mut minimize = false;
    let mut obj_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut in_int = false;
    let mut seen: std::collections::HashSet<(usize, usize)> = Default::default();
    let mut obj_seen: std::collections::HashSet<usize> = Default::default();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let header = !raw.starts_with(' ') && !raw.starts_with('\t');
        if header {
            section = match toks[0] {
                "NAME" => {
                    model.name = toks.get(1).copied().unwrap_or("").to_string();
                    Section::Name
                }
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        minimize = parse_sense(line, s)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "RANGES" => return err(line, "RANGES section is not supported"),
                "ENDATA" => Section::End,
                other => return err(line, format!("unknown section '{other}'")),
            };
            if section == Section::End {
                break;
            }
            continue;
        }
        match section {
            Section::Start | Section::Name | Section::End => {
                return err(line, "data line outside of a section");
            }
            Section::ObjSense => {
                minimize = parse_sense(line, toks[0])?;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return err(line, "ROWS entries need a type and a name");
                }
                let relation = match toks[0] {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => Relation::Le,
                    "G" => Relation::Ge,
                    "E" => Relation::Eq,
                    t => return err(line, format!("unknown row type '{t}'")),
                };
                if row_index.contains_key(toks[1]) || obj_row.as_deref() == Some(toks[1]) {
                    return err(line, format!("duplicate row '{}'", toks[1]));
                }
                row_index.insert(toks[1].to_string(), model.rows.len());
                model.add_row(toks[1], Vec::new(), relation, 0.0);
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        t => return err(line, format!("unknown marker {t}")),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return err(line, "COLUMNS entries need a name and one or two (row, value) pairs");
                }
                let col = match col_index.get(toks[0]) {
                    Some(&j) if j + 1 == model.n_vars() => j,
                    Some(_) => return err(line, format!("column '{}' is not contiguous", toks[0])),
                    None => {
                        let upper = f64::INFINITY;
                        let j = model.add_var(toks[0], 0.0, upper, in_int, 0.0);
                        col_index.insert(toks[0].to_string(), j);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let value = number(line, pair[1])?;
                    if obj_row.as_deref() == Some(pair[0]) {
                        if !obj_seen.insert(col) {
                            return err(line, "duplicate objective entry");
                        }
                        model.objective[col] = value;
                        continue;
                    }
                    let Some(&i) = row_index.get(pair[0]) else {
                        return err(line, format!("unknown row '{}'", pair[0]));
                    };
                    if !seen.insert((i, col)) {
                        return err(line, format!("duplicate entry for row '{}'", pair[0]));
                    }
                    model.rows[i].coeffs.push((col, value));
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return err(line, "RHS entries need a set name and (row, value) pairs");
                }
                for pair in toks[1..].chunks(2) {
                    let value = number(line, pair[1])?;
                    if obj_row.as_deref() == Some(pair[0]) {
                        return err(line, "objective constants are not supported");
                    }
                    let Some(&i) = row_index.get(pair[0]) else {
                        return err(line, format!("unknown row '{}'", pair[0]));
                    };
                    model.rows[i].rhs = value;
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return err(line, "BOUNDS entries need a type, set name and column");
                }
                let Some(&j) = col_index.get(toks[2]) else {
                    return err(line, format!("unknown column '{}'", toks[2]));
                };
                let value = match toks[0] {
                    "FR" | "MI" | "PL" | "BV" => {
                        if toks.len() > 4 {
                            return err(line, "too many fields");
                        }
                        None
                    }
                    _ => {
                        if toks.len() != 4 {
                            return err(line, format!("{} bound needs a value", toks[0]));
                        }
                        Some(number(line, toks[3])?)
                    }
                };
                let var = &mut model.vars[j];
                match (toks[0], value) {
                    ("UP", Some(v)) => var.upper = v,
                    ("LO", Some(v)) => var.lower = v,
                    ("FX", Some(v)) => {
                        var.lower = v;
                        var.upper = v;
                    }
                    ("FR", _) => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    ("MI", _) => var.lower = f64::NEG_INFINITY,
                    ("PL", _) => var.upper = f64::INFINITY,
                    ("BV", _) => {
                        var.lower = 0.0;
                        var.upper = 1.0;
                        var.integer = true;
                    }
                    ("LI", Some(v)) => {
                        var.lower = v;
                        var.integer = true;
                    }
                    ("UI", Some(v)) => {
                        var.upper = v;
                        var.integer = true;
                    }
                    (t, _) => return err(line, format!("unknown bound type '{t}'")),
                }
            }
        }
    }
    if section != Section::End {
        return err(text.lines().count(), "missing ENDATA");
    }
    if minimize {
        model.objective.iter_mut().for_each(|c| *c = -*c);
    }
    for row in &mut model.rows {
        row.coeffs.sort_by_key(|&(j, _)| j);
    }
    Ok(model)
}

fn parse_sense(line: usize, tok: &str) -> Result<bool> {
    match tok {
        "MAX" | "MAXIMIZE" => Ok(false),
        "MIN" | "MINIMIZE" => Ok(true),
        t => err(line, format!("unknown objective sense '{t}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(1.0), "1.0000000000000000e+00");
        assert_eq!(format_number(-0.125), "-1.2500000000000000e-01");
        assert_eq!(format_number(4096.0), "4.0960000000000000e+03");
        assert_eq!(format_number(1e300).parse::<f64>().unwrap(), 1e300);
        assert_eq!(format_number(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_mps("").is_err());
        assert!(parse_mps("ROWS\n N obj\n G r\nCOLUMNS\n    x  q  1\nENDATA\n").is_err());
        assert!(parse_mps("ROWS\n N obj\nCOLUMNS\n    x  obj  nan\nENDATA\n").is_err());
        assert!(parse_mps("RANGES\nENDATA\n").is_err());
        assert!(parse_mps("ROWS\n X r\nENDATA\n").is_err());
        assert!(parse_mps(" stray\nENDATA\n").is_err());
        let e = parse_mps("ROWS\n N obj\nBOUNDS\n UP BND missing 1\nENDATA\n").unwrap_err();
        assert!(matches!(e, Error::Mps { line: 4, .. }));
    }

    #[test]
    fn min_sense_is_negated() {
        let text = "NAME t\nOBJSENSE MIN\nROWS\n N obj\nCOLUMNS\n    x  obj  2\nBOUNDS\n UP BND x 1\nENDATA\n";
        let m = parse_mps(text).unwrap();
        assert_eq!(m.objective, vec![-2.0]);
        assert_eq!(m.vars[0].upper, 1.0);
    }
}
