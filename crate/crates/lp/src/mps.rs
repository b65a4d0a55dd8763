//! Fixed-format MPS export (and a reader for round trips).
//!
//! Fixed MPS caps identifiers at eight characters. By default every row and
//! column is renamed to `R0000001` / `C0000001` style names and the mapping
//! back to the program's own names travels alongside the text in
//! [`MpsDocument::name_map`]. Integer columns are wrapped in
//! `MARKER INTORG/INTEND` pairs and always receive explicit bounds, since
//! some readers default unbounded integer columns to binaries.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{LinearProgram, LpError, Relation, VarId};

const FIELD_WIDTH: usize = 8;
const OBJECTIVE_ROW: &str = "COST";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpsOptions {
    /// Replace every identifier with a deterministic short name.
    pub mangle_names: bool,
    pub problem_name: String,
}

impl Default for MpsOptions {
    fn default() -> Self {
        Self {
            mangle_names: true,
            problem_name: "ORPOOL".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsDocument {
    pub text: String,
    /// `(mps name, original name)` for every row and column, in file order.
    pub name_map: Vec<(String, String)>,
}

impl MpsDocument {
    /// The name map as `mps_name original_name` lines.
    pub fn name_map_text(&self) -> String {
        let mut out = String::new();
        for (short, long) in &self.name_map {
            let _ = writeln!(out, "{short} {long}");
        }
        out
    }
}

pub fn emit_mps(lp: &LinearProgram) -> MpsDocument {
    emit_mps_with(lp, &MpsOptions::default()).expect("mangled names always fit")
}

pub fn emit_mps_with(lp: &LinearProgram, options: &MpsOptions) -> Result<MpsDocument, LpError> {
    let mut name_map = Vec::new();
    let mut row_names = Vec::with_capacity(lp.num_constraints());
    for (i, c) in lp.constraints().iter().enumerate() {
        let short = short_name('R', i, &c.name, options)?;
        name_map.push((short.clone(), c.name.clone()));
        row_names.push(short);
    }
    let mut col_names = Vec::with_capacity(lp.num_vars());
    for (j, v) in lp.variables().iter().enumerate() {
        let short = short_name('C', j, &v.name, options)?;
        name_map.push((short.clone(), v.name.clone()));
        col_names.push(short);
    }

    // Column-major view of the rows.
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (i, c) in lp.constraints().iter().enumerate() {
        let mut merged: HashMap<usize, f64> = HashMap::new();
        for &(v, a) in &c.coeffs {
            *merged.entry(v.0).or_insert(0.0) += a;
        }
        let mut entries: Vec<_> = merged.into_iter().filter(|(_, a)| *a != 0.0).collect();
        entries.sort_by_key(|(v, _)| *v);
        for (v, a) in entries {
            columns[v].push((i, a));
        }
    }

    let mut text = String::new();
    let _ = writeln!(text, "NAME          {}", options.problem_name);
    text.push_str("ROWS\n");
    let _ = writeln!(text, " N  {OBJECTIVE_ROW}");
    for (c, name) in lp.constraints().iter().zip(&row_names) {
        let kind = match c.relation {
            Relation::Le => "L",
            Relation::Eq => "E",
            Relation::Ge => "G",
        };
        let _ = writeln!(text, " {kind}  {name}");
    }

    text.push_str("COLUMNS\n");
    let mut in_integer_block = false;
    let mut marker = 0;
    for (j, v) in lp.variables().iter().enumerate() {
        if v.integer != in_integer_block {
            let tag = if v.integer { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(
                text,
                "    {:<8}  'MARKER'                 {tag}",
                format!("M{marker:07}")
            );
            marker += 1;
            in_integer_block = v.integer;
        }
        let cost = lp.objective()[j];
        let mut wrote = false;
        if cost != 0.0 {
            push_entry(&mut text, "", &col_names[j], OBJECTIVE_ROW, cost);
            wrote = true;
        }
        for &(i, a) in &columns[j] {
            push_entry(&mut text, "", &col_names[j], &row_names[i], a);
            wrote = true;
        }
        if !wrote {
            push_entry(&mut text, "", &col_names[j], OBJECTIVE_ROW, 0.0);
        }
    }
    if in_integer_block {
        let _ = writeln!(
            text,
            "    {:<8}  'MARKER'                 'INTEND'",
            format!("M{marker:07}")
        );
    }

    text.push_str("RHS\n");
    for (c, name) in lp.constraints().iter().zip(&row_names) {
        if c.rhs != 0.0 {
            push_entry(&mut text, "", "RHS", name, c.rhs);
        }
    }

    text.push_str("BOUNDS\n");
    for (v, name) in lp.variables().iter().zip(&col_names) {
        if v.upper == Some(v.lower) {
            push_entry(&mut text, "FX", "BND", name, v.lower);
            continue;
        }
        if v.lower != 0.0 {
            push_entry(&mut text, "LO", "BND", name, v.lower);
        }
        match v.upper {
            Some(u) => push_entry(&mut text, "UP", "BND", name, u),
            None if v.integer => {
                let _ = writeln!(text, " PL BND       {name}");
            }
            None => {}
        }
    }
    text.push_str("ENDATA\n");
    Ok(MpsDocument { text, name_map })
}

fn short_name(prefix: char, index: usize, name: &str, options: &MpsOptions) -> Result<String, LpError> {
    if options.mangle_names {
        return Ok(format!("{prefix}{:07}", index + 1));
    }
    if name.len() > FIELD_WIDTH || name.is_empty() || name.contains(char::is_whitespace) {
        return Err(LpError::NameTooLong(name.to_string()));
    }
    Ok(name.to_string())
}

fn push_entry(out: &mut String, kind: &str, first: &str, second: &str, value: f64) {
    let _ = writeln!(
        out,
        " {kind:<2} {first:<8}  {second:<8}  {:>12}",
        format_number(value)
    );
}

/// Formats `x` into at most 12 characters, keeping as many digits as fit.
pub(crate) fn format_number(x: f64) -> String {
    let plain = format!("{x}");
    if plain.len() <= 12 {
        return plain;
    }
    let sci = format!("{x:e}");
    if sci.len() <= 12 {
        return sci;
    }
    let fixed = (0..=11).rev().map(|p| format!("{x:.p$}")).find(|s| s.len() <= 12);
    let scientific = (0..=11).rev().map(|p| format!("{x:.p$e}")).find(|s| s.len() <= 12);
    let error = |s: &String| (s.parse::<f64>().unwrap_or(f64::INFINITY) - x).abs();
    [fixed, scientific]
        .into_iter()
        .flatten()
        .min_by(|a, b| error(a).total_cmp(&error(b)))
        .unwrap_or_else(|| format!("{x:.0e}"))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

struct ParsedColumn {
    name: String,
    integer: bool,
    cost: f64,
    lower: f64,
    upper: Option<f64>,
}

/// Reads fixed- or free-format MPS written with whitespace-free names.
///
/// Only the subset this crate emits is accepted: a single `N` row, `RHS`,
/// and `UP`/`LO`/`FX`/`PL`/`BV` bounds with non-negative lower bounds.
pub fn parse_mps(text: &str) -> Result<LinearProgram, LpError> {
    let err = |line: usize, message: &str| LpError::MpsParse {
        line,
        message: message.to_string(),
    };
    let mut section = Section::None;
    let mut objective: Option<String> = None;
    let mut rows: Vec<(String, Relation)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut columns: Vec<ParsedColumn> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut integer = false;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = match tokens[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => return Err(err(lineno, &format!("unsupported section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(err(lineno, "data outside a section")),
            Section::Rows => {
                if tokens.len() != 2 {
                    return Err(err(lineno, "malformed row"));
                }
                let relation = match tokens[0] {
                    "N" => {
                        if objective.is_some() {
                            return Err(err(lineno, "multiple objective rows"));
                        }
                        objective = Some(tokens[1].to_string());
                        continue;
                    }
                    "L" => Relation::Le,
                    "E" => Relation::Eq,
                    "G" => Relation::Ge,
                    _ => return Err(err(lineno, "unknown row type")),
                };
                row_index.insert(tokens[1].to_string(), rows.len());
                rows.push((tokens[1].to_string(), relation));
                entries.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if tokens.contains(&"'MARKER'") {
                    integer = match tokens.last() {
                        Some(&"'INTORG'") => true,
                        Some(&"'INTEND'") => false,
                        _ => return Err(err(lineno, "unknown marker")),
                    };
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(lineno, "malformed column entry"));
                }
                let col = match col_index.get(tokens[0]) {
                    Some(&c) => c,
                    None => {
                        col_index.insert(tokens[0].to_string(), columns.len());
                        columns.push(ParsedColumn {
                            name: tokens[0].to_string(),
                            integer,
                            cost: 0.0,
                            lower: 0.0,
                            upper: None,
                        });
                        columns.len() - 1
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let value: f64 = pair[1].parse().map_err(|_| err(lineno, "bad number"))?;
                    if Some(pair[0]) == objective.as_deref() {
                        columns[col].cost += value;
                    } else {
                        let &row = row_index.get(pair[0]).ok_or_else(|| err(lineno, "unknown row"))?;
                        entries[row].push((col, value));
                    }
                }
            }
            Section::Rhs => {
                let data = if tokens.len() % 2 == 1 { &tokens[1..] } else { &tokens[..] };
                for pair in data.chunks(2) {
                    if pair.len() != 2 {
                        return Err(err(lineno, "malformed rhs entry"));
                    }
                    let value: f64 = pair[1].parse().map_err(|_| err(lineno, "bad number"))?;
                    if Some(pair[0]) == objective.as_deref() {
                        continue;
                    }
                    let &row = row_index.get(pair[0]).ok_or_else(|| err(lineno, "unknown row"))?;
                    rhs[row] = value;
                }
            }
            Section::Bounds => {
                let kind = tokens[0];
                let valueless = matches!(kind, "PL" | "BV" | "FR" | "MI");
                let expected_with_set = if valueless { 3 } else { 4 };
                let (col_name, value) = if tokens.len() == expected_with_set {
                    (tokens[2], tokens.get(3))
                } else if tokens.len() == expected_with_set - 1 {
                    (tokens[1], tokens.get(2))
                } else {
                    return Err(err(lineno, "malformed bound"));
                };
                let &col = col_index.get(col_name).ok_or_else(|| err(lineno, "unknown column"))?;
                let value: Option<f64> = value
                    .map(|v| v.parse().map_err(|_| err(lineno, "bad number")))
                    .transpose()?;
                let c = &mut columns[col];
                match (kind, value) {
                    ("UP", Some(v)) => c.upper = Some(v),
                    ("LO", Some(v)) => c.lower = v,
                    ("FX", Some(v)) => {
                        c.lower = v;
                        c.upper = Some(v);
                    }
                    ("PL", None) => c.upper = None,
                    ("BV", None) => {
                        c.lower = 0.0;
                        c.upper = Some(1.0);
                        c.integer = true;
                    }
                    _ => return Err(err(lineno, &format!("unsupported bound {kind}"))),
                }
            }
        }
    }

    let mut lp = LinearProgram::new();
    for c in &columns {
        lp.add_var(c.name.clone(), c.lower, c.upper, c.integer, c.cost)?;
    }
    for (((name, relation), row), b) in rows.into_iter().zip(entries).zip(rhs) {
        let coeffs = row.into_iter().map(|(c, a)| (VarId(c), a)).collect();
        lp.add_constraint(name, coeffs, relation, b)?;
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LinearProgram {
        let mut lp = LinearProgram::new();
        lp.add_var("x_with_a_long_name", 0.0, Some(4.0), false, 0.0)
            .unwrap();
        lp
    }

    #[test]
    fn minimal_program_has_all_sections() {
        let doc = emit_mps(&tiny());
        for section in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
            assert!(
                doc.text.lines().any(|l| l.starts_with(section)),
                "missing {section}\n{}",
                doc.text
            );
        }
        assert!(doc.text.contains(" UP BND       C0000001"));
        assert_eq!(doc.name_map, vec![("C0000001".into(), "x_with_a_long_name".into())]);
    }

    #[test]
    fn integer_columns_get_markers() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var("a", 0.0, Some(1.0), true, 1.0).unwrap();
        let b = lp.add_continuous("b", 1.0).unwrap();
        let c = lp.add_var("c", 0.0, None, true, 1.0).unwrap();
        lp.add_constraint("r", vec![(a, 1.0), (b, 1.0), (c, 1.0)], Relation::Ge, 1.0)
            .unwrap();
        let text = emit_mps(&lp).text;
        assert_eq!(text.matches("'INTORG'").count(), 2);
        assert_eq!(text.matches("'INTEND'").count(), 2);
        assert!(text.contains(" PL BND       C0000003"));
        let back = parse_mps(&text).unwrap();
        assert!(back.variables()[0].integer);
        assert!(!back.variables()[1].integer);
        assert!(back.variables()[2].integer);
    }

    #[test]
    fn long_names_rejected_without_mangling() {
        let options = MpsOptions {
            mangle_names: false,
            ..MpsOptions::default()
        };
        assert_eq!(
            emit_mps_with(&tiny(), &options),
            Err(LpError::NameTooLong("x_with_a_long_name".into()))
        );
    }

    #[test]
    fn fixed_columns_line_up() {
        let mut lp = LinearProgram::new();
        let x = lp.add_continuous("x", 1.5).unwrap();
        lp.add_constraint("r", vec![(x, 2.0)], Relation::Ge, 3.0).unwrap();
        let text = emit_mps(&lp).text;
        let line = text.lines().find(|l| l.contains("R0000001") && l.contains("C0000001")).unwrap();
        assert_eq!(&line[4..12], "C0000001");
        assert_eq!(&line[14..22], "R0000001");
        assert_eq!(line[24..36].trim(), "2");
    }

    #[test]
    fn numbers_fit_the_value_field() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 1e-20, -123456789.123, 6.02e23, 0.0] {
            let s = format_number(x);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - x).abs() <= 1e-9 * x.abs().max(1e-300), "{x} -> {s}");
        }
    }
}
