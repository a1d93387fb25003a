//! Fixed-format MPS export and import.
//!
//! Names longer than eight characters (or containing blanks) do not fit the
//! fixed columns. When any name is unencodable every row and column is renamed
//! `R0000001`, `C0000001`, ... in model order and the original names are written
//! to a sidecar `<file>.names`, which [`import_mps`] reads back when present.
//! Numbers use the shortest representation that round-trips exactly; values
//! needing more than twelve characters widen their field.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::MpsError;
use crate::model::{MilpModel, Sense, Var, VarKind};

const OBJ_ROW: &str = "OBJ";

/// Original names of a mangled export, in model order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NameMap {
    pub model: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

impl NameMap {
    fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "N MODEL {}", self.model);
        for (i, n) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "R {} {}", row_code(i), n);
        }
        for (j, n) in self.cols.iter().enumerate() {
            let _ = writeln!(out, "C {} {}", col_code(j), n);
        }
        out
    }

    fn parse(text: &str) -> Result<Self, MpsError> {
        let mut map = NameMap::default();
        for (k, line) in text.lines().enumerate() {
            let mut parts = line.splitn(3, ' ');
            let (Some(kind), Some(_code), Some(name)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(MpsError::parse(k + 1, "malformed name map entry"));
            };
            match kind {
                "N" => map.model = name.to_string(),
                "R" => map.rows.push(name.to_string()),
                "C" => map.cols.push(name.to_string()),
                _ => {
                    return Err(MpsError::parse(
                        k + 1,
                        format!("unknown name map kind `{kind}`"),
                    ))
                }
            }
        }
        Ok(map)
    }
}

fn row_code(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn col_code(j: usize) -> String {
    format!("C{:07}", j + 1)
}

fn encodable(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 8
        && name.is_ascii()
        && !name.contains(char::is_whitespace)
        && name != OBJ_ROW
        && name != "MARKER"
        && !name.starts_with('\'')
}

pub fn format_number(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str) {
    let s = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4}");
    out.push_str(s.trim_end());
    out.push('\n');
}

/// Renders `model` as fixed-format MPS. Returns the text and, if names were
/// mangled, the map back to the originals.
pub fn write_mps(model: &MilpModel) -> (String, Option<NameMap>) {
    let mangle = !encodable(&model.name)
        || model.rows().iter().any(|r| !encodable(&r.name))
        || model.vars().iter().any(|v| !encodable(&v.name));
    let row_names: Vec<String> = if mangle {
        (0..model.num_rows()).map(row_code).collect()
    } else {
        model.rows().iter().map(|r| r.name.clone()).collect()
    };
    let col_names: Vec<String> = if mangle {
        (0..model.num_vars()).map(col_code).collect()
    } else {
        model.vars().iter().map(|v| v.name.clone()).collect()
    };
    let model_name = if mangle {
        "MODEL".to_string()
    } else {
        model.name.clone()
    };

    let mut out = String::new();
    let _ = writeln!(out, "NAME          {model_name}");
    out.push_str("ROWS\n");
    line(&mut out, "N", OBJ_ROW, "", "");
    for (r, name) in model.rows().iter().zip(&row_names) {
        let s = match r.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        line(&mut out, s, name, "", "");
    }

    out.push_str("COLUMNS\n");
    let cols = model.columns();
    let mut in_marker = false;
    let mut marker = 0usize;
    for (j, v) in model.vars().iter().enumerate() {
        let integral = v.kind.is_integral();
        if integral != in_marker {
            let tag = if integral { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    M{marker:07}  'MARKER'                 {tag}");
            marker += 1;
            in_marker = integral;
        }
        let c = model.objective()[j];
        if c != 0.0 || cols[j].is_empty() {
            line(&mut out, "", &col_names[j], OBJ_ROW, &format_number(c));
        }
        for &(i, a) in &cols[j] {
            line(
                &mut out,
                "",
                &col_names[j],
                &row_names[i],
                &format_number(a),
            );
        }
    }
    if in_marker {
        let _ = writeln!(out, "    M{marker:07}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    if model.objective_offset() != 0.0 {
        line(
            &mut out,
            "",
            "RHS",
            OBJ_ROW,
            &format_number(-model.objective_offset()),
        );
    }
    for (r, name) in model.rows().iter().zip(&row_names) {
        if r.rhs != 0.0 {
            line(&mut out, "", "RHS", name, &format_number(r.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (v, name) in model.vars().iter().zip(&col_names) {
        let (l, u) = (v.lower, v.upper);
        if v.kind == VarKind::Binary {
            line(&mut out, "BV", "BND", name, "");
            if l != 0.0 {
                line(&mut out, "LO", "BND", name, &format_number(l));
            }
            if u != 1.0 {
                line(&mut out, "UP", "BND", name, &format_number(u));
            }
            continue;
        }
        if l == u {
            line(&mut out, "FX", "BND", name, &format_number(l));
            continue;
        }
        match (l.is_finite(), u.is_finite()) {
            (false, false) => line(&mut out, "FR", "BND", name, ""),
            (false, true) => {
                line(&mut out, "MI", "BND", name, "");
                line(&mut out, "UP", "BND", name, &format_number(u));
            }
            (true, _) => {
                if l != 0.0 {
                    line(&mut out, "LO", "BND", name, &format_number(l));
                }
                if u.is_finite() {
                    line(&mut out, "UP", "BND", name, &format_number(u));
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    let map = mangle.then(|| NameMap {
        model: model.name.clone(),
        rows: model.rows().iter().map(|r| r.name.clone()).collect(),
        cols: model.vars().iter().map(|v| v.name.clone()).collect(),
    });
    (out, map)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names");
    PathBuf::from(s)
}

/// Writes `model` to `path`, plus the name sidecar when names were mangled.
pub fn export_mps(model: &MilpModel, path: &Path) -> Result<(), MpsError> {
    model.validate()?;
    let (text, map) = write_mps(model);
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    if let Some(map) = map {
        fs::write(sidecar_path(path), map.render())?;
    }
    Ok(())
}

/// Reads an MPS file, restoring original names from the sidecar if one exists.
pub fn import_mps(path: &Path) -> Result<MilpModel, MpsError> {
    let file = fs::File::open(path)?;
    let side = sidecar_path(path);
    let names = if side.exists() {
        Some(NameMap::parse(&fs::read_to_string(side)?)?)
    } else {
        None
    };
    read_mps(BufReader::new(file), names.as_ref())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
}

fn number(tok: &str, ln: usize) -> Result<f64, MpsError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| MpsError::parse(ln, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(MpsError::parse(ln, format!("non-finite number `{tok}`")));
    }
    Ok(v)
}

/// Parses MPS text. Fields are split on whitespace, so names must not contain blanks.
pub fn read_mps<R: BufRead>(reader: R, names: Option<&NameMap>) -> Result<MilpModel, MpsError> {
    let mut name = String::new();
    let mut obj_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut cols: Vec<(String, bool)> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut ranges: Vec<Option<f64>> = Vec::new();
    let mut offset = 0.0;
    let mut bounds: Vec<(f64, f64, bool)> = Vec::new();
    let mut integral = false;
    let mut section = Section::None;
    let mut ended = false;

    for (k, raw) in reader.lines().enumerate() {
        let ln = k + 1;
        let raw = raw?;
        if raw.starts_with('*') || raw.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match toks[0] {
                "NAME" => {
                    name = toks.get(1).copied().unwrap_or("").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "OBJSENSE" => return Err(MpsError::parse(ln, "OBJSENSE is not supported")),
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(MpsError::parse(ln, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(MpsError::parse(ln, "data line outside a section")),
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(MpsError::parse(ln, "expected `<sense> <row>`"));
                }
                let sense = match toks[0] {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(toks[1].to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    s => return Err(MpsError::parse(ln, format!("unknown row type `{s}`"))),
                };
                if row_index.insert(toks[1].to_string(), rows.len()).is_some() {
                    return Err(MpsError::parse(ln, format!("duplicate row `{}`", toks[1])));
                }
                rows.push((toks[1].to_string(), sense));
                rhs.push(0.0);
                ranges.push(None);
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    integral = match toks[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        m => return Err(MpsError::parse(ln, format!("unknown marker {m}"))),
                    };
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(MpsError::parse(ln, "expected column entries in pairs"));
                }
                let j = match col_index.get(toks[0]) {
                    Some(&j) => j,
                    None => {
                        col_index.insert(toks[0].to_string(), cols.len());
                        cols.push((toks[0].to_string(), integral));
                        entries.push(Vec::new());
                        objective.push(0.0);
                        bounds.push((0.0, f64::INFINITY, false));
                        cols.len() - 1
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = number(pair[1], ln)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        objective[j] += v;
                    } else if let Some(&i) = row_index.get(pair[0]) {
                        entries[j].push((i, v));
                    } else {
                        return Err(MpsError::parse(ln, format!("unknown row `{}`", pair[0])));
                    }
                }
            }
            Section::Rhs | Section::Ranges => {
                let body = if toks.len() % 2 == 1 {
                    &toks[1..]
                } else {
                    &toks[..]
                };
                for pair in body.chunks(2) {
                    if pair.len() != 2 {
                        return Err(MpsError::parse(ln, "expected `<row> <value>` pairs"));
                    }
                    let v = number(pair[1], ln)?;
                    if section == Section::Rhs && Some(pair[0]) == obj_row.as_deref() {
                        offset = -v;
                        continue;
                    }
                    let Some(&i) = row_index.get(pair[0]) else {
                        return Err(MpsError::parse(ln, format!("unknown row `{}`", pair[0])));
                    };
                    if section == Section::Rhs {
                        rhs[i] = v;
                    } else {
                        ranges[i] = Some(v);
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(MpsError::parse(ln, "bound line too short"));
                }
                let Some(&j) = col_index.get(toks[2]) else {
                    return Err(MpsError::parse(ln, format!("unknown column `{}`", toks[2])));
                };
                let val = || -> Result<f64, MpsError> {
                    toks.get(3)
                        .ok_or_else(|| MpsError::parse(ln, "missing bound value"))
                        .and_then(|t| number(t, ln))
                };
                let b = &mut bounds[j];
                match toks[0] {
                    "UP" => b.1 = val()?,
                    "LO" => b.0 = val()?,
                    "FX" => {
                        let v = val()?;
                        *b = (v, v, b.2);
                    }
                    "FR" => {
                        b.0 = f64::NEG_INFINITY;
                        b.1 = f64::INFINITY;
                    }
                    "MI" => b.0 = f64::NEG_INFINITY,
                    "PL" => b.1 = f64::INFINITY,
                    "BV" => *b = (0.0, 1.0, true),
                    "LI" => {
                        b.0 = val()?;
                        cols[j].1 = true;
                    }
                    "UI" => {
                        b.1 = val()?;
                        cols[j].1 = true;
                    }
                    t => return Err(MpsError::parse(ln, format!("unknown bound type `{t}`"))),
                }
            }
        }
    }
    if !ended {
        return Err(MpsError::parse(0, "missing ENDATA"));
    }
    if obj_row.is_none() {
        return Err(MpsError::parse(0, "no objective row"));
    }
    if let Some(map) = names {
        if map.rows.len() != rows.len() || map.cols.len() != cols.len() {
            return Err(MpsError::parse(0, "name map does not match model size"));
        }
    }

    let mut model = MilpModel::new(names.map_or(name, |m| m.model.clone()));
    let vars: Vec<Var> = cols
        .iter()
        .enumerate()
        .map(|(j, (cname, int))| {
            let (l, u, bin) = bounds[j];
            let kind = match (bin, int) {
                (true, _) => VarKind::Binary,
                (false, true) => VarKind::Integer,
                _ => VarKind::Continuous,
            };
            let vname = names.map_or(cname.clone(), |m| m.cols[j].clone());
            let v = model.add_var(vname, kind, l, u);
            // Binary bounds given after BV replace the clamped defaults.
            model.set_bounds(v, l, u);
            model.set_objective(v, objective[j]);
            v
        })
        .collect();
    let mut by_row: Vec<Vec<(Var, f64)>> = vec![Vec::new(); rows.len()];
    for (j, col) in entries.iter().enumerate() {
        for &(i, a) in col {
            by_row[i].push((vars[j], a));
        }
    }
    let mut extra = Vec::new();
    for (i, (rname, sense)) in rows.iter().enumerate() {
        let rname = names.map_or(rname.clone(), |m| m.rows[i].clone());
        let terms = std::mem::take(&mut by_row[i]);
        match ranges[i] {
            None => {
                model.add_row(rname, terms, *sense, rhs[i]);
            }
            Some(r) => {
                let (lo, hi) = match sense {
                    Sense::Le => (rhs[i] - r.abs(), rhs[i]),
                    Sense::Ge => (rhs[i], rhs[i] + r.abs()),
                    Sense::Eq if r >= 0.0 => (rhs[i], rhs[i] + r),
                    Sense::Eq => (rhs[i] + r, rhs[i]),
                };
                model.add_row(format!("{rname}_lo"), terms.clone(), Sense::Ge, lo);
                extra.push((format!("{rname}_hi"), terms, hi));
            }
        }
    }
    for (rname, terms, hi) in extra {
        model.add_row(rname, terms, Sense::Le, hi);
    }
    model.set_objective_offset(offset);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_use_shortest_exact_form() {
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(-0.25), "-0.25");
        assert_eq!(format_number(1e-7), "1e-7");
        assert_eq!(format_number(2.5e12), "2.5e12");
        let v = 0.1 + 0.2;
        assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn short_names_are_kept() {
        let mut m = MilpModel::new("tiny");
        let x = m.continuous("x", 0.0, 4.0);
        m.add_row("c", [(x, 1.0)], Sense::Ge, 1.0);
        let (text, map) = write_mps(&m);
        assert!(map.is_none());
        assert!(text.contains(" G  c"));
        assert!(text.contains(" UP BND       x         4"));
    }

    #[test]
    fn ranges_become_row_pairs() {
        let text = "NAME t\nROWS\n N obj\n L r\nCOLUMNS\n    x obj 1 r 1\nRHS\n    RHS r 5\nRANGES\n    RNG r 2\nBOUNDS\n FR BND x\nENDATA\n";
        let m = read_mps(text.as_bytes(), None).unwrap();
        assert_eq!(m.num_rows(), 2);
        assert_eq!(m.rows()[0].rhs, 3.0);
        assert_eq!(m.rows()[1].rhs, 5.0);
    }
}
