//! CSV input and output.

use std::fs;
use std::io::Write;
use std::path::Path;

use gencov::{Dataset, Error, Points, Result};

/// Numeric table with lower-cased column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

fn io_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn data_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {message}", path.display()))
}

/// Reads a CSV of finite reals. Rows are numbered as file lines, so the
/// first data row is row 2.
pub fn load_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if text.trim().is_empty() {
        return Err(data_err(path, "empty file"));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(path, e))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(data_err(path, format!("duplicate column '{h}'")));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| data_err(path, format!("row {row}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(data_err(
                path,
                format!("row {row}: expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                data_err(
                    path,
                    format!("row {row}, column {}: '{cell}' is not a finite number", headers[j]),
                )
            })?;
            columns[j].push(v);
        }
    }
    if columns.first().is_none_or(|c| c.is_empty()) {
        return Err(data_err(path, "no data rows"));
    }
    Ok(Table { headers, columns })
}

impl Table {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns playing role `name`: either a single column `name` or the
    /// numbered columns `name1, name2, ...` (with `sep` between name and
    /// number).
    fn role(&self, name: &str, sep: &str) -> Option<Vec<usize>> {
        if let Some(i) = self.headers.iter().position(|h| h == name) {
            return Some(vec![i]);
        }
        let mut idx = Vec::new();
        for k in 1.. {
            match self.headers.iter().position(|h| *h == format!("{name}{sep}{k}")) {
                Some(i) => idx.push(i),
                None => break,
            }
        }
        (!idx.is_empty()).then_some(idx)
    }

    fn points(&self, idx: &[usize]) -> Result<Points> {
        let n = self.len();
        let mut data = Vec::with_capacity(n * idx.len());
        for i in 0..n {
            for &j in idx {
                data.push(self.columns[j][i]);
            }
        }
        Points::new(idx.len(), data)
    }

    fn require(&self, path: &Path, name: &str, sep: &str) -> Result<Vec<usize>> {
        self.role(name, sep)
            .ok_or_else(|| data_err(path, format!("missing column '{name}'")))
    }

    fn check_roles(&self, path: &Path, used: &[usize]) -> Result<()> {
        if let Some((_, h)) = self.headers.iter().enumerate().find(|(i, _)| !used.contains(i)) {
            return Err(data_err(path, format!("unexpected column '{h}'")));
        }
        Ok(())
    }
}

/// Two-stage sample: `s` (or `s1..sp`), `t` (or `t1..td`) and `y`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let table = load_table(path)?;
    let s = table.require(path, "s", "")?;
    let t = table.require(path, "t", "")?;
    let y = table.require(path, "y", "")?;
    if y.len() != 1 {
        return Err(data_err(path, "exactly one outcome column 'y' is expected"));
    }
    table.check_roles(path, &[s.clone(), t.clone(), y.clone()].concat())?;
    Dataset::new(table.points(&s)?, Some(table.points(&t)?), table.columns[y[0]].clone())
}

/// Censored sample: `x` (or `x1..xp`) and `y`.
pub fn load_censored(path: &Path) -> Result<(Points, Vec<f64>)> {
    let table = load_table(path)?;
    let x = table.require(path, "x", "")?;
    let y = table.require(path, "y", "")?;
    table.check_roles(path, &[x.clone(), y.clone()].concat())?;
    Ok((table.points(&x)?, table.columns[y[0]].clone()))
}

/// Triangular sample: `y`, `x1`, `z1` (or `z1_1..`) and `z2` (or `z2_1..`).
pub struct TriangularData {
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub z1: Points,
    pub z2: Points,
}

pub fn load_triangular(path: &Path) -> Result<TriangularData> {
    let table = load_table(path)?;
    let y = table.require(path, "y", "")?;
    let x1 = table
        .headers
        .iter()
        .position(|h| h == "x1")
        .ok_or_else(|| data_err(path, "missing column 'x1'"))?;
    let z1 = table.require(path, "z1", "_")?;
    let z2 = table.require(path, "z2", "_")?;
    table.check_roles(path, &[y.clone(), vec![x1], z1.clone(), z2.clone()].concat())?;
    Ok(TriangularData {
        y: table.columns[y[0]].clone(),
        x1: table.columns[x1].clone(),
        z1: table.points(&z1)?,
        z2: table.points(&z2)?,
    })
}

pub fn role_names(name: &str, dim: usize, sep: &str) -> Vec<String> {
    if dim == 1 {
        vec![name.to_string()]
    } else {
        (1..=dim).map(|k| format!("{name}{sep}{k}")).collect()
    }
}

/// Writes a table of strings.
pub fn write_rows(path: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    match path {
        Some(p) => fs::write(p, body).map_err(|e| io_err(p, e)),
        None => std::io::stdout()
            .write_all(&body)
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let p = data.s.dim();
    let t = data.t.as_ref();
    let d = t.map_or(0, Points::dim);
    let mut header = role_names("s", p, "");
    if d > 0 {
        header.extend(role_names("t", d, ""));
    }
    header.push("y".into());
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| {
            let mut r: Vec<String> = data.s.row(i).iter().map(f64::to_string).collect();
            if let Some(t) = t {
                r.extend(t.row(i).iter().map(f64::to_string));
            }
            r.push(data.y[i].to_string());
            r
        })
        .collect();
    write_rows(Some(path), &header, &rows)
}

/// Two-column `x value` text file, one line per point.
pub fn write_curve(path: &Path, xs: &[f64], values: &[f64]) -> Result<()> {
    let mut out = String::new();
    for (x, v) in xs.iter().zip(values) {
        out.push_str(&format!("{x} {v}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
