use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fmt_f64;
use crate::error::{Error, Result};
use crate::geom::{FlightCondition, ParamBox, PlanformParams, N_PARAMS};

/// Canonical column order of the case table.
pub const CASE_COLUMNS: [&str; 19] = [
    "case_id", "B1", "B2", "B3", "C2", "C3", "C4", "S1", "S3", "X3", "alt_kft", "M_inf", "C1", "alpha", "CL", "CD",
    "CM", "LD", "field_file",
];

const OPTIONAL: [&str; 2] = ["LD", "field_file"];

/// One labeled case: planform, flight condition and integrated coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub params: PlanformParams,
    pub altitude_kft: f64,
    pub mach: f64,
    pub centerline_length: f64,
    pub alpha_deg: f64,
    pub cl: f64,
    pub cd: f64,
    pub cm: f64,
    pub ld: f64,
    pub field_file: Option<String>,
    /// Set when the planform lies outside the parameter box.
    pub out_of_box: bool,
}

impl CaseRecord {
    pub fn flight(&self) -> Result<FlightCondition> {
        FlightCondition::new(self.altitude_kft, self.mach, self.centerline_length, self.alpha_deg)
    }
}

/// A malformed data row, with its 1-based line number in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseTable {
    pub records: Vec<CaseRecord>,
    pub errors: Vec<RowError>,
}

/// Maps canonical column names to the names used in a foreign file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub columns: BTreeMap<String, String>,
}

impl ColumnMap {
    /// Parses a `[columns]` table of `canonical = "file column"` pairs.
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ColumnMap =
            toml::from_str(text).map_err(|e| Error::Schema(format!("column map: {}", e.message())))?;
        for k in m.columns.keys() {
            if !CASE_COLUMNS.contains(&k.as_str()) {
                return Err(Error::Schema(format!("column map names unknown column {k:?}")));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn file_name<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.columns.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

fn parse_row(get: &dyn Fn(&str) -> Option<String>, bx: &ParamBox) -> std::result::Result<CaseRecord, String> {
    let num = |name: &str| -> std::result::Result<f64, String> {
        let s = get(name).ok_or_else(|| format!("missing value for {name}"))?;
        let v: f64 = s.trim().parse().map_err(|_| format!("{name}: cannot parse {s:?} as a number"))?;
        if !v.is_finite() {
            return Err(format!("{name}: non-finite value {s:?}"));
        }
        Ok(v)
    };
    let mut p = [0.0; N_PARAMS];
    for (j, name) in CASE_COLUMNS[1..=N_PARAMS].iter().enumerate() {
        p[j] = num(name)?;
    }
    let (cl, cd, cm) = (num("CL")?, num("CD")?, num("CM")?);
    if cd == 0.0 {
        return Err("CD = 0: L/D = CL/CD is a division by zero".into());
    }
    let ld = cl / cd;
    if let Some(s) = get("LD").filter(|s| !s.trim().is_empty()) {
        let stored: f64 = s.trim().parse().map_err(|_| format!("LD: cannot parse {s:?} as a number"))?;
        if (stored - ld).abs() > 1e-9 * ld.abs().max(1.0) {
            return Err(format!("LD = {stored} disagrees with CL/CD = {ld}"));
        }
    }
    let params = PlanformParams::from_array(p);
    Ok(CaseRecord {
        case_id: get("case_id").unwrap_or_default().trim().to_string(),
        out_of_box: !bx.contains(&params),
        params,
        altitude_kft: num("alt_kft")?,
        mach: num("M_inf")?,
        centerline_length: num("C1")?,
        alpha_deg: num("alpha")?,
        cl,
        cd,
        cm,
        ld,
        field_file: get("field_file").map(|s| s.trim().to_string()).filter(|s| !s.is_empty()),
    })
}

/// Reads a delimited case table. The header may list columns in any order;
/// malformed rows are collected in `errors` with their line numbers.
pub fn read_cases_from<R: std::io::Read>(reader: R, map: Option<&ColumnMap>) -> Result<CaseTable> {
    let default_map = ColumnMap::default();
    let map = map.unwrap_or(&default_map);
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = BTreeMap::new();
    let mut missing = Vec::new();
    for c in CASE_COLUMNS {
        let name = map.file_name(c);
        match headers.iter().position(|h| h.trim() == name) {
            Some(i) => {
                index.insert(c, i);
            }
            None if OPTIONAL.contains(&c) => {}
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing required columns: {}", missing.join(", "))));
    }
    let bx = ParamBox::default();
    let mut table = CaseTable::default();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                table.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != headers.len() {
            table.errors.push(RowError {
                line,
                message: format!("{} fields, header has {}", row.len(), headers.len()),
            });
            continue;
        }
        let get = |c: &str| index.get(c).and_then(|&i| row.get(i)).map(str::to_string);
        match parse_row(&get, &bx) {
            Ok(r) => table.records.push(r),
            Err(message) => table.errors.push(RowError { line, message }),
        }
    }
    Ok(table)
}

pub fn read_cases(path: &Path, map: Option<&ColumnMap>) -> Result<CaseTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cases_from(std::io::BufReader::new(f), map)
}

/// Writes records in canonical column order with 17 significant digits.
pub fn write_cases_to<W: std::io::Write>(w: W, records: &[CaseRecord]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(CASE_COLUMNS)?;
    for r in records {
        let mut row = Vec::with_capacity(CASE_COLUMNS.len());
        row.push(r.case_id.clone());
        row.extend(r.params.to_array().iter().map(|v| fmt_f64(*v)));
        for v in [r.altitude_kft, r.mach, r.centerline_length, r.alpha_deg, r.cl, r.cd, r.cm, r.ld] {
            row.push(fmt_f64(v));
        }
        row.push(r.field_file.clone().unwrap_or_default());
        wr.write_record(&row)?;
    }
    wr.flush().map_err(|e| Error::io("<case table>", e))?;
    Ok(())
}

pub fn write_cases(path: &Path, records: &[CaseRecord]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cases_to(std::io::BufWriter::new(f), records)
}
