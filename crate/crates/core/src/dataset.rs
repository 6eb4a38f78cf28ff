//! Tabular data with typed predictor columns, explicit missingness and a
//! single numeric response.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Role letters used by the roles file: `d` response, `n` ordinal,
/// `c` categorical, `x` excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Dependent,
    Ordinal,
    Categorical,
    Excluded,
}

impl Role {
    pub fn from_letter(s: &str) -> Option<Role> {
        match s {
            "d" | "D" => Some(Role::Dependent),
            "n" | "N" => Some(Role::Ordinal),
            "c" | "C" => Some(Role::Categorical),
            "x" | "X" => Some(Role::Excluded),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Role::Dependent => 'd',
            Role::Ordinal => 'n',
            Role::Categorical => 'c',
            Role::Excluded => 'x',
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Dependent => "dependent",
            Role::Ordinal => "ordinal",
            Role::Categorical => "categorical",
            Role::Excluded => "excluded",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Ordinal(Vec<Option<f64>>),
    /// Level ids are dense indices into `levels`.
    Categorical {
        codes: Vec<Option<u32>>,
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn ordinal(name: impl Into<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let name = name.into();
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "ordinal column '{name}' has a non-finite value"
            )));
        }
        Ok(Column {
            name,
            data: ColumnData::Ordinal(values),
        })
    }

    pub fn categorical(
        name: impl Into<String>,
        codes: Vec<Option<u32>>,
        levels: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if codes.iter().flatten().any(|&c| c as usize >= levels.len()) {
            return Err(Error::Validation(format!(
                "categorical column '{name}' has a level id outside 0..{}",
                levels.len()
            )));
        }
        Ok(Column {
            name,
            data: ColumnData::Categorical { codes, levels },
        })
    }

    pub fn role(&self) -> Role {
        match self.data {
            ColumnData::Ordinal(_) => Role::Ordinal,
            ColumnData::Categorical { .. } => Role::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Ordinal(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Ordinal(v) => v[row].is_none(),
            ColumnData::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn n_missing(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_missing(i)).count()
    }

    fn take_rows(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Ordinal(v) => ColumnData::Ordinal(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                codes: rows.iter().map(|&i| codes[i]).collect(),
                levels: levels.clone(),
            },
        };
        Column {
            name: self.name.clone(),
            data,
        }
    }

    fn cell_text(&self, row: usize) -> Option<String> {
        match &self.data {
            ColumnData::Ordinal(v) => v[row].map(|x| x.to_string()),
            ColumnData::Categorical { codes, levels } => {
                codes[row].map(|c| levels[c as usize].clone())
            }
        }
    }
}

/// A response vector plus predictor columns. Predictors are shared between
/// datasets that differ only in the response (see [`Dataset::with_response`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response_name: String,
    response: Vec<f64>,
    predictors: Arc<Vec<Column>>,
}

impl Dataset {
    pub fn new(
        response_name: impl Into<String>,
        response: Vec<f64>,
        predictors: Vec<Column>,
    ) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::Validation("dataset has no rows".into()));
        }
        if response.iter().any(|y| !y.is_finite()) {
            return Err(Error::Validation(
                "response has a missing or non-finite value".into(),
            ));
        }
        if let Some(c) = predictors.iter().find(|c| c.len() != n) {
            return Err(Error::Validation(format!(
                "column '{}' has {} rows, response has {n}",
                c.name,
                c.len()
            )));
        }
        Ok(Dataset {
            response_name: response_name.into(),
            response,
            predictors: Arc::new(predictors),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn predictors(&self) -> &[Column] {
        &self.predictors
    }

    pub fn predictor(&self, k: usize) -> &Column {
        &self.predictors[k]
    }

    pub fn predictor_names(&self) -> Vec<String> {
        self.predictors.iter().map(|c| c.name.clone()).collect()
    }

    /// Same predictors (shared, not copied) with a new response.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset> {
        if response.len() != self.n_rows() {
            return Err(Error::Validation(format!(
                "replacement response has {} rows, dataset has {}",
                response.len(),
                self.n_rows()
            )));
        }
        Ok(Dataset {
            response_name: self.response_name.clone(),
            response,
            predictors: Arc::clone(&self.predictors),
        })
    }

    /// A dataset holding only the listed predictors, in the given order.
    pub fn select_predictors(&self, keep: &[usize]) -> Dataset {
        Dataset {
            response_name: self.response_name.clone(),
            response: self.response.clone(),
            predictors: Arc::new(keep.iter().map(|&k| self.predictors[k].clone()).collect()),
        }
    }

    /// Rows gathered by index; repeated indices give repeated rows.
    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            response_name: self.response_name.clone(),
            response: rows.iter().map(|&i| self.response[i]).collect(),
            predictors: Arc::new(self.predictors.iter().map(|c| c.take_rows(rows)).collect()),
        }
    }

    /// Response values shuffled by Fisher-Yates; predictors untouched.
    pub fn permute_response<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let mut y = self.response.clone();
        y.shuffle(rng);
        Dataset {
            response_name: self.response_name.clone(),
            response: y,
            predictors: Arc::clone(&self.predictors),
        }
    }

    pub fn column_summary(&self) -> Vec<ColumnSummary> {
        let (lo, hi) = min_max(self.response.iter().copied());
        let mut out = vec![ColumnSummary {
            name: self.response_name.clone(),
            role: Role::Dependent,
            n_missing: 0,
            n_levels: None,
            min: lo,
            max: hi,
        }];
        for c in self.predictors.iter() {
            let (n_levels, min, max) = match &c.data {
                ColumnData::Ordinal(v) => {
                    let (lo, hi) = min_max(v.iter().flatten().copied());
                    (None, lo, hi)
                }
                ColumnData::Categorical { codes, .. } => {
                    let mut seen: Vec<u32> = codes.iter().flatten().copied().collect();
                    seen.sort_unstable();
                    seen.dedup();
                    (Some(seen.len()), None, None)
                }
            };
            out.push(ColumnSummary {
                name: c.name.clone(),
                role: c.role(),
                n_missing: c.n_missing(),
                n_levels,
                min,
                max,
            });
        }
        out
    }

    /// Canonical writer: response first, then predictors; missing cells as `NA`.
    pub fn write_csv<W: Write, R: Write>(&self, data: W, mut roles: R) -> Result<()> {
        let mut w = csv::Writer::from_writer(data);
        let mut header = vec![self.response_name.clone()];
        header.extend(self.predictor_names());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.response[i].to_string()];
            for c in self.predictors.iter() {
                rec.push(c.cell_text(i).unwrap_or_else(|| "NA".to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        writeln!(roles, "{} d", self.response_name)?;
        for c in self.predictors.iter() {
            writeln!(roles, "{} {}", c.name, c.role().letter())?;
        }
        Ok(())
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> (Option<f64>, Option<f64>) {
    it.fold((None, None), |(lo, hi), x| {
        (
            Some(lo.map_or(x, |l: f64| l.min(x))),
            Some(hi.map_or(x, |h: f64| h.max(x))),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub role: Role,
    pub n_missing: usize,
    pub n_levels: Option<usize>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub const DEFAULT_NA_TOKENS: [&str; 2] = ["NA", ""];

/// Parse a roles file: one `<column-name> <d|n|c|x>` per line. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_roles(text: &str) -> Result<Vec<(String, Role)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let split = line.rfind(char::is_whitespace).ok_or_else(|| {
            Error::Validation(format!(
                "roles line {}: expected '<name> <role>'",
                lineno + 1
            ))
        })?;
        let (name, letter) = (line[..split].trim(), line[split..].trim());
        let role = Role::from_letter(letter).ok_or_else(|| {
            Error::Validation(format!(
                "roles line {}: unknown role '{letter}'",
                lineno + 1
            ))
        })?;
        out.push((name.to_string(), role));
    }
    Ok(out)
}

/// Load a CSV with a header row and a sidecar roles file.
pub fn load_csv(
    data_path: impl AsRef<Path>,
    roles_path: impl AsRef<Path>,
    na_tokens: &[&str],
) -> Result<Dataset> {
    let with_path = |path: &Path| {
        let shown = path.display().to_string();
        move |e: std::io::Error| Error::Io(std::io::Error::new(e.kind(), format!("{shown}: {e}")))
    };
    let (data_path, roles_path) = (data_path.as_ref(), roles_path.as_ref());
    let roles = std::fs::read_to_string(roles_path).map_err(with_path(roles_path))?;
    let data = std::fs::File::open(data_path).map_err(with_path(data_path))?;
    read_csv(data, &roles, na_tokens)
}

/// [`load_csv`] over an arbitrary reader and an in-memory roles file.
pub fn read_csv<R: Read>(data: R, roles_text: &str, na_tokens: &[&str]) -> Result<Dataset> {
    let roles = parse_roles(roles_text)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(data);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let mut role_of: HashMap<&str, Role> = HashMap::new();
    for (name, role) in &roles {
        if role_of.insert(name.as_str(), *role).is_some() {
            return Err(Error::Validation(format!(
                "column '{name}' listed twice in roles file"
            )));
        }
    }
    for (i, name) in header.iter().enumerate() {
        if header[..i].contains(name) {
            return Err(Error::Validation(format!("duplicate column name '{name}'")));
        }
        if !role_of.contains_key(name.as_str()) {
            return Err(Error::Validation(format!("column '{name}' has no role")));
        }
    }
    if let Some((name, _)) = roles.iter().find(|(n, _)| !header.contains(n)) {
        return Err(Error::Validation(format!(
            "roles file names unknown column '{name}'"
        )));
    }
    let col_roles: Vec<Role> = header.iter().map(|h| role_of[h.as_str()]).collect();
    let dependents: Vec<usize> = (0..header.len())
        .filter(|&i| col_roles[i] == Role::Dependent)
        .collect();
    if dependents.len() != 1 {
        return Err(Error::Validation(format!(
            "expected exactly one dependent column, found {}",
            dependents.len()
        )));
    }
    let dep = dependents[0];

    enum Builder {
        Skip,
        Response(Vec<f64>),
        Ordinal(Vec<Option<f64>>),
        Categorical(Vec<Option<u32>>, HashMap<String, u32>, Vec<String>),
    }
    let mut builders: Vec<Builder> = col_roles
        .iter()
        .map(|r| match r {
            Role::Dependent => Builder::Response(Vec::new()),
            Role::Ordinal => Builder::Ordinal(Vec::new()),
            Role::Categorical => Builder::Categorical(Vec::new(), HashMap::new(), Vec::new()),
            Role::Excluded => Builder::Skip,
        })
        .collect();

    let is_na = |s: &str| na_tokens.contains(&s);
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Row numbers count the header as row 1.
        let row = r + 2;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let parse = |cell: &str| -> Result<f64> {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column: header[c].clone(),
                        message: format!("'{cell}' is not a finite number"),
                    })
            };
            match &mut builders[c] {
                Builder::Skip => {}
                Builder::Response(v) => {
                    if is_na(cell) {
                        return Err(Error::Validation(format!(
                            "row {row}: response '{}' is missing",
                            header[c]
                        )));
                    }
                    v.push(parse(cell)?);
                }
                Builder::Ordinal(v) => v.push(if is_na(cell) {
                    None
                } else {
                    Some(parse(cell)?)
                }),
                Builder::Categorical(codes, index, levels) => {
                    if is_na(cell) {
                        codes.push(None);
                    } else {
                        let next = levels.len() as u32;
                        let id = *index.entry(cell.to_string()).or_insert_with(|| {
                            levels.push(cell.to_string());
                            next
                        });
                        codes.push(Some(id));
                    }
                }
            }
        }
    }

    let mut response = Vec::new();
    let mut predictors = Vec::new();
    for (c, b) in builders.into_iter().enumerate() {
        match b {
            Builder::Skip => {}
            Builder::Response(v) => response = v,
            Builder::Ordinal(v) => predictors.push(Column::ordinal(header[c].clone(), v)?),
            Builder::Categorical(codes, _, levels) => {
                predictors.push(Column::categorical(header[c].clone(), codes, levels)?)
            }
        }
    }
    if response.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 rows, found {}",
            response.len()
        )));
    }
    Dataset::new(header[dep].clone(), response, predictors)
}
