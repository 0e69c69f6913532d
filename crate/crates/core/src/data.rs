//! Claim-file ingestion.
//!
//! Files are delimiter-separated text with one claim per row. The delimiter is
//! detected from the first data line (comma, semicolon, tab, otherwise runs of
//! whitespace) unless given. A first line whose selected field is not numeric
//! is taken as a header. Lines starting with `#` and blank lines are skipped.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{Error, Result};

/// Field separator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Auto,
    Comma,
    Semicolon,
    Tab,
    Whitespace,
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Delimiter::Auto),
            "comma" | "," => Ok(Delimiter::Comma),
            "semicolon" | ";" => Ok(Delimiter::Semicolon),
            "tab" | "\\t" | "\t" => Ok(Delimiter::Tab),
            "whitespace" | "space" | " " => Ok(Delimiter::Whitespace),
            other => Err(Error::InvalidParameter(format!("unknown delimiter `{other}`"))),
        }
    }
}

impl Delimiter {
    fn detect(line: &str) -> Self {
        if line.contains(',') {
            Delimiter::Comma
        } else if line.contains(';') {
            Delimiter::Semicolon
        } else if line.contains('\t') {
            Delimiter::Tab
        } else {
            Delimiter::Whitespace
        }
    }

    fn byte(self) -> Option<u8> {
        match self {
            Delimiter::Comma => Some(b','),
            Delimiter::Semicolon => Some(b';'),
            Delimiter::Tab => Some(b'\t'),
            Delimiter::Auto | Delimiter::Whitespace => None,
        }
    }
}

/// Which column holds the claim sizes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Column {
    /// The last field of each row.
    #[default]
    Last,
    /// 1-based position.
    Index(usize),
    /// Header name.
    Name(String),
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("last") {
            return Ok(Column::Last);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(Error::InvalidParameter("column positions are 1-based".into())),
            Ok(i) => Ok(Column::Index(i)),
            Err(_) if !s.is_empty() => Ok(Column::Name(s.to_string())),
            Err(_) => Err(Error::InvalidParameter("empty column selector".into())),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Last => f.write_str("last"),
            Column::Index(i) => write!(f, "{i}"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

/// Validated positive claim sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimDataset {
    pub values: Vec<f64>,
    pub source: PathBuf,
}

impl ClaimDataset {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (divisor `n - 1`); zero for a single value.
    pub fn sd(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

/// Reads claim sizes from `path`.
pub fn load_claims(path: impl AsRef<Path>, column: &Column, delimiter: Delimiter) -> Result<ClaimDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let values = parse_claims(&text, column, delimiter)?;
    Ok(ClaimDataset { values, source: path.to_path_buf() })
}

fn split_line(line: &str, delimiter: Delimiter) -> Result<Vec<String>> {
    let fields: Vec<String> = match delimiter.byte() {
        None => line.split_whitespace().map(str::to_string).collect(),
        Some(b) => {
            let mut rdr =
                csv::ReaderBuilder::new().has_headers(false).delimiter(b).trim(csv::Trim::All).from_reader(line.as_bytes());
            match rdr.records().next() {
                Some(rec) => rec.map_err(|e| Error::Io(e.to_string()))?.iter().map(str::to_string).collect(),
                None => Vec::new(),
            }
        }
    };
    Ok(fields)
}

/// Parses claim sizes from delimiter-separated text.
pub fn parse_claims(text: &str, column: &Column, delimiter: Delimiter) -> Result<Vec<f64>> {
    let mut delimiter = delimiter;
    let mut position: Option<usize> = None;
    let mut first = true;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if delimiter == Delimiter::Auto {
            delimiter = Delimiter::detect(line);
        }
        let fields = split_line(line, delimiter).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let was_first = std::mem::replace(&mut first, false);
        if was_first {
            if let Column::Name(name) = column {
                let at = fields.iter().position(|f| f == name).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("no column named `{name}` in header {fields:?}"),
                })?;
                position = Some(at);
                continue;
            }
        }
        let at = match (column, position) {
            (_, Some(p)) => p,
            (Column::Index(k), None) => k - 1,
            (Column::Last, None) => fields.len().saturating_sub(1),
            (Column::Name(_), None) => unreachable!("name resolved on the header line"),
        };
        let field = fields.get(at).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("row has {} fields, column {column} is missing", fields.len()),
        })?;
        let value = match field.parse::<f64>() {
            Ok(v) => v,
            // a non-numeric first line is a header
            Err(_) if was_first => continue,
            Err(_) => return Err(Error::Parse { line: line_no, message: format!("`{field}` is not a number") }),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parse { line: line_no, message: format!("claim size {value} must be positive and finite") });
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::InsufficientData("no claims found in input".into()));
    }
    Ok(values)
}
