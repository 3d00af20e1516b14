use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};

/// How the label column of a CSV file is identified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name (requires a header row).
    Name(String),
    /// 0-based column index.
    Index(usize),
}

impl LabelColumn {
    /// A bare integer is an index, anything else a header name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

pub fn read_csv(path: impl AsRef<Path>, has_header: bool, label_column: Option<&LabelColumn>) -> Result<Dataset> {
    read_csv_from(File::open(path)?, has_header, label_column)
}

/// Parse a comma-separated numeric table. Labels in the file are 1-based integers.
pub fn read_csv_from<R: Read>(reader: R, has_header: bool, label_column: Option<&LabelColumn>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_header).flexible(true).from_reader(reader);
    let header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
    } else {
        None
    };
    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            let h = header
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("a named label column needs a header row".into()))?;
            Some(
                h.iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::InvalidInput(format!("no column named '{name}'")))?,
            )
        }
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1 + usize::from(has_header);
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if let Some(li) = label_idx {
            if li >= w {
                return Err(Error::InvalidInput(format!("label column {li} out of range for {w} columns")));
            }
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let err = |message: String| Error::Parse { row, column: c + 1, message };
            if Some(c) == label_idx {
                let l: i64 = cell.parse().map_err(|_| err(format!("label '{cell}' is not an integer")))?;
                if l < 1 {
                    return Err(err(format!("label {l} must be >= 1")));
                }
                labels.push((l - 1) as usize);
            } else {
                let v: f64 = cell.parse().map_err(|_| err(format!("'{cell}' is not a number")))?;
                if !v.is_finite() {
                    return Err(err(format!("'{cell}' is not finite")));
                }
                values.push(v);
            }
        }
        n += 1;
    }
    let total = width.unwrap_or(0);
    let p = total - usize::from(label_idx.is_some() && total > 0);
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput("CSV contains no numeric data".into()));
    }
    let feature_names =
        header.map(|h| h.into_iter().enumerate().filter(|(c, _)| Some(*c) != label_idx).map(|(_, s)| s).collect());
    Ok(Dataset {
        y: DMatrix::from_row_slice(n, p, &values),
        feature_names,
        labels: label_idx.map(|_| labels),
    })
}

pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut f = File::create(path)?;
    write_csv_to(&mut f, data)?;
    f.flush()?;
    Ok(())
}

/// Write a header row, the features in shortest round-trip form and, when present,
/// a trailing 1-based `label` column.
pub fn write_csv_to<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match &data.feature_names {
        Some(names) if names.len() == data.p() => names.clone(),
        _ => (1..=data.p()).map(|j| format!("x{j}")).collect(),
    };
    if data.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.y.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = &data.labels {
            rec.push((l[i] + 1).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
