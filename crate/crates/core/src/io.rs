//! CSV matrices: header row of column labels, first column of row labels.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::CountMatrix;
use crate::error::{CodaError, Result};

/// A labelled real matrix read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMatrix {
    pub values: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> CodaError {
    CodaError::Parse { location: location.into(), message: message.into() }
}

type Table = (Vec<String>, Vec<String>, Vec<Vec<(String, u64)>>);

fn read_table<R: Read>(reader: R, what: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(parse_err(what, "empty file")),
    };
    if header.len() < 2 {
        return Err(parse_err(format!("{what}: line 1"), "header needs a label column and at least one part"));
    }
    let col_labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for (k, l) in col_labels.iter().enumerate() {
        if !seen.insert(l) {
            return Err(parse_err(format!("{what}: line 1, column {}", k + 2), format!("duplicate column label '{l}'")));
        }
    }
    let mut row_labels = Vec::new();
    let mut cells = Vec::new();
    let mut seen_rows = HashSet::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                format!("{what}: line {line}"),
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let label = rec[0].trim().to_string();
        if !seen_rows.insert(label.clone()) {
            return Err(parse_err(format!("{what}: line {line}"), format!("duplicate row label '{label}'")));
        }
        row_labels.push(label);
        cells.push(rec.iter().skip(1).map(|s| (s.trim().to_string(), line)).collect());
    }
    if row_labels.is_empty() {
        return Err(parse_err(what, "no data rows"));
    }
    Ok((row_labels, col_labels, cells))
}

fn parse_real(cell: &str, location: &dyn Fn() -> String) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| parse_err(location(), format!("'{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(location(), format!("'{cell}' is not finite")));
    }
    if v < 0.0 {
        return Err(parse_err(location(), format!("negative value {cell}")));
    }
    Ok(v)
}

fn build<F>(row_labels: Vec<String>, col_labels: Vec<String>, cells: Vec<Vec<(String, u64)>>, what: &str, mut parse: F) -> Result<LabelledMatrix>
where
    F: FnMut(&str, &dyn Fn() -> String) -> Result<f64>,
{
    let (n, d) = (row_labels.len(), col_labels.len());
    let mut values = DMatrix::zeros(n, d);
    for (i, row) in cells.iter().enumerate() {
        for (j, (cell, line)) in row.iter().enumerate() {
            let location = || format!("{what}: line {line}, column {} ('{}')", j + 2, col_labels[j]);
            values[(i, j)] = parse(cell, &location)?;
        }
    }
    Ok(LabelledMatrix { values, row_labels, col_labels })
}

/// Nonnegative real matrix.
pub fn read_matrix_csv(path: &Path) -> Result<LabelledMatrix> {
    let what = path.display().to_string();
    let (rows, cols, cells) = read_table(File::open(path)?, &what)?;
    build(rows, cols, cells, &what, |c, loc| parse_real(c, loc))
}

/// Count matrix; every cell must be a nonnegative integer.
pub fn ingest_csv(path: &Path) -> Result<CountMatrix> {
    let what = path.display().to_string();
    ingest_reader(File::open(path)?, &what)
}

pub fn ingest_reader<R: Read>(reader: R, what: &str) -> Result<CountMatrix> {
    let (rows, cols, cells) = read_table(reader, what)?;
    let m = build(rows, cols, cells, what, |c, loc| {
        let v = parse_real(c, loc)?;
        if v.fract() != 0.0 {
            return Err(parse_err(loc(), format!("non-integer count {c}")));
        }
        Ok(v)
    })?;
    let counts = m.values.map(|v| v as u64);
    CountMatrix::new(counts, m.row_labels, m.col_labels)
}

pub fn write_matrix_csv<W: Write>(w: W, values: &DMatrix<f64>, row_labels: &[String], col_labels: &[String]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec![String::new()];
    header.extend(col_labels.iter().cloned());
    wr.write_record(&header)?;
    for (i, label) in row_labels.iter().enumerate().take(values.nrows()) {
        let mut rec = vec![label.clone()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_counts_csv<W: Write>(w: W, counts: &CountMatrix) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec![String::new()];
    header.extend(counts.col_labels().iter().cloned());
    wr.write_record(&header)?;
    for i in 0..counts.nrows() {
        let mut rec = vec![counts.row_labels()[i].clone()];
        rec.extend(counts.counts().row(i).iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<CountMatrix> {
        ingest_reader(text.as_bytes(), "fixture")
    }

    #[test]
    fn well_formed() {
        let m = ingest(",a,b,c\nr1,1,2,3\nr2,4,5,6\nr3,7,8,9\n").unwrap();
        assert_eq!(m.col_labels(), ["a", "b", "c"]);
        assert_eq!(m.row_labels(), ["r1", "r2", "r3"]);
        assert_eq!(m.counts()[(2, 1)], 8);
    }

    #[test]
    fn located_errors() {
        let e = ingest(",a,b\nr1,1,-1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("column 3") && e.contains("negative"), "{e}");
        let e = ingest(",a,b\nr1,1,2.5\n").unwrap_err().to_string();
        assert!(e.contains("non-integer"), "{e}");
        let e = ingest(",a,b\nr1,1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("expected 3 fields"), "{e}");
        assert!(ingest(",a,a\nr1,1,2\n").unwrap_err().to_string().contains("duplicate column"));
        assert!(ingest(",a,b\nr1,1,2\nr1,3,4\n").unwrap_err().to_string().contains("duplicate row"));
        assert!(ingest("").unwrap_err().to_string().contains("empty"));
        assert!(ingest(",a,b\nr1,NaN,2\n").is_err());
    }
}
