//! CSV import and export for relations.
//!
//! The on-disk format is a header row of attribute names followed by one
//! record per row. Scalar cells are plain numbers or text; vector cells
//! are `[v1,v2,...]` and matrix cells `[[a,b],[c,d]]`, which the CSV layer
//! quotes because they contain commas. Reals are written with the shortest
//! representation that round-trips, so export → import reproduces every
//! float bit-for-bit.
//!
//! Column types are inferred from the first data record: an integer
//! pattern makes the column `Int`, any other number `Real`, a `[[` prefix
//! `Matrix`, a `[` prefix `Vector`, anything else `Text`. A header with no
//! data rows yields an empty relation of `Real` columns — an empty file
//! carries no type evidence.

use crate::relation::{Relation, RelationError};
use crate::types::{AttrType, Matrix, Schema, Value};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("row {row}, column `{column}`: cannot parse `{content}` as {expected}")]
    Parse { row: usize, column: String, content: String, expected: AttrType },
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error("csv error: {0}")]
    Format(String),
}

pub fn read_csv(path: &Path) -> Result<Relation, IoError> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Relation, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    // Attribute names are lowercased on import so they line up with the
    // case-insensitive identifiers of the query dialect.
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_lowercase())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(IoError::Format("missing header row".into()));
    }

    let mut records = rdr.records();
    let first = match records.next() {
        None => {
            let attrs: Vec<(String, AttrType)> =
                headers.into_iter().map(|h| (h, AttrType::Real)).collect();
            let schema = Schema::new(attrs).map_err(RelationError::Schema)?;
            return Ok(Relation::empty(schema));
        }
        Some(rec) => rec?,
    };

    let mut attrs = Vec::with_capacity(headers.len());
    let mut rows: Vec<Vec<Value>> = Vec::new();
    let mut first_row = Vec::with_capacity(headers.len());
    for (name, cell) in headers.iter().zip(first.iter()) {
        let ty = infer_cell_type(cell.trim());
        let value = parse_cell(cell.trim(), ty, 1, name)?;
        attrs.push((name.clone(), value.type_of()));
        first_row.push(value);
    }
    rows.push(first_row);

    for (ri, rec) in records.enumerate() {
        let rec = rec?;
        let row_no = ri + 2; // 1-based data rows; the first was consumed above
        if rec.len() != headers.len() {
            return Err(IoError::Format(format!(
                "row {row_no} has {} cells, header has {}",
                rec.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for ((name, (_, ty)), cell) in headers.iter().zip(&attrs).zip(rec.iter()) {
            row.push(parse_cell(cell.trim(), *ty, row_no, name)?);
        }
        rows.push(row);
    }

    let schema = Schema::new(attrs).map_err(RelationError::Schema)?;
    Ok(Relation::new(schema, rows)?)
}

pub fn write_csv(rel: &Relation, path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let file = std::fs::File::create(path)?;
    write_csv_to(rel, file)
}

pub fn write_csv_to<W: Write>(rel: &Relation, writer: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(rel.schema().names())?;
    for row in rel.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

fn infer_cell_type(cell: &str) -> AttrType {
    if cell.starts_with("[[") {
        // Dimensions are refined by the actual parse.
        AttrType::Matrix(0)
    } else if cell.starts_with('[') {
        AttrType::Vector(0)
    } else if is_int_pattern(cell) {
        AttrType::Int
    } else if cell.parse::<f64>().is_ok() {
        AttrType::Real
    } else {
        AttrType::Text
    }
}

fn is_int_pattern(cell: &str) -> bool {
    let digits = cell.strip_prefix('-').or_else(|| cell.strip_prefix('+')).unwrap_or(cell);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn parse_cell(cell: &str, ty: AttrType, row: usize, column: &str) -> Result<Value, IoError> {
    let fail = || IoError::Parse {
        row,
        column: column.to_string(),
        content: cell.to_string(),
        expected: ty,
    };
    match ty {
        AttrType::Int => {
            if !is_int_pattern(cell) {
                return Err(fail());
            }
            cell.parse::<i64>().map(Value::Int).map_err(|_| fail())
        }
        AttrType::Real => cell.parse::<f64>().map(Value::Real).map_err(|_| fail()),
        AttrType::Text => Ok(Value::Text(cell.to_string())),
        AttrType::Vector(_) => parse_vector(cell).map(Value::Vector).ok_or_else(fail),
        AttrType::Matrix(_) => parse_matrix(cell).map(Value::Matrix).ok_or_else(fail),
    }
}

fn parse_vector(cell: &str) -> Option<Vec<f64>> {
    let inner = cell.strip_prefix('[')?.strip_suffix(']')?;
    if inner.contains('[') || inner.contains(']') {
        return None;
    }
    if inner.trim().is_empty() {
        return None;
    }
    inner
        .split(',')
        .map(|p| p.trim().parse::<f64>().ok())
        .collect()
}

fn parse_matrix(cell: &str) -> Option<Matrix> {
    let inner = cell.strip_prefix('[')?.strip_suffix(']')?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rest = inner.trim_start();
    while !rest.is_empty() {
        rest = rest.strip_prefix('[')?;
        let end = rest.find(']')?;
        rows.push(
            rest[..end]
                .split(',')
                .map(|p| p.trim().parse::<f64>().ok())
                .collect::<Option<Vec<f64>>>()?,
        );
        rest = rest[end + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if !rest.is_empty() {
            return None;
        }
    }
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return None;
    }
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Some(Matrix::new(d, data))
}
