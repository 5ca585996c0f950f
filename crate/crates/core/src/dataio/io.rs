//! CSV and JSON file formats.
//!
//! * responses: header `learner_id,item_id,score`, score in {0, 1}
//! * new-learner evidence: header `item_id,score`
//! * Q-matrix: header `item_id,<label 1>,...,<label K>`, entries in {0, 1}
//!
//! Row numbers in parse errors are 1-based file lines (the header is line 1).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{checked_score, QMatrix, ResponseDataset};
use crate::error::{Error, Result};

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_err(path, row, e.to_string())
}

fn expect_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_err(path, e))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_score(path: &Path, row: usize, field: &str) -> Result<u8> {
    let value: i64 = field
        .parse()
        .map_err(|_| parse_err(path, row, format!("score `{field}` is not an integer")))?;
    checked_score(value).map_err(|e| parse_err(path, row, e.to_string()))
}

/// Reads a responses CSV. Duplicate `(learner, item)` pairs are rejected.
pub fn load_responses(path: impl AsRef<Path>) -> Result<ResponseDataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    expect_header(path, &mut reader, &["learner_id", "item_id", "score"])?;
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let score = parse_score(path, row, &record[2])?;
        records.push((record[0].to_owned(), record[1].to_owned(), i64::from(score)));
    }
    ResponseDataset::from_records(records)
}

/// Reads a new learner's `item_id,score` evidence file.
pub fn load_evidence(path: impl AsRef<Path>) -> Result<Vec<(String, u8)>> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    expect_header(path, &mut reader, &["item_id", "score"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        out.push((record[0].to_owned(), parse_score(path, row, &record[1])?));
    }
    Ok(out)
}

/// Reads a Q-matrix CSV, in file row order.
pub fn load_qmatrix(path: impl AsRef<Path>) -> Result<QMatrix> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 2 || &header[0] != "item_id" {
        return Err(parse_err(
            path,
            1,
            "expected header `item_id,<label1>,...,<labelK>`",
        ));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut item_ids = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = record
            .iter()
            .skip(1)
            .map(|f| match f {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(parse_err(
                    path,
                    line,
                    format!("q-matrix entry `{other}` is not 0 or 1"),
                )),
            })
            .collect::<Result<Vec<u8>>>()?;
        if row.iter().all(|&v| v == 0) {
            return Err(parse_err(
                path,
                line,
                Error::EmptyQRow {
                    item: record[0].to_owned(),
                }
                .to_string(),
            ));
        }
        item_ids.push(record[0].to_owned());
        rows.push(row);
    }
    QMatrix::new(labels, item_ids, rows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_responses(ds: &ResponseDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["learner_id", "item_id", "score"])
        .map_err(wrap)?;
    for (l, i, s) in ds.records() {
        w.write_record([l, i, if s == 1 { "1" } else { "0" }])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_qmatrix(q: &QMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec!["item_id".to_owned()];
    header.extend(q.knowledge_labels().iter().cloned());
    w.write_record(&header).map_err(wrap)?;
    for (id, row) in q.item_ids().iter().zip(q.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(u8::to_string));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
