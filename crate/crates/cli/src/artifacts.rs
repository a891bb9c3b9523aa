//! Artifact writers. Every number is printed with 17 significant digits so
//! reruns of an identical config produce byte-identical files.

use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv write to {path} failed: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("json encode for {path} failed: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io { path: path.display().to_string(), source }
}

/// Round-trippable decimal form of an f64 (17 significant digits).
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(path: PathBuf, header: &[&str]) -> Result<Self, ArtifactError> {
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(BufWriter::new(file));
        let mut sink = CsvSink { writer, path };
        sink.raw_row(header.iter().copied())?;
        Ok(sink)
    }

    fn raw_row<'a>(&mut self, fields: impl IntoIterator<Item = &'a str>) -> Result<(), ArtifactError> {
        self.writer
            .write_record(fields)
            .map_err(|e| ArtifactError::Csv { path: self.path.display().to_string(), source: e })
    }

    /// One row of floats, formatted deterministically.
    pub fn row(&mut self, values: &[f64]) -> Result<(), ArtifactError> {
        let rendered: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
        self.raw_row(rendered.iter().map(String::as_str))
    }

    /// A row of preformatted fields (mixed text and numbers).
    pub fn record(&mut self, fields: &[String]) -> Result<(), ArtifactError> {
        self.raw_row(fields.iter().map(String::as_str))
    }

    pub fn finish(mut self) -> Result<(), ArtifactError> {
        self.writer
            .flush()
            .map_err(|e| ArtifactError::Io { path: self.path.display().to_string(), source: e })
    }
}

/// One JSON object per file, pretty-printed with a trailing newline.
pub fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<(), ArtifactError> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| ArtifactError::Json { path: path.display().to_string(), source: e })?;
    let mut file = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    file.write_all(body.as_bytes()).and_then(|_| file.write_all(b"\n")).map_err(|e| io_err(&path, e))
}

pub fn ensure_dir(path: &Path) -> Result<(), ArtifactError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}
