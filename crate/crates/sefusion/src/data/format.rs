//! The feature-file format: one JSON header line declaring the feature
//! widths, then one JSON record per line. Numbers round-trip exactly through
//! the shortest-decimal encoding. A gzip-compressed variant is detected by
//! magic bytes on read and selected by a `.gz` suffix on write.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "sefusion-features";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    text_dim: usize,
    image_dim: usize,
}

fn data_err(origin: Option<&Path>, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        path: origin.map(Path::to_path_buf),
        line: Some(line),
        message: message.into(),
    }
}

/// Parses feature-file bytes, transparently inflating gzip input.
/// A file with no content lines is an empty dataset.
pub fn parse_dataset(bytes: &[u8], origin: Option<&Path>) -> Result<Dataset> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut inflated = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut inflated)
            .map_err(|e| data_err(origin, 1, format!("invalid gzip stream: {e}")))?;
        if inflated.starts_with(&[0x1f, 0x8b]) {
            return Err(data_err(origin, 1, "nested gzip input is not supported"));
        }
        return parse_dataset(&inflated, origin);
    }

    let text = std::str::from_utf8(bytes)
        .map_err(|e| data_err(origin, 1, format!("input is not UTF-8: {e}")))?;

    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let parsed: Header = serde_json::from_str(line)
                    .map_err(|e| data_err(origin, line_no, format!("invalid header: {e}")))?;
                if parsed.format != FORMAT_NAME {
                    return Err(data_err(
                        origin,
                        line_no,
                        format!("unknown format `{}`", parsed.format),
                    ));
                }
                if parsed.version != FORMAT_VERSION {
                    return Err(data_err(
                        origin,
                        line_no,
                        format!(
                            "unsupported version {} (this build reads version {FORMAT_VERSION})",
                            parsed.version
                        ),
                    ));
                }
                header = Some(parsed);
            }
            Some(_) => {
                let record: Record = serde_json::from_str(line)
                    .map_err(|e| data_err(origin, line_no, format!("invalid record: {e}")))?;
                records.push(record);
            }
        }
    }

    match header {
        None => Ok(Dataset::default()),
        Some(h) => {
            Dataset::new(h.text_dim, h.image_dim, records).map_err(|e| match e {
                Error::Data { message, .. } => Error::Data {
                    path: origin.map(Path::to_path_buf),
                    line: None,
                    message,
                },
                other => other,
            })
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&bytes, Some(path))
}

pub fn dataset_to_string(dataset: &Dataset) -> String {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        text_dim: dataset.text_dim,
        image_dim: dataset.image_dim,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for record in &dataset.records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes the dataset, gzip-compressed when the path ends in `.gz`.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = dataset_to_string(dataset);
    if path.extension().is_some_and(|e| e == "gz") {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = GzEncoder::new(file, Compression::default());
        encoder
            .write_all(text.as_bytes())
            .and_then(|_| encoder.finish().map(|_| ()))
            .map_err(|e| Error::io(path, e))?;
    } else {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
