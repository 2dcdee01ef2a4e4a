//! Reading configs, event streams and series files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lobshape::orderflow::EventStream;
use lobshape::{BookDelta, BookError, LimitOrderBook, OrderEvent, SessionConfig, StreamReport};
use serde::Serialize;

use crate::manifest::{sha256_hex, HashingReader, InputDigest};

/// Loads the session config and returns it with its canonical TOML text.
pub fn load_config(path: Option<&Path>) -> Result<(SessionConfig, String)> {
    let config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            SessionConfig::from_toml_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => SessionConfig::default(),
    };
    let canonical = config.to_toml_string();
    Ok((config, canonical))
}

fn book_error_kind(e: &BookError) -> &'static str {
    match e {
        BookError::CancelUnknown(_) => "cancel_unknown",
        BookError::DuplicateRef(_) => "duplicate_ref",
        BookError::ZeroSize(_) => "zero_size",
        BookError::OutOfBand { .. } => "out_of_band",
        BookError::NoLiquidity(_) => "no_liquidity",
    }
}

/// Summary of one pass of an event file through the book.
#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub stream: StreamReport,
    /// Events that parsed but could not be applied, by reason.
    pub book_errors: BTreeMap<&'static str, u64>,
    pub applied_events: u64,
    #[serde(skip)]
    pub input: InputDigest,
}

/// Streams an event file through a fresh book, calling `on_event` after every
/// event that was applied. Parse rejections and book errors are tallied; the
/// final book is returned with the summary.
pub fn replay(
    path: &Path,
    config: &SessionConfig,
    mut on_event: impl FnMut(&LimitOrderBook, &OrderEvent, &BookDelta) -> Result<()>,
) -> Result<(ReplaySummary, LimitOrderBook)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::with_capacity(1 << 16, HashingReader::new(file));
    let mut book = LimitOrderBook::new(config);
    let mut book_errors = BTreeMap::new();
    let mut applied = 0;
    let mut stream = EventStream::new(&mut reader, config);
    for event in stream.by_ref() {
        let event = event.with_context(|| format!("reading {}", path.display()))?;
        match book.apply_event(&event) {
            Ok(delta) => {
                applied += 1;
                on_event(&book, &event, &delta)?;
            }
            Err(e) => *book_errors.entry(book_error_kind(&e)).or_insert(0) += 1,
        }
    }
    let stream = stream.into_report();
    let summary = ReplaySummary {
        stream,
        book_errors,
        applied_events: applied,
        input: InputDigest {
            path: path.display().to_string(),
            sha256: reader.get_ref().hex_digest(),
        },
    };
    Ok((summary, book))
}

/// Reads the last column of a numeric CSV such as `interval_index,value`.
/// A non-numeric first line is taken as a header.
pub fn read_series(path: &Path) -> Result<(Vec<f64>, InputDigest)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if i == 0 => continue,
            _ => bail!("{}:{}: non-numeric value {field:?}", path.display(), i + 1),
        }
    }
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((values, digest))
}

/// First non-empty line of a file, used to tell shape tables from event files.
pub fn first_line(path: &Path) -> Result<String> {
    use std::io::BufRead;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if !line.trim().is_empty() {
            return Ok(line);
        }
    }
    Ok(String::new())
}
