//! Self-describing text container shared by grid, mask and sweep artifacts.
//!
//! Layout (UTF-8, `\n` line endings):
//!
//! ```text
//! springmass-artifact <kind> <version>
//! <header: TOML document, any number of lines>
//! ---
//! <row 0: comma-separated numbers>
//! <row 1>
//! ...
//! sha256 <64 lowercase hex digits>
//! ```
//!
//! The digest covers every byte before the `sha256` line. Numbers are written
//! with Rust's shortest round-trip `f64` formatting, so a load reproduces the
//! saved values exactly. A file whose trailer is missing or whose digest does
//! not match is rejected.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &str = "springmass-artifact";
pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &str = "---";
const TRAILER: &str = "sha256 ";

/// Decoded artifact: its kind tag, TOML header text and numeric payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub kind: String,
    pub version: u32,
    pub header: String,
    pub rows: Vec<Vec<f64>>,
}

impl Artifact {
    pub fn new<H: Serialize>(kind: &str, header: &H, rows: Vec<Vec<f64>>) -> Result<Self> {
        let header =
            toml::to_string(header).map_err(|e| Error::Format(format!("header encode: {e}")))?;
        Ok(Self {
            kind: kind.to_owned(),
            version: FORMAT_VERSION,
            header,
            rows,
        })
    }

    pub fn header_as<H: DeserializeOwned>(&self) -> Result<H> {
        toml::from_str(&self.header).map_err(|e| Error::Format(format!("header decode: {e}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected a `{kind}` artifact, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> String {
        let mut body = format!("{MAGIC} {} {}\n", self.kind, self.version);
        body.push_str(&self.header);
        if !self.header.ends_with('\n') {
            body.push('\n');
        }
        body.push_str(SEPARATOR);
        body.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    body.push(',');
                }
                first = false;
                body.push_str(&format_number(*v));
            }
            body.push('\n');
        }
        let digest = sha256_hex(body.as_bytes());
        body.push_str(TRAILER);
        body.push_str(&digest);
        body.push('\n');
        body
    }

    pub fn decode(text: &str) -> Result<Self> {
        let first_line = text.lines().next().unwrap_or_default();
        let mut parts = first_line.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format("missing artifact magic line".into()));
        }
        let kind = parts
            .next()
            .ok_or_else(|| Error::Format("missing artifact kind".into()))?
            .to_owned();
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("missing artifact version".into()))?;
        if version > FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }

        // A complete file ends with the trailer's newline.
        let trimmed = text.strip_suffix('\n').ok_or(Error::ChecksumMissing)?;
        let trailer_at = trimmed.rfind('\n').map(|i| i + 1).unwrap_or(0);
        let last_line = &trimmed[trailer_at..];
        let expected = last_line
            .strip_prefix(TRAILER)
            .filter(|h| h.len() == 64 && h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or(Error::ChecksumMissing)?;
        let actual = sha256_hex(&text.as_bytes()[..trailer_at]);
        if actual != expected {
            return Err(Error::ChecksumMismatch {
                expected: expected.to_owned(),
                actual,
            });
        }

        let content = &text[first_line.len() + 1..trailer_at];
        let mut header = String::new();
        let mut lines = content.lines();
        let mut saw_separator = false;
        for line in lines.by_ref() {
            if line == SEPARATOR {
                saw_separator = true;
                break;
            }
            header.push_str(line);
            header.push('\n');
        }
        if !saw_separator {
            return Err(Error::Format("missing header separator".into()));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                rows.push(Vec::new());
                continue;
            }
            let row = line
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {n}: bad number `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self {
            kind,
            version,
            header,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::decode(&text)
    }
}

fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        // "-1" rather than "-1.0" keeps outcome codes readable.
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file on disk.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}
