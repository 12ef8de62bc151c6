use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header line every item file starts with.
pub const ITEM_HEADER: &str = "#file onset offset #phone prev-phone next-phone speaker";

/// One triphone occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSegment {
    pub utt: String,
    /// Seconds.
    pub onset: f64,
    /// Seconds, strictly after `onset`.
    pub offset: f64,
    pub phone: String,
    pub prev: String,
    pub next: String,
    pub speaker: String,
}

impl ItemSegment {
    pub fn context(&self) -> (&str, &str) {
        (&self.prev, &self.next)
    }
}

pub fn load_item_file(path: &Path) -> Result<Vec<ItemSegment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_items(path, &text)
}

pub fn parse_items(path: &Path, text: &str) -> Result<Vec<ItemSegment>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == ITEM_HEADER => {}
        _ => {
            return Err(Error::format(
                path,
                format!("first line must be `{ITEM_HEADER}`"),
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 7 {
            return Err(Error::row(
                path,
                lineno,
                format!("expected 7 columns, found {}", cols.len()),
            ));
        }
        let time = |s: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::row(path, lineno, format!("non-numeric time `{s}`"))),
            }
        };
        let onset = time(cols[1])?;
        let offset = time(cols[2])?;
        if onset < 0.0 {
            return Err(Error::row(path, lineno, format!("negative onset {onset}")));
        }
        if offset <= onset {
            return Err(Error::row(
                path,
                lineno,
                format!("offset {offset} is not after onset {onset}"),
            ));
        }
        out.push(ItemSegment {
            utt: cols[0].to_string(),
            onset,
            offset,
            phone: cols[3].to_string(),
            prev: cols[4].to_string(),
            next: cols[5].to_string(),
            speaker: cols[6].to_string(),
        });
    }
    Ok(out)
}

/// Renders segments in item-file format, times with microsecond precision.
pub fn write_items(segments: &[ItemSegment]) -> String {
    let mut out = String::from(ITEM_HEADER);
    out.push('\n');
    for s in segments {
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {} {} {} {}",
            s.utt, s.onset, s.offset, s.phone, s.prev, s.next, s.speaker
        );
    }
    out
}
