use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpan {
    pub onset: f64,
    pub offset: f64,
    pub label: String,
}

/// Time-aligned labels of one utterance; spans are onset-sorted and disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabelTrack {
    pub utt: String,
    pub spans: Vec<LabelSpan>,
}

pub fn load_label_tracks(path: &Path) -> Result<Vec<FrameLabelTrack>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_label_tracks(path, &text)
}

/// Parses `utt<TAB>onset<TAB>offset<TAB>label` rows into one track per
/// utterance, ordered by utterance id.
pub fn parse_label_tracks(path: &Path, text: &str) -> Result<Vec<FrameLabelTrack>> {
    let mut by_utt: BTreeMap<String, Vec<LabelSpan>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::row(
                path,
                lineno,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let time = |s: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                _ => Err(Error::row(path, lineno, format!("bad time `{s}`"))),
            }
        };
        let onset = time(cols[1])?;
        let offset = time(cols[2])?;
        if offset <= onset {
            return Err(Error::row(
                path,
                lineno,
                format!("offset {offset} is not after onset {onset}"),
            ));
        }
        by_utt.entry(cols[0].to_string()).or_default().push(LabelSpan {
            onset,
            offset,
            label: cols[3].to_string(),
        });
    }

    let mut tracks = Vec::with_capacity(by_utt.len());
    for (utt, mut spans) in by_utt {
        spans.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        for w in spans.windows(2) {
            if w[1].onset < w[0].offset {
                return Err(Error::Overlap {
                    utt,
                    a_onset: w[0].onset,
                    a_offset: w[0].offset,
                    b_onset: w[1].onset,
                    b_offset: w[1].offset,
                });
            }
        }
        tracks.push(FrameLabelTrack { utt, spans });
    }
    Ok(tracks)
}

pub fn write_label_tracks(tracks: &[FrameLabelTrack]) -> String {
    let mut out = String::new();
    for t in tracks {
        for s in &t.spans {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{}", t.utt, s.onset, s.offset, s.label);
        }
    }
    out
}
