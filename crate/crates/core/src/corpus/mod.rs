//! Loading and validation of feature archives, item files, frame label
//! tracks and articulatory-feature tables.

mod af;
mod archive;
pub mod inventory;
mod items;
mod labels;

pub use af::{load_af_table, AfClass, AfTable, BUILTIN_AF_TABLES};
pub use archive::{
    decode_fbin, encode_fbin, load_feature_archive, FeatureArchive, FeatureFormat, FrameMatrix,
    FBIN_EXTENSION, FTXT_EXTENSION,
};
pub use items::{load_item_file, parse_items, write_items, ItemSegment, ITEM_HEADER};
pub use labels::{load_label_tracks, parse_label_tracks, write_label_tracks, FrameLabelTrack, LabelSpan};

use std::ops::Range;

use crate::error::{Error, Result};

/// Boundary context marker used in item files.
pub const BOUNDARY: &str = "SIL";

/// Quantizes a time in seconds to whole microseconds.
pub fn seconds_to_us(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

/// Frame index of a time point with round-half-up semantics.
pub fn time_to_frame(seconds: f64, frame_period_us: u32) -> usize {
    let us = seconds_to_us(seconds).max(0) as u64;
    let period = u64::from(frame_period_us);
    ((us + period / 2) / period) as usize
}

/// Frame range `[start, end)` covered by `[onset, offset)` before any
/// clamping or minimum-length extension.
pub fn raw_frame_range(onset: f64, offset: f64, frame_period_us: u32) -> Range<usize> {
    time_to_frame(onset, frame_period_us)..time_to_frame(offset, frame_period_us)
}

/// Frame range of a segment inside an utterance of `nframes` frames.
///
/// The end is clamped to `nframes`; a range that rounds to zero length is
/// widened to one frame when it starts inside the utterance.
pub fn segment_range(
    utt: &str,
    onset: f64,
    offset: f64,
    frame_period_us: u32,
    nframes: usize,
) -> Result<Range<usize>> {
    let raw = raw_frame_range(onset, offset, frame_period_us);
    let start = raw.start;
    let mut end = raw.end.min(nframes);
    if end <= start {
        if start < nframes {
            end = start + 1;
        } else {
            return Err(Error::EmptySegment {
                utt: utt.to_string(),
                onset,
                offset,
                nframes,
            });
        }
    }
    Ok(start..end)
}

/// Frames of one item segment.
pub fn segment_frames(seg: &ItemSegment, archive: &FeatureArchive) -> Result<FrameMatrix> {
    let matrix = archive
        .get(&seg.utt)
        .ok_or_else(|| Error::Lookup(seg.utt.clone()))?;
    let range = segment_range(
        &seg.utt,
        seg.onset,
        seg.offset,
        archive.frame_period_us(),
        matrix.nframes(),
    )?;
    Ok(matrix.slice_rows(range))
}
