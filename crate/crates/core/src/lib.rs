//! Frame-level speech representation analysis.
//!
//! The crate scores feature archives on ABX discriminability tasks (phone and
//! articulatory-feature categories, within and across speakers), analyses
//! cross-lingual label quality through frame confusion matrices, generates
//! synthetic oracle corpora and trains a small autoregressive predictive
//! coding (APC) model whose top layer can be extracted as a new feature
//! archive.
//!
//! ```text
//! corpus  ──► segments ──► task cells ──► DTW/cosine ──► cell scores ──► report
//!                                                         (rayon)       (sorted fold)
//! ```

pub mod abx;
pub mod analysis;
pub mod apc;
pub mod corpus;
pub mod digest;
pub mod distance;
pub mod error;
pub mod report;
pub mod svg;
pub mod synth;

pub use abx::{
    aggregate, build_cells, pairwise_score, score_corpus, AbxReport, CellLimits, CellScore,
    SpeakerMode, TaskCell, TaskKind,
};
pub use corpus::{
    load_af_table, load_feature_archive, load_item_file, load_label_tracks, segment_frames,
    AfTable, FeatureArchive, FeatureFormat, FrameLabelTrack, FrameMatrix, ItemSegment,
};
pub use distance::{cosine_distance, dtw_dissimilarity, DtwConfig};
pub use error::{Error, Result};
