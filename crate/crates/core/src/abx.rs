//! ABX task construction, scoring and aggregation.
//!
//! A cell holds segment sets for one category pair in one triphone context,
//! either from a single speaker (within) or with A/B drawn from one speaker
//! and X from another (across). Each cell is scored independently; the
//! report folds cell scores over speakers, then contexts, then category
//! pairs, always in sorted key order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment_frames, AfClass, AfTable, FeatureArchive, FrameMatrix, ItemSegment};
use crate::digest;
use crate::distance::{dtw_prepared, DtwConfig, PreparedFrames};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Phone,
    Af,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerMode {
    Within,
    Across,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Phone => "phone",
            TaskKind::Af => "af",
        })
    }
}

impl std::fmt::Display for SpeakerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpeakerMode::Within => "within",
            SpeakerMode::Across => "across",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phone" => Ok(TaskKind::Phone),
            "af" => Ok(TaskKind::Af),
            _ => Err(Error::Argument(format!("unknown task `{s}`"))),
        }
    }
}

impl std::str::FromStr for SpeakerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(SpeakerMode::Within),
            "across" => Ok(SpeakerMode::Across),
            _ => Err(Error::Argument(format!("unknown speaker mode `{s}`"))),
        }
    }
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLimits {
    /// Cap on ordered speaker pairs per (context, category pair), across mode only.
    pub max_speaker_pairs_per_context: Option<usize>,
    pub seed: u64,
}

impl Default for CellLimits {
    fn default() -> Self {
        CellLimits {
            max_speaker_pairs_per_context: None,
            seed: DEFAULT_SEED,
        }
    }
}

/// Identity of a cell; the derived ordering is the aggregation order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub category_x: String,
    pub category_y: String,
    pub context_prev: String,
    pub context_next: String,
    /// Speaker of A and B (and of X in within mode).
    pub speaker_ab: String,
    /// Speaker of X.
    pub speaker_x: String,
}

/// One ABX scoring unit. Segment sets hold indices into the segment list
/// the cell was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCell {
    pub kind: TaskKind,
    pub mode: SpeakerMode,
    pub key: CellKey,
    pub x_ab: Vec<usize>,
    pub y_ab: Vec<usize>,
    /// X draws of category x; same as `x_ab` in within mode.
    pub x_x: Vec<usize>,
    /// X draws of category y, used when the roles are swapped.
    pub y_x: Vec<usize>,
}

impl TaskCell {
    /// The same cell with the two categories exchanged.
    pub fn swapped(&self) -> TaskCell {
        let mut key = self.key.clone();
        std::mem::swap(&mut key.category_x, &mut key.category_y);
        TaskCell {
            kind: self.kind,
            mode: self.mode,
            key,
            x_ab: self.y_ab.clone(),
            y_ab: self.x_ab.clone(),
            x_x: self.y_x.clone(),
            y_x: self.x_x.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub key: CellKey,
    pub eta_xy: f64,
    pub eta_yx: f64,
    pub epsilon: f64,
    pub n_comparisons: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    pub cells: Vec<TaskCell>,
    /// Candidate cells rejected for insufficient segments.
    pub skipped: usize,
    /// Speaker pairs removed by subsampling.
    pub dropped_speaker_pairs: usize,
}

type Context = (String, String);
type Groups = BTreeMap<Context, BTreeMap<String, BTreeMap<String, Vec<usize>>>>;

fn category_of<'a>(
    seg: &'a ItemSegment,
    kind: TaskKind,
    table: Option<&'a AfTable>,
) -> std::result::Result<Option<&'a str>, ()> {
    match kind {
        TaskKind::Phone => Ok(Some(&seg.phone)),
        TaskKind::Af => match table.expect("af task requires a table").lookup(&seg.phone) {
            AfClass::Attribute(a) => Ok(Some(a)),
            AfClass::Excluded => Ok(None),
            AfClass::Unmapped => Err(()),
        },
    }
}

fn group_segments(
    segments: &[ItemSegment],
    kind: TaskKind,
    af_table: Option<&AfTable>,
) -> Result<Groups> {
    match (kind, af_table) {
        (TaskKind::Af, None) => {
            return Err(Error::Argument("the af task needs an AF table".into()))
        }
        (TaskKind::Phone, Some(_)) => {
            return Err(Error::Argument("an AF table is only valid for the af task".into()))
        }
        _ => {}
    }
    let mut groups: Groups = BTreeMap::new();
    let mut unmapped = BTreeSet::new();
    for (i, seg) in segments.iter().enumerate() {
        match category_of(seg, kind, af_table) {
            Ok(Some(cat)) => groups
                .entry((seg.prev.clone(), seg.next.clone()))
                .or_default()
                .entry(seg.speaker.clone())
                .or_default()
                .entry(cat.to_string())
                .or_default()
                .push(i),
            Ok(None) => {}
            Err(()) => {
                unmapped.insert(seg.phone.clone());
            }
        }
    }
    if !unmapped.is_empty() {
        return Err(Error::UnmappedPhones {
            table: af_table.map(|t| t.feature_name().to_string()).unwrap_or_default(),
            phones: unmapped.into_iter().collect(),
        });
    }
    Ok(groups)
}

fn subsample_seed(seed: u64, ctx: &Context, x: &str, y: &str) -> u64 {
    let tag = digest::sha256_hex(format!("{}\u{1f}{}\u{1f}{x}\u{1f}{y}", ctx.0, ctx.1).as_bytes());
    seed ^ u64::from_str_radix(&tag[..16], 16).expect("hex digest")
}

/// Builds every valid cell for the given speaker mode and task kind.
pub fn build_cells(
    segments: &[ItemSegment],
    mode: SpeakerMode,
    kind: TaskKind,
    af_table: Option<&AfTable>,
    limits: &CellLimits,
) -> Result<CellSet> {
    let groups = group_segments(segments, kind, af_table)?;
    let mut cells = Vec::new();
    let mut skipped = 0;
    let mut dropped = 0;
    let empty = Vec::new();

    for (ctx, by_speaker) in &groups {
        match mode {
            SpeakerMode::Within => {
                for (spk, by_cat) in by_speaker {
                    let cats: Vec<&String> = by_cat.keys().collect();
                    for (i, x) in cats.iter().enumerate() {
                        for y in &cats[i + 1..] {
                            let (sx, sy) = (&by_cat[*x], &by_cat[*y]);
                            if sx.len() < 2 || sy.len() < 2 {
                                skipped += 1;
                                continue;
                            }
                            cells.push(TaskCell {
                                kind,
                                mode,
                                key: CellKey {
                                    category_x: (*x).clone(),
                                    category_y: (*y).clone(),
                                    context_prev: ctx.0.clone(),
                                    context_next: ctx.1.clone(),
                                    speaker_ab: spk.clone(),
                                    speaker_x: spk.clone(),
                                },
                                x_ab: sx.clone(),
                                y_ab: sy.clone(),
                                x_x: sx.clone(),
                                y_x: sy.clone(),
                            });
                        }
                    }
                }
            }
            SpeakerMode::Across => {
                let cats: BTreeSet<&String> = by_speaker.values().flat_map(|m| m.keys()).collect();
                let cats: Vec<&String> = cats.into_iter().collect();
                for (i, x) in cats.iter().enumerate() {
                    for y in &cats[i + 1..] {
                        let mut valid = Vec::new();
                        for (s_ab, ab) in by_speaker {
                            if !(ab.contains_key(*x) && ab.contains_key(*y)) {
                                continue;
                            }
                            for (s_x, xs) in by_speaker {
                                if s_x == s_ab {
                                    continue;
                                }
                                match (xs.contains_key(*x), xs.contains_key(*y)) {
                                    (true, true) => valid.push((s_ab, s_x)),
                                    (false, false) => {}
                                    _ => skipped += 1,
                                }
                            }
                        }
                        if let Some(k) = limits.max_speaker_pairs_per_context {
                            if valid.len() > k {
                                let mut rng =
                                    ChaCha8Rng::seed_from_u64(subsample_seed(limits.seed, ctx, x, y));
                                valid.shuffle(&mut rng);
                                dropped += valid.len() - k;
                                valid.truncate(k);
                                valid.sort();
                            }
                        }
                        for (s_ab, s_x) in valid {
                            let get = |s: &String, c: &String| {
                                by_speaker[s].get(c).unwrap_or(&empty).clone()
                            };
                            cells.push(TaskCell {
                                kind,
                                mode,
                                key: CellKey {
                                    category_x: (*x).clone(),
                                    category_y: (*y).clone(),
                                    context_prev: ctx.0.clone(),
                                    context_next: ctx.1.clone(),
                                    speaker_ab: s_ab.clone(),
                                    speaker_x: s_x.clone(),
                                },
                                x_ab: get(s_ab, x),
                                y_ab: get(s_ab, y),
                                x_x: get(s_x, x),
                                y_x: get(s_x, y),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(CellSet {
        cells,
        skipped,
        dropped_speaker_pairs: dropped,
    })
}

/// η(x→y) over segment indices, given a dissimilarity `d(candidate, probe)`.
///
/// Within mode requires `probes == a_set` and skips `X = A`; across mode
/// uses every probe. Errors count 2 half-units and ties 1, so the sum is
/// exact and independent of iteration order.
pub fn asymmetric_score_with<D>(
    mode: SpeakerMode,
    a_set: &[usize],
    b_set: &[usize],
    probes: &[usize],
    mut d: D,
) -> Result<(f64, u64)>
where
    D: FnMut(usize, usize) -> Result<f64>,
{
    let denom = match mode {
        SpeakerMode::Within => {
            if probes != a_set {
                return Err(Error::Argument(
                    "within mode draws X from the A set".into(),
                ));
            }
            if a_set.len() < 2 || b_set.is_empty() {
                return Err(Error::Argument(format!(
                    "within mode needs |S(x)| >= 2 and |S(y)| >= 1, got {} and {}",
                    a_set.len(),
                    b_set.len()
                )));
            }
            a_set.len() * (a_set.len() - 1) * b_set.len()
        }
        SpeakerMode::Across => {
            if a_set.is_empty() || b_set.is_empty() || probes.is_empty() {
                return Err(Error::Argument("across mode needs non-empty sets".into()));
            }
            if probes.iter().any(|p| a_set.contains(p) || b_set.contains(p)) {
                return Err(Error::Argument("X set overlaps the A/B sets".into()));
            }
            a_set.len() * b_set.len() * probes.len()
        }
    };
    let mut half_units: u64 = 0;
    for &a in a_set {
        for &b in b_set {
            for &x in probes {
                if mode == SpeakerMode::Within && x == a {
                    continue;
                }
                let dax = d(a, x)?;
                let dbx = d(b, x)?;
                if dax > dbx {
                    half_units += 2;
                } else if dax == dbx {
                    half_units += 1;
                }
            }
        }
    }
    Ok((half_units as f64 / (2 * denom) as f64, denom as u64))
}

/// η(x→y) computed on frame matrices indexed by segment position.
pub fn asymmetric_score(
    mode: SpeakerMode,
    a_set: &[usize],
    b_set: &[usize],
    probes: &[usize],
    frames: &[FrameMatrix],
    cfg: &DtwConfig,
) -> Result<f64> {
    let prepared: HashMap<usize, PreparedFrames<'_>> = a_set
        .iter()
        .chain(b_set)
        .chain(probes)
        .map(|&i| {
            frames
                .get(i)
                .map(|f| (i, PreparedFrames::new(f)))
                .ok_or_else(|| Error::Argument(format!("segment index {i} out of range")))
        })
        .collect::<Result<_>>()?;
    asymmetric_score_with(mode, a_set, b_set, probes, |a, x| {
        Ok(dtw_prepared(&prepared[&a], &prepared[&x], cfg))
    })
    .map(|(eta, _)| eta)
}

/// ε(x, y) of one cell, with DTW values memoized per ordered segment pair.
pub fn pairwise_score(
    cell: &TaskCell,
    frames: &[PreparedFrames<'_>],
    cfg: &DtwConfig,
) -> Result<CellScore> {
    let mut memo: HashMap<(usize, usize), f64> = HashMap::new();
    let mut d = |a: usize, x: usize| -> Result<f64> {
        if let Some(&v) = memo.get(&(a, x)) {
            return Ok(v);
        }
        let (fa, fx) = match (frames.get(a), frames.get(x)) {
            (Some(fa), Some(fx)) => (fa, fx),
            _ => return Err(Error::Argument("segment index out of range".into())),
        };
        let v = dtw_prepared(fa, fx, cfg);
        memo.insert((a, x), v);
        Ok(v)
    };
    let (eta_xy, n1) = asymmetric_score_with(cell.mode, &cell.x_ab, &cell.y_ab, &cell.x_x, &mut d)?;
    let (eta_yx, n2) = asymmetric_score_with(cell.mode, &cell.y_ab, &cell.x_ab, &cell.y_x, &mut d)?;
    Ok(CellScore {
        key: cell.key.clone(),
        eta_xy,
        eta_yx,
        epsilon: (eta_xy + eta_yx) / 2.0,
        n_comparisons: n1 + n2,
    })
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub af_table: Option<String>,
    pub max_speaker_pairs_per_context: Option<usize>,
    /// Across-speaker cells are averaged over ordered (A/B speaker, X speaker) pairs.
    pub speaker_pairs: String,
    pub zero_vector_distance: f64,
    pub n_cells: usize,
    pub skipped_cells: usize,
    pub dropped_speaker_pairs: usize,
    pub n_comparisons: u64,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        ReportMetadata {
            config_hash: String::new(),
            seed: DEFAULT_SEED,
            af_table: None,
            max_speaker_pairs_per_context: None,
            speaker_pairs: "ordered".into(),
            zero_vector_distance: 1.0,
            n_cells: 0,
            skipped_cells: 0,
            dropped_speaker_pairs: 0,
            n_comparisons: 0,
        }
    }
}

pub type CategoryPair = (String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct AbxReport {
    pub task: TaskKind,
    pub condition: SpeakerMode,
    /// Error rate per unordered category pair (x < y).
    pub pairwise: BTreeMap<CategoryPair, f64>,
    /// Error rate per category pair and context, before context averaging.
    pub contexts: BTreeMap<(CategoryPair, Context), f64>,
    pub overall: f64,
    pub per_cell: Option<Vec<CellScore>>,
    pub metadata: ReportMetadata,
}

/// Folds cell scores into pairwise and overall rates.
///
/// Cells sharing a category pair and context are averaged first (speaker
/// level), then contexts per pair, then pairs. Pair keys are normalized so
/// that `x < y`.
pub fn aggregate(
    per_cell: &[CellScore],
    task: TaskKind,
    condition: SpeakerMode,
) -> Result<AbxReport> {
    if per_cell.is_empty() {
        return Err(Error::EmptyTask { skipped: 0 });
    }
    let mut by_ctx: BTreeMap<(CategoryPair, Context), BTreeMap<(String, String), f64>> =
        BTreeMap::new();
    for s in per_cell {
        let k = &s.key;
        let pair = if k.category_x <= k.category_y {
            (k.category_x.clone(), k.category_y.clone())
        } else {
            (k.category_y.clone(), k.category_x.clone())
        };
        by_ctx
            .entry((pair, (k.context_prev.clone(), k.context_next.clone())))
            .or_default()
            .insert((k.speaker_ab.clone(), k.speaker_x.clone()), s.epsilon);
    }
    let contexts: BTreeMap<_, f64> = by_ctx
        .into_iter()
        .map(|(k, spk)| (k, mean(spk.values().copied())))
        .collect();

    let mut by_pair: BTreeMap<CategoryPair, Vec<f64>> = BTreeMap::new();
    for ((pair, _), v) in &contexts {
        by_pair.entry(pair.clone()).or_default().push(*v);
    }
    let pairwise: BTreeMap<CategoryPair, f64> = by_pair
        .into_iter()
        .map(|(k, v)| (k, mean(v.into_iter())))
        .collect();
    let overall = mean(pairwise.values().copied());

    let mut cells = per_cell.to_vec();
    cells.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(AbxReport {
        task,
        condition,
        pairwise,
        contexts,
        overall,
        metadata: ReportMetadata {
            n_cells: cells.len(),
            n_comparisons: cells.iter().map(|c| c.n_comparisons).sum(),
            ..ReportMetadata::default()
        },
        per_cell: Some(cells),
    })
}

/// Everything [`score_corpus`] needs besides the data.
#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub mode: SpeakerMode,
    pub kind: TaskKind,
    pub af_table: Option<AfTable>,
    pub dtw: DtwConfig,
    pub limits: CellLimits,
    /// Worker threads for cell scoring; 0 uses rayon's default.
    pub jobs: usize,
}

impl ScoreOptions {
    pub fn new(mode: SpeakerMode, kind: TaskKind) -> Self {
        ScoreOptions {
            mode,
            kind,
            af_table: None,
            dtw: DtwConfig::default(),
            limits: CellLimits::default(),
            jobs: 0,
        }
    }

    /// Digest of every setting that can change the scores.
    pub fn config_hash(&self) -> String {
        let table = self.af_table.as_ref().map(|t| {
            serde_json::json!({
                "name": t.feature_name(),
                "entries": t.entries().collect::<Vec<_>>(),
                "excluded": t.excluded().collect::<Vec<_>>(),
            })
        });
        let v = serde_json::json!({
            "mode": self.mode,
            "kind": self.kind,
            "af_table": table,
            "zero_vector_distance": self.dtw.zero_vector_distance,
            "max_speaker_pairs_per_context": self.limits.max_speaker_pairs_per_context,
            "seed": self.limits.seed,
        });
        digest::sha256_hex(v.to_string().as_bytes())
    }
}

/// Builds cells, scores them in parallel and aggregates the result.
///
/// The report is bit-identical for any value of `opts.jobs`.
pub fn score_corpus(
    archive: &FeatureArchive,
    segments: &[ItemSegment],
    opts: &ScoreOptions,
) -> Result<AbxReport> {
    if let Some(seg) = segments.iter().find(|s| archive.get(&s.utt).is_none()) {
        return Err(Error::Lookup(seg.utt.clone()));
    }
    let set = build_cells(
        segments,
        opts.mode,
        opts.kind,
        opts.af_table.as_ref(),
        &opts.limits,
    )?;
    if set.cells.is_empty() {
        return Err(Error::EmptyTask {
            skipped: set.skipped,
        });
    }

    let used: BTreeSet<usize> = set
        .cells
        .iter()
        .flat_map(|c| c.x_ab.iter().chain(&c.y_ab).chain(&c.x_x).chain(&c.y_x))
        .copied()
        .collect();
    let mut frames: Vec<Option<FrameMatrix>> = vec![None; segments.len()];
    for &i in &used {
        frames[i] = Some(segment_frames(&segments[i], archive)?);
    }
    // Unused slots get a placeholder so indices stay aligned.
    let placeholder = FrameMatrix::new(archive.dim(), vec![0.0; archive.dim()])?;
    let prepared: Vec<PreparedFrames<'_>> = frames
        .iter()
        .map(|f| PreparedFrames::new(f.as_ref().unwrap_or(&placeholder)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let scores = pool.install(|| {
        set.cells
            .par_iter()
            .map(|c| pairwise_score(c, &prepared, &opts.dtw))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut report = aggregate(&scores, opts.kind, opts.mode)?;
    report.metadata.config_hash = opts.config_hash();
    report.metadata.seed = opts.limits.seed;
    report.metadata.af_table = opts.af_table.as_ref().map(|t| t.feature_name().to_string());
    report.metadata.max_speaker_pairs_per_context = opts.limits.max_speaker_pairs_per_context;
    report.metadata.zero_vector_distance = opts.dtw.zero_vector_distance;
    report.metadata.skipped_cells = set.skipped;
    report.metadata.dropped_speaker_pairs = set.dropped_speaker_pairs;
    Ok(report)
}
