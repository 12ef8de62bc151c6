//! Phoneme-level and attribute-level aggregation of pairwise ABX rates,
//! frame confusion matrices between reference phonemes and hypothesis
//! labels, and the relative-reduction / correlation summaries built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::abx::CategoryPair;
use crate::corpus::inventory::{classify, PhoneClass};
use crate::corpus::{raw_frame_range, FrameLabelTrack};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeRate {
    pub xi: f64,
    /// Number of scorable partner phonemes averaged over.
    pub n_pairs: usize,
    pub class: Option<PhoneClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeReport {
    pub phonemes: BTreeMap<String, PhonemeRate>,
    /// Inventory phonemes with no scorable pair.
    pub excluded: Vec<String>,
    /// Unordered inventory pairs absent from the input.
    pub missing_pairs: usize,
}

fn incident_means(
    pairwise: &BTreeMap<CategoryPair, f64>,
    symbols: &BTreeSet<&str>,
) -> BTreeMap<String, (f64, usize)> {
    let mut acc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for ((a, b), v) in pairwise {
        if a == b || !symbols.contains(a.as_str()) || !symbols.contains(b.as_str()) {
            continue;
        }
        acc.entry(a).or_default().push(*v);
        acc.entry(b).or_default().push(*v);
    }
    acc.into_iter()
        .map(|(k, v)| {
            let n = v.len();
            (k.to_string(), (v.into_iter().sum::<f64>() / n as f64, n))
        })
        .collect()
}

/// ξ(ω): mean pairwise rate of ω against every other inventory phoneme,
/// over the pairs present in `pairwise`.
pub fn phoneme_level_rates(
    pairwise: &BTreeMap<CategoryPair, f64>,
    inventory: &[&str],
) -> PhonemeReport {
    let symbols: BTreeSet<&str> = inventory.iter().copied().collect();
    // BTreeMap iteration sorts by key, so partner order is fixed regardless
    // of how the caller built the map.
    let normalized: BTreeMap<CategoryPair, f64> = pairwise
        .iter()
        .map(|((a, b), v)| {
            if a <= b {
                ((a.clone(), b.clone()), *v)
            } else {
                ((b.clone(), a.clone()), *v)
            }
        })
        .collect();
    let means = incident_means(&normalized, &symbols);
    let phonemes: BTreeMap<String, PhonemeRate> = means
        .into_iter()
        .map(|(p, (xi, n))| {
            let class = classify(&p);
            (p, PhonemeRate { xi, n_pairs: n, class })
        })
        .collect();
    let excluded = symbols
        .iter()
        .filter(|s| !phonemes.contains_key(**s))
        .map(|s| s.to_string())
        .collect();
    let n = symbols.len();
    let present = normalized
        .keys()
        .filter(|(a, b)| a != b && symbols.contains(a.as_str()) && symbols.contains(b.as_str()))
        .count();
    PhonemeReport {
        phonemes,
        excluded,
        missing_pairs: n * n.saturating_sub(1) / 2 - present,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRates {
    pub rates: BTreeMap<String, f64>,
    pub n_pairs: BTreeMap<String, usize>,
    /// Requested attributes that occur in no pair.
    pub excluded: Vec<String>,
}

/// Attribute-level rate: mean of the pairwise rates involving the attribute.
pub fn af_attribute_rates(
    pairwise: &BTreeMap<CategoryPair, f64>,
    attributes: Option<&[&str]>,
) -> Result<AttributeRates> {
    if pairwise.is_empty() {
        return Err(Error::Argument("no pairwise AF rates given".into()));
    }
    let mut symbols: BTreeSet<&str> = pairwise
        .keys()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    let requested: BTreeSet<&str> = attributes
        .map(|a| a.iter().copied().collect())
        .unwrap_or_else(|| symbols.clone());
    symbols.retain(|s| requested.contains(s));
    let means = incident_means(pairwise, &symbols);
    Ok(AttributeRates {
        excluded: requested
            .iter()
            .filter(|a| !means.contains_key(**a))
            .map(|a| a.to_string())
            .collect(),
        n_pairs: means.iter().map(|(k, (_, n))| (k.clone(), *n)).collect(),
        rates: means.into_iter().map(|(k, (v, _))| (k, v)).collect(),
    })
}

/// Row-normalized frame co-occurrence of reference phonemes (rows) and
/// hypothesis labels (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub row_symbols: Vec<String>,
    pub col_symbols: Vec<String>,
    counts: Vec<u64>,
    values: Vec<f64>,
    pub frame_counts: Vec<u64>,
    /// Requested rows that had no co-labeled frame; not part of the matrix.
    pub empty_rows: Vec<String>,
}

impl ConfusionMatrix {
    fn from_counts(
        row_symbols: Vec<String>,
        col_symbols: Vec<String>,
        counts: Vec<u64>,
        empty_rows: Vec<String>,
    ) -> Self {
        let m = col_symbols.len();
        let frame_counts: Vec<u64> = counts.chunks_exact(m).map(|r| r.iter().sum()).collect();
        let values = counts
            .chunks_exact(m)
            .zip(&frame_counts)
            .flat_map(|(r, &tot)| r.iter().map(move |&c| c as f64 / tot as f64))
            .collect();
        ConfusionMatrix {
            row_symbols,
            col_symbols,
            counts,
            values,
            frame_counts,
            empty_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_symbols.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_symbols.len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_cols();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_cols() + j]
    }

    pub fn row_index(&self, symbol: &str) -> Option<usize> {
        self.row_symbols.iter().position(|s| s == symbol)
    }

    pub fn col_index(&self, symbol: &str) -> Option<usize> {
        self.col_symbols.iter().position(|s| s == symbol)
    }

    /// Combines two hypothesis columns into one named `merged`.
    pub fn merge_columns(&self, a: &str, b: &str, merged: &str) -> Result<ConfusionMatrix> {
        let (ia, ib) = match (self.col_index(a), self.col_index(b)) {
            (Some(ia), Some(ib)) if ia != ib => (ia, ib),
            _ => return Err(Error::Argument(format!("cannot merge columns `{a}` and `{b}`"))),
        };
        let keep: Vec<usize> = (0..self.n_cols()).filter(|&j| j != ia && j != ib).collect();
        let mut cols: Vec<String> = keep.iter().map(|&j| self.col_symbols[j].clone()).collect();
        cols.push(merged.to_string());
        let mut counts = Vec::with_capacity(self.n_rows() * cols.len());
        for i in 0..self.n_rows() {
            counts.extend(keep.iter().map(|&j| self.count(i, j)));
            counts.push(self.count(i, ia) + self.count(i, ib));
        }
        Ok(ConfusionMatrix::from_counts(
            self.row_symbols.clone(),
            cols,
            counts,
            self.empty_rows.clone(),
        ))
    }

    /// CSV with a `truth` corner cell, hypothesis labels as column headers
    /// and one row per reference phoneme.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["truth".to_string()];
        header.extend(self.col_symbols.iter().cloned());
        header.push("frames".into());
        w.write_record(&header).expect("in-memory csv");
        for (i, sym) in self.row_symbols.iter().enumerate() {
            let mut rec = vec![sym.clone()];
            rec.extend(self.row(i).iter().map(|v| format!("{v:.6}")));
            rec.push(self.frame_counts[i].to_string());
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }
}

/// Drops trailing ASCII digits (tone marks) from a label.
pub fn strip_tone(label: &str) -> &str {
    let stripped = label.trim_end_matches(|c: char| c.is_ascii_digit());
    if stripped.is_empty() {
        label
    } else {
        stripped
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConfusionOptions {
    pub strip_tones: bool,
    /// Reference inventory; rows without frames are reported as empty.
    pub inventory: Option<Vec<String>>,
}

fn frame_labels(track: &FrameLabelTrack, period_us: u32, strip: bool) -> Vec<Option<&str>> {
    let end = track
        .spans
        .last()
        .map(|s| raw_frame_range(s.onset, s.offset, period_us).end)
        .unwrap_or(0);
    let mut labels = vec![None; end];
    for s in &track.spans {
        let label = if strip { strip_tone(&s.label) } else { &s.label };
        for slot in &mut labels[raw_frame_range(s.onset, s.offset, period_us)] {
            *slot = Some(label);
        }
    }
    labels
}

/// Builds the confusion matrix from frames labeled in both track sets.
pub fn confusion_matrix(
    truth: &[FrameLabelTrack],
    hyp: &[FrameLabelTrack],
    frame_period_us: u32,
    opts: &ConfusionOptions,
) -> Result<ConfusionMatrix> {
    if frame_period_us == 0 {
        return Err(Error::Argument("frame period must be positive".into()));
    }
    let hyp_by_utt: BTreeMap<&str, &FrameLabelTrack> =
        hyp.iter().map(|t| (t.utt.as_str(), t)).collect();
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for t in truth {
        let Some(h) = hyp_by_utt.get(t.utt.as_str()) else {
            continue;
        };
        let g = frame_labels(t, frame_period_us, false);
        let l = frame_labels(h, frame_period_us, opts.strip_tones);
        for (gt, lt) in g.iter().zip(&l) {
            if let (Some(gt), Some(lt)) = (gt, lt) {
                *counts.entry((gt.to_string(), lt.to_string())).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::Data("no frame is labeled in both track sets".into()));
    }
    let rows: BTreeSet<&String> = counts.keys().map(|(g, _)| g).collect();
    let cols: BTreeSet<&String> = counts.keys().map(|(_, l)| l).collect();
    let rows: Vec<String> = rows.into_iter().cloned().collect();
    let cols: Vec<String> = cols.into_iter().cloned().collect();
    let mut dense = vec![0u64; rows.len() * cols.len()];
    for ((g, l), c) in &counts {
        let i = rows.binary_search(g).expect("row symbol");
        let j = cols.binary_search(l).expect("col symbol");
        dense[i * cols.len() + j] = *c;
    }
    let empty_rows = opts
        .inventory
        .as_ref()
        .map(|inv| {
            inv.iter()
                .filter(|p| rows.binary_search(p).is_err())
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    Ok(ConfusionMatrix::from_counts(rows, cols, dense, empty_rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub p_co: f64,
    pub label: String,
    pub frames: u64,
}

/// Largest row entry per reference phoneme, with the label that attains it
/// (first in column order on ties).
pub fn co_occurrence(cm: &ConfusionMatrix) -> BTreeMap<String, CoOccurrence> {
    (0..cm.n_rows())
        .map(|i| {
            let row = cm.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            (
                cm.row_symbols[i].clone(),
                CoOccurrence {
                    p_co: row[best],
                    label: cm.col_symbols[best].clone(),
                    frames: cm.frame_counts[i],
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// Percent reduction per key.
    pub values: BTreeMap<String, f64>,
    /// Keys whose baseline rate is zero.
    pub undefined: Vec<String>,
}

/// `100 · (baseline − improved) / baseline` per key.
pub fn relative_reduction(
    baseline: &BTreeMap<String, f64>,
    improved: &BTreeMap<String, f64>,
) -> Result<Reduction> {
    let only_left: Vec<String> = baseline.keys().filter(|k| !improved.contains_key(*k)).cloned().collect();
    let only_right: Vec<String> = improved.keys().filter(|k| !baseline.contains_key(*k)).cloned().collect();
    if !only_left.is_empty() || !only_right.is_empty() {
        return Err(Error::KeyMismatch {
            only_left,
            only_right,
        });
    }
    let mut values = BTreeMap::new();
    let mut undefined = Vec::new();
    for (k, &b) in baseline {
        if b == 0.0 {
            undefined.push(k.clone());
        } else {
            values.insert(k.clone(), 100.0 * (b - improved[k]) / b);
        }
    }
    Ok(Reduction { values, undefined })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

impl std::str::FromStr for CorrelationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(CorrelationMethod::Pearson),
            "spearman" => Ok(CorrelationMethod::Spearman),
            _ => Err(Error::Argument(format!("unknown correlation `{s}`"))),
        }
    }
}

pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Argument(format!(
            "series lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in correlation input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(xs) {
        return Err(Error::UndefinedCorrelation("first series has zero variance".into()));
    }
    if constant(ys) {
        return Err(Error::UndefinedCorrelation("second series has zero variance".into()));
    }
    // Double-double accumulation: exactly linear data rounds to r = ±1.
    let n = TwoFloat::from(xs.len() as f64);
    let mean = |v: &[f64]| v.iter().fold(TwoFloat::from(0.0), |a, &b| a + b) / n;
    let (mx, my) = (mean(xs), mean(ys));
    let zero = TwoFloat::from(0.0);
    let (mut sxx, mut syy, mut sxy) = (zero, zero, zero);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (TwoFloat::from(x) - mx, TwoFloat::from(y) - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.hi().clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return pearson_correlation(xs, ys);
    }
    pearson_correlation(&ranks(xs), &ranks(ys))
}

pub fn correlation(xs: &[f64], ys: &[f64], method: CorrelationMethod) -> Result<f64> {
    match method {
        CorrelationMethod::Pearson => pearson_correlation(xs, ys),
        CorrelationMethod::Spearman => spearman_correlation(xs, ys),
    }
}

/// `key,value` CSV with 6 fractional digits.
pub fn rates_csv(header: (&str, &str), rates: &BTreeMap<String, f64>) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (k, v) in rates {
        let _ = writeln!(out, "{k},{v:.6}");
    }
    out
}
