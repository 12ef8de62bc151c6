//! Serialization of ABX reports: nested JSON with 6-digit rate strings and
//! flat CSV tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::abx::{AbxReport, CategoryPair, SpeakerMode};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = [
    "category_x",
    "category_y",
    "context_prev",
    "context_next",
    "condition",
    "rate",
];

/// Context placeholder for rows aggregated over contexts.
pub const ANY_CONTEXT: &str = "*";

pub fn format_rate(v: f64) -> String {
    format!("{v:.6}")
}

fn nested_insert(root: &mut Map<String, Value>, keys: &[&str], leaf: Value) {
    let (last, path) = keys.split_last().expect("non-empty key path");
    let mut node = root;
    for k in path {
        node = node
            .entry(k.to_string())
            .or_insert_with(|| Value::Object(Map::new()))
            .as_object_mut()
            .expect("object node");
    }
    node.insert(last.to_string(), leaf);
}

/// Deterministic JSON rendering; cell-level scores are not included.
pub fn report_to_json(report: &AbxReport) -> Value {
    let mut pairwise = Map::new();
    for ((x, y), v) in &report.pairwise {
        nested_insert(&mut pairwise, &[x, y], Value::String(format_rate(*v)));
    }
    let mut contexts = Map::new();
    for (((x, y), (p, n)), v) in &report.contexts {
        nested_insert(&mut contexts, &[x, y, p, n], Value::String(format_rate(*v)));
    }
    let m = &report.metadata;
    json!({
        "task": report.task,
        "condition": report.condition,
        "overall": format_rate(report.overall),
        "pairwise": pairwise,
        "contexts": contexts,
        "metadata": {
            "config_hash": m.config_hash,
            "seed": m.seed,
            "af_table": m.af_table,
            "max_speaker_pairs_per_context": m.max_speaker_pairs_per_context,
            "speaker_pairs": m.speaker_pairs,
            "zero_vector_distance": m.zero_vector_distance,
            "n_cells": m.n_cells,
            "skipped_cells": m.skipped_cells,
            "dropped_speaker_pairs": m.dropped_speaker_pairs,
            "n_comparisons": m.n_comparisons,
        }
    })
}

pub fn report_json_string(report: &AbxReport) -> String {
    let mut s = serde_json::to_string_pretty(&report_to_json(report)).expect("json");
    s.push('\n');
    s
}

fn write_rows<I>(rows: I) -> String
where
    I: IntoIterator<Item = [String; 6]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

/// One row per category pair; context columns hold `*`.
pub fn pairwise_csv(report: &AbxReport) -> String {
    let cond = report.condition.to_string();
    write_rows(report.pairwise.iter().map(|((x, y), v)| {
        [
            x.clone(),
            y.clone(),
            ANY_CONTEXT.into(),
            ANY_CONTEXT.into(),
            cond.clone(),
            format_rate(*v),
        ]
    }))
}

/// One row per category pair and context.
pub fn contexts_csv(report: &AbxReport) -> String {
    let cond = report.condition.to_string();
    write_rows(report.contexts.iter().map(|(((x, y), (p, n)), v)| {
        [x.clone(), y.clone(), p.clone(), n.clone(), cond.clone(), format_rate(*v)]
    }))
}

/// A parsed rate table keyed by category pair, for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTable {
    pub condition: Option<SpeakerMode>,
    pub rates: BTreeMap<CategoryPair, f64>,
}

/// Reads rows written by [`pairwise_csv`]. Rows with a concrete context are
/// averaged per pair first, so a contexts file is accepted too.
pub fn parse_pairwise_csv(path: &Path, text: &str) -> Result<PairwiseTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::format(
            path,
            format!("header must be `{}`", CSV_HEADER.join(",")),
        ));
    }
    let mut condition = None;
    let mut acc: BTreeMap<CategoryPair, Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::row(path, line, e.to_string()))?;
        let cond: SpeakerMode = rec[4]
            .parse()
            .map_err(|_| Error::row(path, line, format!("bad condition `{}`", &rec[4])))?;
        if *condition.get_or_insert(cond) != cond {
            return Err(Error::row(path, line, "mixed conditions in one table"));
        }
        let rate: f64 = rec[5]
            .parse()
            .ok()
            .filter(|r: &f64| (0.0..=1.0).contains(r))
            .ok_or_else(|| Error::row(path, line, format!("bad rate `{}`", &rec[5])))?;
        let (x, y) = (rec[0].to_string(), rec[1].to_string());
        if x == y {
            return Err(Error::row(path, line, "category pair repeats one symbol"));
        }
        let key = if x < y { (x, y) } else { (y, x) };
        acc.entry(key).or_default().push(rate);
    }
    let rates = acc
        .into_iter()
        .map(|(k, v)| {
            let n = v.len() as f64;
            (k, v.into_iter().sum::<f64>() / n)
        })
        .collect();
    Ok(PairwiseTable { condition, rates })
}
