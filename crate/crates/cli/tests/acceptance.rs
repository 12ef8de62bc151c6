//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary lines are
//! always printed; exits non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use abxlab::abx::{score_corpus, ScoreOptions};
use abxlab::analysis::{
    co_occurrence, confusion_matrix, pearson_correlation, spearman_correlation, ConfusionMatrix,
    ConfusionOptions,
};
use abxlab::apc::{
    decode_checkpoint, encode_checkpoint, random_gradient_check, train, ApcConfig, ApcModel,
    CellKind,
};
use abxlab::corpus::{parse_label_tracks, segment_frames, AfClass, AfTable};
use abxlab::synth::{generate_corpus, SynthConfig};
use abxlab::{
    cosine_distance, dtw_dissimilarity, load_feature_archive, DtwConfig, Error, FeatureArchive,
    FeatureFormat, FrameMatrix, ItemSegment, SpeakerMode, TaskKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_abxlab")
}

fn abxlab(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("ABXLAB_JOBS")
        .output()
        .expect("spawn abxlab")
}

fn abxlab_ok(args: &[&str]) -> Result<Output, String> {
    let out = abxlab(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`abxlab {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf8 path")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("read json")).expect("parse json")
}

fn overall(report_dir: &Path) -> f64 {
    read_json(&report_dir.join("report.json"))["overall"]
        .as_str()
        .expect("overall string")
        .parse()
        .expect("overall number")
}

fn synth_to(dir: &Path, cfg: &SynthConfig) -> Result<(), String> {
    let cfg_path = dir.with_extension("json");
    fs::write(&cfg_path, serde_json::to_string(cfg).unwrap()).unwrap();
    abxlab_ok(&["synth", "--config", p(&cfg_path), "--out", p(dir)]).map(|_| ())
}

fn eval_to(corpus: &Path, features: &Path, mode: &str, out: &Path, extra: &[&str]) -> Result<(), String> {
    let items = corpus.join("items.item");
    let mut args = vec![
        "eval", "--features", p(features), "--items", p(&items), "--mode", mode, "--task", "phone",
        "--out", p(out),
    ];
    args.extend_from_slice(extra);
    abxlab_ok(&args).map(|_| ())
}

// ---------------------------------------------------------------------------
// Random corpora and the naive triple oracle

const PHONES: [&str; 5] = ["AA", "AE", "EH", "IY", "UW"];
const CONTEXTS: [(&str, &str); 4] = [("S", "T"), ("K", "D"), ("P", "B"), ("M", "N")];

fn random_corpus(seed: u64) -> (FeatureArchive, Vec<ItemSegment>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_phones = rng.random_range(2..=5);
    let n_speakers = rng.random_range(1..=3);
    let n_ctx = rng.random_range(1..=4);
    let cap = 200 / (n_phones * n_speakers * n_ctx);
    let cfg = SynthConfig {
        phones: PHONES[..n_phones].iter().map(|s| s.to_string()).collect(),
        n_speakers,
        contexts: CONTEXTS[..n_ctx]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        segments_per_cell: rng.random_range(1..=4).min(cap).max(1),
        noise_scale: rng.random_range(0.0..0.8),
        speaker_offset_scale: rng.random_range(0.0..0.3),
        frames_per_segment: (1, rng.random_range(1..=5)),
        seed,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).expect("synth");
    let segments = corpus
        .segments
        .into_iter()
        .filter(|_| rng.random_bool(0.85))
        .collect();
    (corpus.archive, segments)
}

type NaiveKey = (String, String, String, String, String, String);

fn naive_scores(
    archive: &FeatureArchive,
    segs: &[ItemSegment],
    mode: SpeakerMode,
) -> BTreeMap<NaiveKey, f64> {
    let cfg = DtwConfig::default();
    let frames: Vec<FrameMatrix> = segs.iter().map(|s| segment_frames(s, archive).unwrap()).collect();
    let d = |a: usize, x: usize| dtw_dissimilarity(&frames[a], &frames[x], &cfg).unwrap();
    let phones: BTreeSet<&str> = segs.iter().map(|s| s.phone.as_str()).collect();
    let ctxs: BTreeSet<(&str, &str)> = segs.iter().map(|s| (s.prev.as_str(), s.next.as_str())).collect();
    let spks: BTreeSet<&str> = segs.iter().map(|s| s.speaker.as_str()).collect();
    let set = |ph: &str, ctx: (&str, &str), spk: &str| -> Vec<usize> {
        (0..segs.len())
            .filter(|&i| {
                let s = &segs[i];
                s.phone == ph && s.prev == ctx.0 && s.next == ctx.1 && s.speaker == spk
            })
            .collect()
    };
    // η over every (A, B, X) triple: 1 per error, 1/2 per tie.
    let eta = |a_set: &[usize], b_set: &[usize], x_set: &[usize], within: bool| -> f64 {
        let (mut err, mut n) = (0.0f64, 0u64);
        for &a in a_set {
            for &b in b_set {
                for &x in x_set {
                    if within && x == a {
                        continue;
                    }
                    n += 1;
                    let (dax, dbx) = (d(a, x), d(b, x));
                    if dax > dbx {
                        err += 1.0;
                    } else if dax == dbx {
                        err += 0.5;
                    }
                }
            }
        }
        err / n as f64
    };
    let mut out = BTreeMap::new();
    let phones: Vec<&str> = phones.into_iter().collect();
    for (i, &x) in phones.iter().enumerate() {
        for &y in &phones[i + 1..] {
            for &ctx in &ctxs {
                for &sab in &spks {
                    for &sx in &spks {
                        let within = mode == SpeakerMode::Within;
                        if within != (sab == sx) {
                            continue;
                        }
                        let (xa, ya, xx, yx) = (set(x, ctx, sab), set(y, ctx, sab), set(x, ctx, sx), set(y, ctx, sx));
                        let ok = if within {
                            xa.len() >= 2 && ya.len() >= 2
                        } else {
                            [&xa, &ya, &xx, &yx].iter().all(|s| !s.is_empty())
                        };
                        if !ok {
                            continue;
                        }
                        let e = (eta(&xa, &ya, &xx, within) + eta(&ya, &xa, &yx, within)) / 2.0;
                        let key = (
                            x.to_string(),
                            y.to_string(),
                            ctx.0.to_string(),
                            ctx.1.to_string(),
                            sab.to_string(),
                            sx.to_string(),
                        );
                        out.insert(key, e);
                    }
                }
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    for seed in 0..25u64 {
        let (archive, segs) = random_corpus(1000 + seed);
        ensure!(segs.len() <= 200, "corpus {seed} has {} segments", segs.len());
        for mode in [SpeakerMode::Within, SpeakerMode::Across] {
            let naive = naive_scores(&archive, &segs, mode);
            let got = score_corpus(&archive, &segs, &ScoreOptions::new(mode, TaskKind::Phone));
            let report = match got {
                Err(Error::EmptyTask { .. }) if naive.is_empty() => continue,
                Err(e) => return Err(format!("corpus {seed} {mode}: {e}")),
                Ok(r) => r,
            };
            let fast: BTreeMap<NaiveKey, f64> = report
                .per_cell
                .unwrap()
                .into_iter()
                .map(|c| {
                    let k = c.key;
                    (
                        (k.category_x, k.category_y, k.context_prev, k.context_next, k.speaker_ab, k.speaker_x),
                        c.epsilon,
                    )
                })
                .collect();
            ensure!(
                fast.keys().eq(naive.keys()),
                "corpus {seed} {mode}: cell sets differ ({} vs {})",
                fast.len(),
                naive.len()
            );
            for (k, v) in &naive {
                ensure!(
                    fast[k].to_bits() == v.to_bits(),
                    "corpus {seed} {mode} cell {k:?}: {} vs naive {v}",
                    fast[k]
                );
            }
            cells += naive.len();
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "took {t:?}");
    Ok(format!("25 corpora, {cells} cells bit-equal, {:.1}s", t.as_secs_f64()))
}

// ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c");
    synth_to(&corpus, &SynthConfig { seed: 5, ..SynthConfig::default() })?;
    let mut detail = Vec::new();
    for mode in ["within", "across"] {
        let out = tmp.path().join(format!("r-{mode}"));
        eval_to(&corpus, &corpus.join("features"), mode, &out, &[])?;
        let s = read_json(&out.join("report.json"))["overall"].as_str().unwrap().to_string();
        ensure!(s == "0.000000", "one-hot {mode}: overall {s}");
        detail.push(format!("one-hot {mode} {s}"));
    }
    let archive = load_feature_archive(&corpus.join("features"), FeatureFormat::Binary).unwrap();
    let constant = archive.map_values(|_| 0.75).unwrap();
    let cdir = tmp.path().join("const");
    constant.write(&cdir, FeatureFormat::Binary).unwrap();
    for mode in ["within", "across"] {
        let out = tmp.path().join(format!("rc-{mode}"));
        eval_to(&corpus, &cdir, mode, &out, &[])?;
        let s = read_json(&out.join("report.json"))["overall"].as_str().unwrap().to_string();
        ensure!(s == "0.500000", "constant {mode}: overall {s}");
        let segs = abxlab::load_item_file(&corpus.join("items.item")).unwrap();
        let r = score_corpus(&constant, &segs, &ScoreOptions::new(mode.parse().unwrap(), TaskKind::Phone)).unwrap();
        ensure!(r.overall == 0.5, "constant {mode}: library overall {}", r.overall);
        detail.push(format!("constant {mode} {s}"));
    }
    Ok(detail.join(", "))
}

fn noisy_cfg(seed: u64) -> SynthConfig {
    SynthConfig {
        noise_scale: 0.35,
        speaker_offset_scale: 0.2,
        n_speakers: 3,
        segments_per_cell: 3,
        frames_per_segment: (2, 7),
        seed,
        ..SynthConfig::default()
    }
}

fn criterion_3() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c");
    synth_to(&corpus, &noisy_cfg(11))?;
    let archive = load_feature_archive(&corpus.join("features"), FeatureFormat::Binary).unwrap();
    let scaled = tmp.path().join("scaled");
    archive.map_values(|v| v * 2.5).unwrap().write(&scaled, FeatureFormat::Binary).unwrap();
    let mut rates = Vec::new();
    for mode in ["within", "across"] {
        let (a, b) = (tmp.path().join(format!("a-{mode}")), tmp.path().join(format!("b-{mode}")));
        eval_to(&corpus, &corpus.join("features"), mode, &a, &[])?;
        eval_to(&corpus, &scaled, mode, &b, &[])?;
        let (ra, rb) = (fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
        ensure!(ra == rb, "{mode}: report.json differs after x2.5 scaling");
        rates.push(format!("{mode} {:.6}", overall(&a)));
    }
    Ok(format!("byte-identical ({})", rates.join(", ")))
}

fn criterion_4() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c");
    synth_to(&corpus, &SynthConfig { n_speakers: 4, ..noisy_cfg(12) })?;
    for mode in ["within", "across"] {
        let a = tmp.path().join(format!("j1-{mode}"));
        let b = tmp.path().join(format!("j8-{mode}"));
        eval_to(&corpus, &corpus.join("features"), mode, &a, &["--jobs", "1"])?;
        eval_to(&corpus, &corpus.join("features"), mode, &b, &["--jobs", "8"])?;
        for f in ["report.json", "pairwise.csv", "contexts.csv"] {
            ensure!(
                fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
                "{mode}: {f} differs between --jobs 1 and --jobs 8"
            );
        }
    }
    // The environment fallback drives the same code path.
    let c = tmp.path().join("env");
    let out = Command::new(bin())
        .args(["eval", "--features", p(&corpus.join("features")), "--items", p(&corpus.join("items.item"))])
        .args(["--mode", "across", "--task", "phone", "--out", p(&c)])
        .env("ABXLAB_JOBS", "3")
        .output()
        .unwrap();
    ensure!(out.status.success(), "ABXLAB_JOBS run failed");
    ensure!(
        fs::read(c.join("report.json")).unwrap() == fs::read(tmp.path().join("j1-across/report.json")).unwrap(),
        "ABXLAB_JOBS=3 report differs"
    );
    Ok("jobs 1 / 3 / 8 byte-identical in both conditions".into())
}

// ---------------------------------------------------------------------------

fn enumerate_paths(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], i: usize, j: usize, sum: f64, len: usize, best: &mut f64) {
        let (n, m) = (cost.len(), cost[0].len());
        let sum = sum + cost[i][j];
        let len = len + 1;
        if i == n - 1 && j == m - 1 {
            *best = best.min(sum / len as f64);
            return;
        }
        if i + 1 < n {
            go(cost, i + 1, j, sum, len, best);
        }
        if j + 1 < m {
            go(cost, i, j + 1, sum, len, best);
        }
        if i + 1 < n && j + 1 < m {
            go(cost, i + 1, j + 1, sum, len, best);
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, 0, 0.0, 0, &mut best);
    best
}

fn criterion_5() -> Outcome {
    let cfg = DtwConfig::default();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    // Synth dims differ between corpora, so pairs are taken within one corpus.
    for seed in 77..82 {
        let (archive, segs) = random_corpus(seed);
        let frames: Vec<FrameMatrix> = segs
            .iter()
            .map(|s| segment_frames(s, &archive).unwrap())
            .filter(|f| f.nframes() <= 5)
            .take(30)
            .collect();
        for a in &frames {
            for b in &frames {
                let cost: Vec<Vec<f64>> = a
                    .rows()
                    .map(|ra| b.rows().map(|rb| cosine_distance(ra, rb, &cfg).unwrap()).collect())
                    .collect();
                let want = enumerate_paths(&cost);
                let got = dtw_dissimilarity(a, b, &cfg).unwrap();
                worst = worst.max((want - got).abs());
                pairs += 1;
            }
        }
    }
    ensure!(pairs >= 1000, "only {pairs} pairs checked");
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("{pairs} ordered pairs, max deviation {worst:e}"))
}

fn criterion_6() -> Outcome {
    let mut line = Vec::new();
    for mode in [SpeakerMode::Within, SpeakerMode::Across] {
        let mut prev: Option<f64> = None;
        let mut rates = Vec::new();
        for noise in [0.0, 0.1, 0.2, 0.4, 0.8] {
            let cfg = SynthConfig {
                noise_scale: noise,
                speaker_offset_scale: 0.1,
                segments_per_cell: 3,
                frames_per_segment: (3, 6),
                seed: 2024,
                ..SynthConfig::default()
            };
            let c = generate_corpus(&cfg).unwrap();
            let r = score_corpus(&c.archive, &c.segments, &ScoreOptions::new(mode, TaskKind::Phone))
                .map_err(|e| e.to_string())?;
            ensure!(
                r.metadata.n_comparisons >= 1000,
                "{mode} noise {noise}: only {} comparisons",
                r.metadata.n_comparisons
            );
            if let Some(p) = prev {
                ensure!(r.overall >= p - 0.02, "{mode}: {p:.6} -> {:.6} at noise {noise}", r.overall);
            }
            prev = Some(r.overall);
            rates.push(format!("{:.3}", r.overall));
        }
        line.push(format!("{mode} [{}]", rates.join(" ")));
    }
    Ok(line.join(", "))
}

// ---------------------------------------------------------------------------

/// Spreadsheet-style re-sum: mean of every pairwise.csv rate touching a symbol.
fn resum_pairwise(csv: &str) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let v: f64 = cols[5].parse().unwrap();
        acc.entry(cols[0].to_string()).or_default().push(v);
        acc.entry(cols[1].to_string()).or_default().push(v);
    }
    acc.into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

fn golden_tables() -> Result<usize, String> {
    // Table I: MoA rows, PoA columns.
    let consonants: &[(&str, &str, &[&str])] = &[
        ("Affricate", "Postalveolar", &["CH", "JH"]),
        ("Approximant", "Bilabial", &["W"]),
        ("Approximant", "Alveolar", &["L"]),
        ("Approximant", "Postalveolar", &["R"]),
        ("Approximant", "Palatal", &["Y"]),
        ("Fricative", "Labiodental", &["F", "V"]),
        ("Fricative", "Dental", &["TH", "DH"]),
        ("Fricative", "Alveolar", &["S", "Z"]),
        ("Fricative", "Postalveolar", &["SH", "ZH"]),
        ("Fricative", "Glottal", &["HH"]),
        ("Stop", "Bilabial", &["P", "B"]),
        ("Stop", "Alveolar", &["T", "D"]),
        ("Stop", "Velar", &["K", "G"]),
        ("Nasal", "Bilabial", &["M"]),
        ("Nasal", "Alveolar", &["N"]),
        ("Nasal", "Velar", &["NG"]),
    ];
    // Table II: height rows, backness columns.
    let vowels: &[(&str, &str, &[&str])] = &[
        ("Close", "Front", &["IY", "IH"]),
        ("Close", "Back", &["UW", "UH"]),
        ("Mid", "Front", &["EH"]),
        ("Mid", "Central", &["ER", "AH"]),
        ("Mid", "Back", &["AO"]),
        ("Open", "Front", &["AE"]),
        ("Open", "Central", &["AA"]),
    ];
    let check = |table: &str, rows: &[(&str, &str, &[&str])], row_af: bool| -> Result<usize, String> {
        let t = AfTable::builtin(table).map_err(|e| e.to_string())?;
        let mut n = 0;
        for (r, c, phones) in rows {
            let want = if row_af { r } else { c };
            for ph in *phones {
                ensure!(
                    t.lookup(ph) == AfClass::Attribute(want),
                    "{table}: {ph} maps to {:?}, expected {want}",
                    t.lookup(ph)
                );
                n += 1;
            }
        }
        let mapped = t.entries().count();
        ensure!(mapped == n, "{table}: {mapped} mapped phones, golden table has {n}");
        Ok(n)
    };
    let mut cells = check("english-moa", consonants, true)?;
    cells += check("english-poa", consonants, false)?;
    cells += check("english-height", vowels, true)?;
    cells += check("english-backness", vowels, false)?;
    for d in ["AW", "AY", "EY", "OW", "OY"] {
        for t in ["english-height", "english-backness"] {
            ensure!(
                AfTable::builtin(t).unwrap().lookup(d) == AfClass::Excluded,
                "{t}: diphthong {d} not excluded"
            );
        }
    }
    Ok(cells)
}

fn criterion_7() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let mut worst: f64 = 0.0;

    let corpus = tmp.path().join("vowels");
    synth_to(&corpus, &SynthConfig { noise_scale: 0.6, ..noisy_cfg(21) })?;
    let r = tmp.path().join("r");
    eval_to(&corpus, &corpus.join("features"), "within", &r, &[])?;
    let pw = r.join("pairwise.csv");
    let ph = tmp.path().join("ph");
    abxlab_ok(&["analyze", "phoneme", "--pairwise", p(&pw), "--out", p(&ph)])?;
    let resum = resum_pairwise(&fs::read_to_string(&pw).unwrap());
    let report = read_json(&ph.join("phoneme.json"));
    ensure!(resum.len() == 5, "expected 5 phonemes, got {}", resum.len());
    for (k, v) in &resum {
        let got = report["phonemes"][k]["xi"].as_f64().ok_or(format!("no xi for {k}"))?;
        worst = worst.max((got - v).abs());
    }
    ensure!(ph.join("bars.svg").exists(), "bars.svg missing");

    let cons = tmp.path().join("consonants");
    let phones = ["P", "T", "K", "S", "F", "M", "N", "CH", "JH", "W", "L"];
    synth_to(
        &cons,
        &SynthConfig {
            phones: phones.iter().map(|s| s.to_string()).collect(),
            noise_scale: 0.6,
            ..noisy_cfg(22)
        },
    )?;
    let ra = tmp.path().join("ra");
    let items = cons.join("items.item");
    abxlab_ok(&[
        "eval", "--features", p(&cons.join("features")), "--items", p(&items), "--mode", "within",
        "--task", "af", "--af-table", "english-moa", "--out", p(&ra),
    ])?;
    let pw = ra.join("pairwise.csv");
    let text = fs::read_to_string(&pw).unwrap();
    let rows = text.lines().count() - 1;
    ensure!(rows <= 10, "MoA pairwise.csv has {rows} rows");
    let at = tmp.path().join("at");
    abxlab_ok(&["analyze", "phoneme", "--level", "attribute", "--pairwise", p(&pw), "--out", p(&at)])?;
    let report = read_json(&at.join("attribute.json"));
    for (k, v) in resum_pairwise(&text) {
        let got = report["rates"][&k].as_f64().ok_or(format!("no rate for {k}"))?;
        worst = worst.max((got - v).abs());
    }
    ensure!(worst <= 1e-9, "re-sum deviation {worst:e}");
    let golden = golden_tables()?;
    Ok(format!(
        "xi and AF re-sum max deviation {worst:e}; {rows} MoA pairs; {golden} golden table cells"
    ))
}

// ---------------------------------------------------------------------------

fn tracks(rows: &[(&str, f64, f64, &str)]) -> Vec<abxlab::FrameLabelTrack> {
    let text: String = rows
        .iter()
        .map(|(u, a, b, l)| format!("{u}\t{a:.6}\t{b:.6}\t{l}\n"))
        .collect();
    parse_label_tracks(Path::new("mem.tsv"), &text).unwrap()
}

fn rows_sum_to_one(cm: &ConfusionMatrix) -> Result<(), String> {
    for i in 0..cm.n_rows() {
        let s: f64 = cm.row(i).iter().sum();
        ensure!((s - 1.0).abs() <= 1e-9, "row {} sums to {s}", cm.row_symbols[i]);
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let opts = ConfusionOptions::default();
    let truth = tracks(&[
        ("u1", 0.0, 0.3, "AA"),
        ("u1", 0.3, 0.5, "B"),
        ("u1", 0.5, 0.9, "IY"),
        ("u2", 0.0, 0.2, "B"),
        ("u2", 0.2, 0.6, "AA"),
    ]);
    // Identity and a bijective renaming.
    for rename in [false, true] {
        let hyp_rows: Vec<(&str, f64, f64, &str)> = [
            ("u1", 0.0, 0.3, "AA"),
            ("u1", 0.3, 0.5, "B"),
            ("u1", 0.5, 0.9, "IY"),
            ("u2", 0.0, 0.2, "B"),
            ("u2", 0.2, 0.6, "AA"),
        ]
        .into_iter()
        .map(|(u, a, b, l)| (u, a, b, if rename { match l { "AA" => "a", "B" => "b", _ => "i" } } else { l }))
        .collect();
        let cm = confusion_matrix(&truth, &tracks(&hyp_rows), 10_000, &opts).unwrap();
        rows_sum_to_one(&cm)?;
        ensure!(
            co_occurrence(&cm).values().all(|c| c.p_co == 1.0),
            "identity labeling (rename {rename}) gives p_co != 1"
        );
    }
    // Uniform labeling over M symbols.
    for m in [2usize, 3, 4, 7] {
        let frames = 12 * m;
        let truth = tracks(&[("u", 0.0, frames as f64 * 0.01, "Q")]);
        let hyp_rows: Vec<(String, f64, f64, String)> = (0..frames)
            .map(|f| ("u".into(), f as f64 * 0.01, (f + 1) as f64 * 0.01, format!("L{}", f % m)))
            .collect();
        let hyp_refs: Vec<(&str, f64, f64, &str)> =
            hyp_rows.iter().map(|(u, a, b, l)| (u.as_str(), *a, *b, l.as_str())).collect();
        let cm = confusion_matrix(&truth, &tracks(&hyp_refs), 10_000, &opts).unwrap();
        rows_sum_to_one(&cm)?;
        let pco = co_occurrence(&cm)["Q"].p_co;
        ensure!((pco - 1.0 / m as f64).abs() <= 1e-12, "uniform M={m}: p_co {pco}");
    }
    // 40/35/25 split.
    let truth = tracks(&[("u", 0.0, 1.0, "Q")]);
    let hyp = tracks(&[("u", 0.0, 0.4, "a"), ("u", 0.4, 0.75, "b"), ("u", 0.75, 1.0, "c")]);
    let cm = confusion_matrix(&truth, &hyp, 10_000, &opts).unwrap();
    rows_sum_to_one(&cm)?;
    ensure!(cm.row(0) == [0.40, 0.35, 0.25], "40/35/25 row is {:?}", cm.row(0));

    // CLI: hyp == truth gives p_co 1.0 everywhere.
    let tmp = TempDir::new().unwrap();
    let t = tmp.path().join("truth.tsv");
    fs::write(&t, "u1\t0.00\t0.30\tAA\nu1\t0.30\t0.50\tB\nu2\t0.00\t0.40\tIY\n").unwrap();
    let out = tmp.path().join("cm");
    abxlab_ok(&["analyze", "confusion", "--truth", p(&t), "--hyp", p(&t), "--out", p(&out)])?;
    let pco = fs::read_to_string(out.join("pco.csv")).unwrap();
    ensure!(
        pco.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1.000000")),
        "CLI pco.csv: {pco}"
    );
    Ok("identity, uniform M in {2,3,4,7}, 40/35/25 exact, rows sum to 1".into())
}

fn criterion_9() -> Outcome {
    let xs: Vec<f64> = (0..17).map(|i| 0.3 * i as f64 - 1.7).collect();
    let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
    let anti: Vec<f64> = xs.iter().map(|x| -x).collect();
    for (f, name) in [
        (pearson_correlation as fn(&[f64], &[f64]) -> abxlab::Result<f64>, "pearson"),
        (spearman_correlation, "spearman"),
    ] {
        let r = f(&xs, &lin).unwrap();
        ensure!(r == 1.0, "{name} linear r = {r}");
        let r = f(&xs, &anti).unwrap();
        ensure!(r == -1.0, "{name} anti-linear r = {r}");
        ensure!(
            matches!(f(&[2.0; 5], &xs[..5]), Err(Error::UndefinedCorrelation(_))),
            "{name}: constant input not rejected"
        );
    }
    // CLI: reductions that are a linear function of p_co.
    let tmp = TempDir::new().unwrap();
    let (mut base, mut imp, mut pco) = (
        String::from("phoneme,xi\n"),
        String::from("phoneme,xi\n"),
        String::from("phoneme,p_co,label,frames\n"),
    );
    for i in 0..6 {
        let pc = 0.3 + 0.1 * i as f64;
        base.push_str(&format!("P{i},0.400000\n"));
        imp.push_str(&format!("P{i},{:.6}\n", 0.4 * (1.0 - pc / 2.0)));
        pco.push_str(&format!("P{i},{pc:.6},x,100\n"));
    }
    for (n, t) in [("b.csv", &base), ("i.csv", &imp), ("p.csv", &pco)] {
        fs::write(tmp.path().join(n), t).unwrap();
    }
    let out = tmp.path().join("corr");
    abxlab_ok(&[
        "analyze", "correlate", "--baseline", p(&tmp.path().join("b.csv")), "--improved",
        p(&tmp.path().join("i.csv")), "--pco", p(&tmp.path().join("p.csv")), "--out", p(&out),
    ])?;
    let r = read_json(&out.join("correlation.json"))["r"].as_f64().unwrap();
    ensure!((r - 1.0).abs() <= 1e-9, "CLI correlate r = {r}");
    ensure!(out.join("scatter.svg").exists(), "scatter.svg missing");
    Ok(format!("±1 exact, constant input rejected, CLI r = {r}"))
}

// ---------------------------------------------------------------------------

fn ar1_archive() -> FeatureArchive {
    FeatureArchive::new(
        1,
        10_000,
        (0..8).map(|i| {
            let mut x = 0.3 + 0.075 * i as f32;
            let data = (0..40)
                .map(|_| {
                    let v = x;
                    x *= 0.9;
                    v
                })
                .collect();
            (format!("ar{i}"), FrameMatrix::new(1, data).unwrap())
        }),
    )
    .unwrap()
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let cfg = ApcConfig {
            cell: if seed % 2 == 0 { CellKind::Lstm } else { CellKind::SimpleRnn },
            layers: 1 + (seed as usize % 2),
            hidden_dim: 1 + (seed as usize * 3) % 8,
            input_dim: 1 + (seed as usize) % 4,
            prediction_step: 1 + (seed as usize) % 3,
            ..ApcConfig::default()
        };
        let r = random_gradient_check(&cfg, seed).map_err(|e| e.to_string())?;
        ensure!(!r.inconclusive, "instance {seed} inconclusive");
        ensure!(r.passed(), "instance {seed}: max relative error {:e}", r.max_relative_error);
        worst = worst.max(r.max_relative_error);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..10u64 {
        let d = rng.random_range(1..=4);
        let cfg = ApcConfig {
            input_dim: d,
            hidden_dim: rng.random_range(2..=8),
            layers: rng.random_range(1..=3),
            cell: if seed % 3 == 0 { CellKind::SimpleRnn } else { CellKind::Lstm },
            seed,
            ..ApcConfig::default()
        };
        let model = ApcModel::init(&cfg).unwrap();
        let t = 15;
        let data: Vec<f32> = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = model.forward(&FrameMatrix::new(d, data.clone()).unwrap()).unwrap();
        for cut in 0..t - 1 {
            let mut pert = data.clone();
            for v in &mut pert[(cut + 1) * d..] {
                *v += rng.random_range(-2.0f32..2.0);
            }
            let out = model.forward(&FrameMatrix::new(d, pert).unwrap()).unwrap();
            ensure!(
                out.predictions[..=cut] == base.predictions[..=cut],
                "model {seed}: prediction at t <= {cut} changed"
            );
        }
    }

    let outcome = train(&ApcConfig::default(), &ar1_archive()).map_err(|e| e.to_string())?;
    let (first, last) = (outcome.loss_curve[0], *outcome.loss_curve.last().unwrap());
    let reduction = 1.0 - last / first;
    ensure!(reduction >= 0.9, "AR(1) loss reduction {:.1}%", 100.0 * reduction);

    let tmp = TempDir::new().unwrap();
    let feats = tmp.path().join("ar1");
    ar1_archive().write(&feats, FeatureFormat::Binary).unwrap();
    let mut ckpts = Vec::new();
    for (run, seed) in [(0, "9"), (1, "9"), (2, "10")] {
        let out = tmp.path().join(format!("m{run}"));
        abxlab_ok(&["apc", "train", "--features", p(&feats), "--seed", seed, "--epochs", "30", "--out", p(&out)])?;
        ckpts.push(fs::read(out.join("model.apc")).unwrap());
    }
    ensure!(ckpts[0] == ckpts[1], "same seed produced different checkpoints");
    ensure!(ckpts[0] != ckpts[2], "different seeds produced identical checkpoints");
    let cli = abxlab(&["apc", "gradcheck", "--seed", "3"]);
    ensure!(cli.status.code() == Some(0), "CLI gradcheck exit {:?}", cli.status.code());

    let t = start.elapsed();
    ensure!(t < Duration::from_secs(120), "took {t:?}");
    Ok(format!(
        "gradcheck max rel err {worst:.2e} over 20; causality 10/10; AR(1) -{:.1}%; checkpoints bit-identical; {:.1}s",
        100.0 * reduction,
        t.as_secs_f64()
    ))
}

fn criterion_11() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let clean = tmp.path().join("clean");
    synth_to(&clean, &SynthConfig { seed: 31, ..SynthConfig::default() })?;
    let model = tmp.path().join("model");
    abxlab_ok(&["apc", "train", "--features", p(&clean.join("features")), "--out", p(&model)])?;
    let feats = tmp.path().join("apc-feats");
    abxlab_ok(&[
        "apc", "extract", "--model", p(&model.join("model.apc")), "--features",
        p(&clean.join("features")), "--out", p(&feats),
    ])?;
    let noisy = tmp.path().join("noisy");
    synth_to(&noisy, &SynthConfig { seed: 31, noise_scale: 0.4, ..SynthConfig::default() })?;
    let mut detail = Vec::new();
    for mode in ["within", "across"] {
        let a = tmp.path().join(format!("apc-{mode}"));
        let r = tmp.path().join(format!("raw-{mode}"));
        eval_to(&clean, &feats, mode, &a, &[])?;
        eval_to(&noisy, &noisy.join("features"), mode, &r, &[])?;
        let (ea, er) = (overall(&a), overall(&r));
        ensure!(ea <= er + 0.02, "{mode}: APC {ea:.6} > raw noisy {er:.6} + 0.02");
        detail.push(format!("{mode} APC {ea:.6} vs raw@0.4 {er:.6}"));
    }
    Ok(detail.join(", "))
}

// ---------------------------------------------------------------------------

fn expect_exit(args: &[&str], code: i32, needle: &str) -> Result<(), String> {
    let out = abxlab(args);
    let err = String::from_utf8_lossy(&out.stderr);
    ensure!(
        out.status.code() == Some(code),
        "`{}` exited {:?} (want {code}): {err}",
        args.join(" "),
        out.status.code()
    );
    ensure!(err.contains(needle), "stderr lacks `{needle}`: {err}");
    Ok(())
}

fn criterion_12() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c");
    synth_to(&corpus, &noisy_cfg(41))?;
    let src = corpus.join("features");
    let archive = load_feature_archive(&src, FeatureFormat::Binary).unwrap();
    let copy = tmp.path().join("copy");
    archive.write(&copy, FeatureFormat::Binary).unwrap();
    let mut n = 0;
    for entry in fs::read_dir(&src).unwrap() {
        let path = entry.unwrap().path();
        let other = copy.join(path.file_name().unwrap());
        ensure!(fs::read(&path).unwrap() == fs::read(&other).unwrap(), "{} differs", path.display());
        n += 1;
    }

    let model = tmp.path().join("m");
    abxlab_ok(&["apc", "train", "--features", p(&src), "--epochs", "3", "--out", p(&model)])?;
    let bytes = fs::read(model.join("model.apc")).unwrap();
    let decoded = decode_checkpoint(Path::new("model.apc"), &bytes).map_err(|e| e.to_string())?;
    ensure!(encode_checkpoint(&decoded).unwrap() == bytes, "checkpoint bytes changed on round trip");

    let feats = p(&src).to_string();
    let write = |name: &str, text: &str| -> PathBuf {
        let path = tmp.path().join(name);
        fs::write(&path, text).unwrap();
        path
    };
    let header = abxlab::corpus::ITEM_HEADER;
    let utt = archive.iter().next().unwrap().0.to_string();
    let good_row = format!("{utt} 0.000000 0.030000 AA S T spk00");
    let bad_items = [
        ("no-header.item", format!("{good_row}\n"), "no-header.item"),
        ("order.item", format!("{header}\n{good_row}\n{utt} 0.25 0.10 AA S T spk00\n"), "order.item:3"),
        ("nan.item", format!("{header}\n{utt} zero 0.10 AA S T spk00\n"), "nan.item:2"),
        ("cols.item", format!("{header}\n{utt} 0.0 0.10 AA S spk00\n"), "cols.item:2"),
    ];
    for (name, text, needle) in &bad_items {
        let path = write(name, text);
        expect_exit(
            &["eval", "--features", &feats, "--items", p(&path), "--mode", "within", "--task", "phone", "--out", p(&tmp.path().join("x"))],
            3,
            needle,
        )?;
    }
    let missing = write("missing.item", &format!("{header}\nnope 0.0 0.1 AA S T spk00\n"));
    expect_exit(
        &["eval", "--features", &feats, "--items", p(&missing), "--mode", "within", "--task", "phone", "--out", p(&tmp.path().join("x"))],
        3,
        "nope",
    )?;

    let good = write("good.tsv", "u1\t0.0\t0.5\tAA\n");
    let bad_labels = [
        ("overlap.tsv", "u1\t0.0\t0.5\tAA\nu1\t0.4\t0.9\tB\n", "u1"),
        ("reversed.tsv", "u1\t0.5\t0.2\tAA\n", "reversed.tsv:1"),
        ("nonnum.tsv", "u1\tx\t0.2\tAA\n", "nonnum.tsv:1"),
    ];
    for (name, text, needle) in bad_labels {
        let path = write(name, text);
        expect_exit(
            &["analyze", "confusion", "--truth", p(&good), "--hyp", p(&path), "--out", p(&tmp.path().join("y"))],
            3,
            needle,
        )?;
    }

    let bad_feats = tmp.path().join("bad-feats");
    fs::create_dir(&bad_feats).unwrap();
    let mut fbin = abxlab::corpus::encode_fbin(&FrameMatrix::new(13, vec![0.5; 13 * 12]).unwrap(), 10_000);
    fbin.truncate(fbin.len() - 4 * 12);
    fs::write(bad_feats.join(format!("{utt}.fbin")), &fbin).unwrap();
    let items = corpus.join("items.item");
    expect_exit(
        &["eval", "--features", p(&bad_feats), "--items", p(&items), "--mode", "within", "--task", "phone", "--out", p(&tmp.path().join("z"))],
        3,
        "payload",
    )?;
    let magic = tmp.path().join("bad-magic");
    fs::create_dir(&magic).unwrap();
    let mut fbin = abxlab::corpus::encode_fbin(&FrameMatrix::new(13, vec![0.5; 13 * 4]).unwrap(), 10_000);
    fbin[..4].copy_from_slice(b"FEET");
    fs::write(magic.join(format!("{utt}.fbin")), &fbin).unwrap();
    expect_exit(
        &["eval", "--features", p(&magic), "--items", p(&items), "--mode", "within", "--task", "phone", "--out", p(&tmp.path().join("z"))],
        3,
        &format!("{utt}.fbin"),
    )?;
    let dup = write("dup.tsv", "P\tStop\nT\tStop\nP\tFricative\n");
    let af_eval = |table: &str| {
        vec![
            "eval".to_string(), "--features".into(), feats.clone(), "--items".into(), p(&items).into(),
            "--mode".into(), "within".into(), "--task".into(), "af".into(), "--af-table".into(), table.into(),
            "--out".into(), p(&tmp.path().join("z")).into(),
        ]
    };
    let args = af_eval(p(&dup));
    expect_exit(&args.iter().map(String::as_str).collect::<Vec<_>>(), 3, "dup.tsv")?;
    let args = af_eval("english-voicing");
    expect_exit(&args.iter().map(String::as_str).collect::<Vec<_>>(), 2, "english-voicing")?;
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    expect_exit(
        &["eval", "--features", p(&empty), "--items", p(&items), "--mode", "within", "--task", "phone", "--out", p(&tmp.path().join("z"))],
        3,
        "no feature files",
    )?;
    expect_exit(
        &["eval", "--features", &feats, "--mode", "within", "--task", "phone", "--out", p(&tmp.path().join("z"))],
        2,
        "--items",
    )?;
    expect_exit(&["synth", "--seed", "1", "--phones", "", "--out", p(&tmp.path().join("s"))], 2, "phone")?;
    let short = tmp.path().join("short");
    FeatureArchive::new(1, 10_000, [("tiny".to_string(), FrameMatrix::new(1, vec![1.0]).unwrap())])
        .unwrap()
        .write(&short, FeatureFormat::Binary)
        .unwrap();
    expect_exit(&["apc", "train", "--features", p(&short), "--out", p(&tmp.path().join("t"))], 3, "tiny")?;
    ensure!(
        !tmp.path().join("x").exists() && !tmp.path().join("z").exists() && !tmp.path().join("t").exists(),
        "a failed run left an output directory"
    );
    Ok(format!("{n} feature files and checkpoint byte-identical; malformed inputs exit 3, usage 2"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "brute-force equivalence", criterion_1),
        (2, "analytic oracles", criterion_2),
        (3, "scale invariance", criterion_3),
        (4, "determinism under parallelism", criterion_4),
        (5, "DTW oracle", criterion_5),
        (6, "monotone degradation", criterion_6),
        (7, "phoneme/AF aggregation", criterion_7),
        (8, "confusion metrics", criterion_8),
        (9, "correlation", criterion_9),
        (10, "APC", criterion_10),
        (11, "end-to-end pipeline", criterion_11),
        (12, "format round-trips", criterion_12),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
