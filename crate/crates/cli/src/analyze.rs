use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abxlab::analysis::{
    af_attribute_rates, co_occurrence, confusion_matrix, correlation, phoneme_level_rates,
    rates_csv, relative_reduction, ConfusionOptions, CorrelationMethod,
};
use abxlab::corpus::inventory::{classify, cmu39, PhoneClass};
use abxlab::report::{parse_pairwise_csv, CSV_HEADER};
use abxlab::svg::{bar_chart, scatter_plot};
use abxlab::{load_label_tracks, Error};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use crate::output::{digest_inputs, Manifest, Staged, MANIFEST};
use crate::{CliError, OutDir};

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Phoneme-level (or AF attribute-level) rates from a pairwise table.
    Phoneme(PhonemeArgs),
    /// Frame confusion matrix and co-occurrence probabilities.
    Confusion(ConfusionArgs),
    /// Correlate per-phoneme relative reduction with co-occurrence.
    Correlate(CorrelateArgs),
    /// Relative error-rate reduction between two rate tables.
    Reduce(ReduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Phoneme,
    Attribute,
}

#[derive(Args)]
pub struct PhonemeArgs {
    /// pairwise.csv written by `eval`.
    #[arg(long)]
    pairwise: PathBuf,
    #[arg(long, value_enum, default_value = "phoneme")]
    level: Level,
    /// `observed` (symbols in the table), `cmu39`, or a file with one symbol per line.
    #[arg(long, default_value = "observed")]
    inventory: String,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
pub struct ConfusionArgs {
    /// Reference phoneme alignments (label TSV).
    #[arg(long)]
    truth: PathBuf,
    /// Hypothesis label alignments (label TSV).
    #[arg(long)]
    hyp: PathBuf,
    /// Drop trailing tone digits from hypothesis labels.
    #[arg(long)]
    strip_tones: bool,
    #[arg(long, default_value_t = 10_000)]
    frame_period_us: u32,
    /// Optional reference inventory, as for `phoneme`.
    #[arg(long)]
    inventory: Option<String>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
pub struct CorrelateArgs {
    /// Baseline rate table.
    #[arg(long)]
    baseline: PathBuf,
    /// Improved rate table.
    #[arg(long)]
    improved: PathBuf,
    /// pco.csv written by `confusion`.
    #[arg(long)]
    pco: PathBuf,
    #[arg(long, default_value = "pearson")]
    method: CorrelationMethod,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
pub struct ReduceArgs {
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    improved: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

pub fn run(cmd: AnalyzeCommand) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Phoneme(a) => phoneme(a),
        AnalyzeCommand::Confusion(a) => confusion(a),
        AnalyzeCommand::Correlate(a) => correlate(a),
        AnalyzeCommand::Reduce(a) => reduce(a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn pretty(v: serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("json");
    s.push('\n');
    s
}

fn load_inventory(choice: &str, observed: Vec<String>) -> Result<Vec<String>, CliError> {
    match choice {
        "observed" => Ok(observed),
        "cmu39" => Ok(cmu39().into_iter().map(String::from).collect()),
        path => {
            let text = read(Path::new(path))?;
            let inv: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect();
            if inv.is_empty() {
                return Err(CliError::Usage(format!("{path}: empty inventory")));
            }
            Ok(inv)
        }
    }
}

/// Rate table keyed by symbol: either a pairwise table (keys `x/y`) or any
/// CSV whose first column is the key and second column the rate.
pub fn load_rates(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let text = read(path)?;
    if text.lines().next().map(str::trim) == Some(CSV_HEADER.join(",").as_str()) {
        let table = parse_pairwise_csv(path, &text)?;
        return Ok(table
            .rates
            .into_iter()
            .map(|((x, y), v)| (format!("{x}/{y}"), v))
            .collect());
    }
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let row_err = |line: usize, msg: String| {
        CliError::Core(Error::Row {
            path: path.to_path_buf(),
            line,
            msg,
        })
    };
    let ncols = rdr.headers().map_err(|e| row_err(1, e.to_string()))?.len();
    if ncols < 2 {
        return Err(row_err(1, "rate table needs a key and a value column".into()));
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| row_err(line, e.to_string()))?;
        let v: f64 = rec[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| row_err(line, format!("bad value `{}`", &rec[1])))?;
        if out.insert(rec[0].to_string(), v).is_some() {
            return Err(row_err(line, format!("duplicate key `{}`", &rec[0])));
        }
    }
    if out.is_empty() {
        return Err(row_err(1, "rate table has no rows".into()));
    }
    Ok(out)
}

fn class_colour(p: &str) -> Option<&'static str> {
    match classify(p)? {
        PhoneClass::Monophthong => Some("#4e79a7"),
        PhoneClass::Diphthong => Some("#f28e2b"),
        PhoneClass::Consonant => Some("#59a14f"),
    }
}

fn phoneme(a: PhonemeArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let table = parse_pairwise_csv(&a.pairwise, &read(&a.pairwise)?)?;
    let condition = table.condition.map(|c| c.to_string());
    let mut out = Staged::default();
    let (name, rates, body) = match a.level {
        Level::Phoneme => {
            let mut observed: Vec<String> = table
                .rates
                .keys()
                .flat_map(|(x, y)| [x.clone(), y.clone()])
                .collect();
            observed.sort();
            observed.dedup();
            let inv = load_inventory(&a.inventory, observed)?;
            let inv_refs: Vec<&str> = inv.iter().map(String::as_str).collect();
            let rep = phoneme_level_rates(&table.rates, &inv_refs);
            for p in &rep.excluded {
                eprintln!("abxlab: warning: phoneme `{p}` has no scorable pair");
            }
            let rates: BTreeMap<String, f64> =
                rep.phonemes.iter().map(|(k, v)| (k.clone(), v.xi)).collect();
            let mut csv = String::from("phoneme,xi,n_pairs,class\n");
            for (k, v) in &rep.phonemes {
                let class = v.class.map(|c| serde_json::to_value(c).expect("json"));
                let class = class.as_ref().and_then(|c| c.as_str()).unwrap_or("");
                csv.push_str(&format!("{k},{:.6},{},{class}\n", v.xi, v.n_pairs));
            }
            out.add("phoneme.csv", csv);
            let body = json!({
                "condition": condition,
                "level": "phoneme",
                "phonemes": rep.phonemes,
                "excluded": rep.excluded,
                "missing_pairs": rep.missing_pairs,
            });
            ("phoneme", rates, body)
        }
        Level::Attribute => {
            let rep = af_attribute_rates(&table.rates, None)?;
            out.add("attribute.csv", rates_csv(("attribute", "rate"), &rep.rates));
            let body = json!({
                "condition": condition,
                "level": "attribute",
                "rates": rep.rates,
                "n_pairs": rep.n_pairs,
                "excluded": rep.excluded,
            });
            ("attribute", rep.rates, body)
        }
    };
    let bars: Vec<(String, f64)> = rates.iter().map(|(k, v)| (k.clone(), 100.0 * v)).collect();
    let title = format!("{name}-level ABX error rate ({})", condition.as_deref().unwrap_or("?"));
    out.add("bars.svg", bar_chart(&title, "error rate (%)", &bars, class_colour));
    out.add(format!("{name}.json"), pretty(body));
    let manifest = Manifest {
        command: "analyze phoneme".into(),
        config: json!({ "level": name, "inventory": a.inventory }),
        inputs: digest_inputs(&[("pairwise", &a.pairwise)])?,
        seed: None,
        started,
    };
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)
}

fn confusion(a: ConfusionArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let truth = load_label_tracks(&a.truth)?;
    let hyp = load_label_tracks(&a.hyp)?;
    let inventory = match &a.inventory {
        Some(choice) => Some(load_inventory(choice, Vec::new())?),
        None => None,
    };
    let opts = ConfusionOptions {
        strip_tones: a.strip_tones,
        inventory,
    };
    let cm = confusion_matrix(&truth, &hyp, a.frame_period_us, &opts)?;
    let pco = co_occurrence(&cm);
    let mut csv = String::from("phoneme,p_co,label,frames\n");
    for (k, v) in &pco {
        csv.push_str(&format!("{k},{:.6},{},{}\n", v.p_co, v.label, v.frames));
    }
    let mut out = Staged::default();
    out.add("confusion.csv", cm.to_csv());
    out.add("pco.csv", csv);
    out.add(
        "confusion.json",
        pretty(json!({
            "rows": cm.row_symbols,
            "columns": cm.col_symbols,
            "frame_counts": cm.frame_counts,
            "empty_rows": cm.empty_rows,
            "p_co": pco,
        })),
    );
    let manifest = Manifest {
        command: "analyze confusion".into(),
        config: json!({
            "strip_tones": a.strip_tones,
            "frame_period_us": a.frame_period_us,
            "inventory": a.inventory,
        }),
        inputs: digest_inputs(&[("truth", &a.truth), ("hyp", &a.hyp)])?,
        seed: None,
        started,
    };
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)
}

fn reduce(a: ReduceArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let red = relative_reduction(&load_rates(&a.baseline)?, &load_rates(&a.improved)?)?;
    for k in &red.undefined {
        eprintln!("abxlab: warning: `{k}` has baseline rate 0, reduction undefined");
    }
    let mut out = Staged::default();
    out.add("reduction.csv", rates_csv(("key", "reduction_percent"), &red.values));
    out.add(
        "reduction.json",
        pretty(json!({ "reduction_percent": red.values, "undefined": red.undefined })),
    );
    let manifest = Manifest {
        command: "analyze reduce".into(),
        config: json!({}),
        inputs: digest_inputs(&[("baseline", &a.baseline), ("improved", &a.improved)])?,
        seed: None,
        started,
    };
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)
}

fn correlate(a: CorrelateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let red = relative_reduction(&load_rates(&a.baseline)?, &load_rates(&a.improved)?)?;
    let pco = load_rates(&a.pco)?;
    let points: Vec<(String, f64, f64)> = red
        .values
        .iter()
        .filter_map(|(k, r)| pco.get(k).map(|p| (k.clone(), *p, *r)))
        .collect();
    let unmatched: Vec<&String> = red.values.keys().filter(|k| !pco.contains_key(*k)).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
    let r = correlation(&xs, &ys, a.method)?;
    let mut out = Staged::default();
    out.add(
        "scatter.svg",
        scatter_plot(
            &format!("relative reduction vs co-occurrence (r = {r:.3})"),
            "p_co",
            "relative ABX error rate reduction (%)",
            &points,
        ),
    );
    let mut csv = String::from("phoneme,p_co,reduction_percent\n");
    for (k, p, rr) in &points {
        csv.push_str(&format!("{k},{p:.6},{rr:.6}\n"));
    }
    out.add("points.csv", csv);
    out.add(
        "correlation.json",
        pretty(json!({
            "method": a.method,
            "r": r,
            "n": points.len(),
            "undefined_reduction": red.undefined,
            "without_pco": unmatched,
        })),
    );
    let manifest = Manifest {
        command: "analyze correlate".into(),
        config: json!({ "method": a.method }),
        inputs: digest_inputs(&[
            ("baseline", &a.baseline),
            ("improved", &a.improved),
            ("pco", &a.pco),
        ])?,
        seed: None,
        started,
    };
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)
}
