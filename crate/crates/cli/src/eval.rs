use std::path::PathBuf;
use std::time::Instant;

use abxlab::report::{contexts_csv, pairwise_csv, report_json_string};
use abxlab::{
    load_af_table, load_feature_archive, load_item_file, score_corpus, CellLimits, DtwConfig,
    FeatureFormat, SpeakerMode, TaskKind,
};
use abxlab::abx::ScoreOptions;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::output::{digest_inputs, Manifest, Staged, MANIFEST};
use crate::{read_json_config, CliError, OutDir};

#[derive(Args)]
pub struct EvalArgs {
    /// Feature archive directory (or single feature file).
    #[arg(long)]
    features: PathBuf,
    /// Item file listing the phone segments.
    #[arg(long)]
    items: PathBuf,
    /// Speaker condition: within or across.
    #[arg(long)]
    mode: Option<SpeakerMode>,
    /// Task: phone or af.
    #[arg(long)]
    task: Option<TaskKind>,
    /// Built-in AF table name or TSV path (af task only).
    #[arg(long)]
    af_table: Option<String>,
    /// Cap on ordered speaker pairs per context (across mode).
    #[arg(long)]
    max_speaker_pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature file format: binary (fbin) or text (ftxt).
    #[arg(long)]
    format: Option<FeatureFormat>,
    /// Distance assigned to a frame pair involving a zero vector.
    #[arg(long)]
    zero_vector_distance: Option<f64>,
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: Option<SpeakerMode>,
    pub task: Option<TaskKind>,
    pub af_table: Option<String>,
    pub max_speaker_pairs: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<FeatureFormat>,
    pub zero_vector_distance: Option<f64>,
}

pub fn run(a: EvalArgs, jobs: usize) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg: EvalConfig = match &a.config {
        Some(p) => read_json_config(p)?,
        None => EvalConfig::default(),
    };
    cfg.mode = a.mode.or(cfg.mode);
    cfg.task = a.task.or(cfg.task);
    cfg.af_table = a.af_table.or(cfg.af_table);
    cfg.max_speaker_pairs = a.max_speaker_pairs.or(cfg.max_speaker_pairs);
    cfg.seed = Some(a.seed.or(cfg.seed).unwrap_or(abxlab::abx::DEFAULT_SEED));
    cfg.format = Some(a.format.or(cfg.format).unwrap_or(FeatureFormat::Binary));
    cfg.zero_vector_distance = Some(a.zero_vector_distance.or(cfg.zero_vector_distance).unwrap_or(1.0));

    let mode = cfg.mode.ok_or_else(|| CliError::Usage("--mode is required".into()))?;
    let task = cfg.task.ok_or_else(|| CliError::Usage("--task is required".into()))?;
    let af_table = match (task, &cfg.af_table) {
        (TaskKind::Af, Some(t)) => Some(load_af_table(t)?),
        (TaskKind::Af, None) => return Err(CliError::Usage("--task af needs --af-table".into())),
        (TaskKind::Phone, Some(_)) => {
            return Err(CliError::Usage("--af-table only applies to --task af".into()))
        }
        (TaskKind::Phone, None) => None,
    };
    if cfg.max_speaker_pairs == Some(0) {
        return Err(CliError::Usage("--max-speaker-pairs must be positive".into()));
    }
    let opts = ScoreOptions {
        mode,
        kind: task,
        af_table,
        dtw: DtwConfig::new(cfg.zero_vector_distance.unwrap_or(1.0))?,
        limits: CellLimits {
            max_speaker_pairs_per_context: cfg.max_speaker_pairs,
            seed: cfg.seed.unwrap_or_default(),
        },
        jobs,
    };

    let archive = load_feature_archive(&a.features, cfg.format.unwrap_or(FeatureFormat::Binary))?;
    let segments = load_item_file(&a.items)?;
    let report = score_corpus(&archive, &segments, &opts)?;

    let mut inputs = vec![("features", a.features.as_path()), ("items", a.items.as_path())];
    let table_path = cfg.af_table.as_ref().map(PathBuf::from).filter(|p| p.is_file());
    if let Some(p) = &table_path {
        inputs.push(("af_table", p.as_path()));
    }
    let manifest = Manifest {
        command: "eval".into(),
        config: serde_json::to_value(&cfg).expect("json"),
        inputs: digest_inputs(&inputs)?,
        seed: cfg.seed,
        started,
    };
    let mut out = Staged::default();
    out.add("report.json", report_json_string(&report));
    out.add("pairwise.csv", pairwise_csv(&report));
    out.add("contexts.csv", contexts_csv(&report));
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)?;
    println!("overall {} ({} cells)", abxlab::report::format_rate(report.overall), report.metadata.n_cells);
    Ok(())
}
