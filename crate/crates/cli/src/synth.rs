use std::path::PathBuf;
use std::time::Instant;

use abxlab::corpus::{encode_fbin, write_items, write_label_tracks};
use abxlab::synth::{generate_corpus, SynthConfig};
use clap::Args;
use serde_json::json;

use crate::output::{Manifest, Staged, MANIFEST};
use crate::{CliError, OutDir};

#[derive(Args)]
pub struct SynthArgs {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (required unless the config sets one).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated phone symbols.
    #[arg(long, value_delimiter = ',')]
    phones: Option<Vec<String>>,
    #[arg(long)]
    n_speakers: Option<usize>,
    /// Standard deviation of per-frame Gaussian noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Standard deviation of per-speaker mean offsets.
    #[arg(long)]
    speaker_offset: Option<f64>,
    #[arg(long)]
    mean_scale: Option<f64>,
    #[arg(long)]
    segments_per_cell: Option<usize>,
    #[arg(long)]
    frame_period_us: Option<u32>,
    #[command(flatten)]
    out: OutDir,
}

pub fn run(a: SynthArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (mut cfg, seed_in_file) = match &a.config {
        Some(p) => {
            let raw: serde_json::Value = crate::read_json_config(p)?;
            let has_seed = raw.get("seed").is_some();
            let cfg: SynthConfig = serde_json::from_value(raw)
                .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", p.display())))?;
            (cfg, has_seed)
        }
        None => (SynthConfig::default(), false),
    };
    match a.seed {
        Some(s) => cfg.seed = s,
        None if !seed_in_file => {
            return Err(CliError::Usage("--seed is required (or set `seed` in --config)".into()))
        }
        None => {}
    }
    if let Some(v) = a.phones {
        cfg.phones = v;
    }
    if let Some(v) = a.n_speakers {
        cfg.n_speakers = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_scale = v;
    }
    if let Some(v) = a.speaker_offset {
        cfg.speaker_offset_scale = v;
    }
    if let Some(v) = a.mean_scale {
        cfg.mean_scale = v;
    }
    if let Some(v) = a.segments_per_cell {
        cfg.segments_per_cell = v;
    }
    if let Some(v) = a.frame_period_us {
        cfg.frame_period_us = v;
    }
    let corpus = generate_corpus(&cfg)?;

    let mut out = Staged::default();
    let period = corpus.archive.frame_period_us();
    for (utt, m) in corpus.archive.iter() {
        out.add(format!("features/{utt}.fbin"), encode_fbin(m, period));
    }
    out.add("items.item", write_items(&corpus.segments));
    out.add("truth.tsv", write_label_tracks(&corpus.truth));
    out.add("synth.json", corpus.sidecar_json());
    let manifest = Manifest {
        command: "synth".into(),
        config: serde_json::to_value(&cfg).expect("json"),
        inputs: match &a.config {
            Some(p) => crate::output::digest_inputs(&[("config", p)])?,
            None => json!({}),
        },
        seed: Some(cfg.seed),
        started,
    };
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)?;
    println!(
        "{} utterances, {} segments",
        corpus.archive.len(),
        corpus.segments.len()
    );
    Ok(())
}
