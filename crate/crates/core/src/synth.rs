//! Seeded synthetic corpora with known phone separation.
//!
//! Every frame of a segment is `phone_mean + speaker_bias + noise`. With
//! zero noise and one-hot means the ABX error is exactly zero, which makes
//! these corpora the analytic oracle for the scoring pipeline.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_items, write_label_tracks, FeatureArchive, FeatureFormat, FrameLabelTrack, FrameMatrix,
    ItemSegment, LabelSpan,
};
use crate::error::{Error, Result};

/// Name and version of the random stream, recorded in `synth.json`.
pub const GENERATOR: &str = "rand_chacha::ChaCha8Rng/0.9 + rand_distr::StandardNormal(ziggurat)/0.5";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub phones: Vec<String>,
    /// Explicit per-phone means; scaled one-hot vectors when absent.
    pub means: Option<Vec<Vec<f64>>>,
    pub mean_scale: f64,
    /// Feature dimension; defaults to the number of phones.
    pub dim: Option<usize>,
    pub n_speakers: usize,
    pub speaker_offset_scale: f64,
    pub noise_scale: f64,
    pub segments_per_cell: usize,
    /// Inclusive range of segment lengths in frames.
    pub frames_per_segment: (usize, usize),
    pub contexts: Vec<(String, String)>,
    pub frame_period_us: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            phones: ["AA", "AE", "EH", "IY", "UW"].map(String::from).to_vec(),
            means: None,
            mean_scale: 1.0,
            dim: None,
            n_speakers: 3,
            speaker_offset_scale: 0.0,
            noise_scale: 0.0,
            segments_per_cell: 3,
            frames_per_segment: (3, 6),
            contexts: vec![("S".into(), "T".into()), ("K".into(), "D".into())],
            frame_period_us: 10_000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(self.phones.len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.phones.is_empty() {
            return bad("at least one phone is required".into());
        }
        let symbols = self.phones.iter().chain(self.contexts.iter().flat_map(|(a, b)| [a, b]));
        if let Some(s) = symbols.into_iter().find(|s| s.is_empty() || s.contains(char::is_whitespace)) {
            return bad(format!("phone symbol `{s}` is empty or contains whitespace"));
        }
        if self.n_speakers == 0 {
            return bad("at least one speaker is required".into());
        }
        if self.contexts.is_empty() {
            return bad("at least one context is required".into());
        }
        if self.segments_per_cell == 0 {
            return bad("segments_per_cell must be positive".into());
        }
        let (lo, hi) = self.frames_per_segment;
        if lo == 0 || hi < lo {
            return bad(format!("invalid frames_per_segment ({lo}, {hi})"));
        }
        if self.frame_period_us == 0 {
            return bad("frame_period_us must be positive".into());
        }
        for (name, v) in [
            ("mean_scale", self.mean_scale),
            ("speaker_offset_scale", self.speaker_offset_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        let dim = self.dim();
        if dim == 0 {
            return bad("dim must be positive".into());
        }
        let mut sorted = self.phones.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.phones.len() {
            return bad("phone symbols must be distinct".into());
        }
        match &self.means {
            None if dim < self.phones.len() => bad(format!(
                "one-hot means need dim >= {} phones, got {dim}",
                self.phones.len()
            )),
            Some(m) if m.len() != self.phones.len() => {
                bad(format!("{} means for {} phones", m.len(), self.phones.len()))
            }
            Some(m) if m.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) => {
                bad(format!("every mean must have {dim} finite values"))
            }
            _ => Ok(()),
        }
    }

    fn phone_means(&self) -> Vec<Vec<f64>> {
        match &self.means {
            Some(m) => m.clone(),
            None => (0..self.phones.len())
                .map(|k| {
                    let mut v = vec![0.0; self.dim()];
                    v[k] = self.mean_scale;
                    v
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub archive: FeatureArchive,
    pub segments: Vec<ItemSegment>,
    pub truth: Vec<FrameLabelTrack>,
    pub config: SynthConfig,
}

pub fn speaker_id(s: usize) -> String {
    format!("spk{s:02}")
}

/// Generates a corpus; identical configs give identical corpora.
///
/// Each (speaker, context, repetition) becomes one utterance holding every
/// phone once, in a seeded random order.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let dim = cfg.dim();
    let means = cfg.phone_means();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let biases: Vec<Vec<f64>> = (0..cfg.n_speakers)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter()
                .map(|v| if norm > 0.0 { v / norm * cfg.speaker_offset_scale } else { 0.0 })
                .collect()
        })
        .collect();

    let period_s = f64::from(cfg.frame_period_us) / 1e6;
    let mut utterances = Vec::new();
    let mut segments = Vec::new();
    let mut truth = Vec::new();
    for (s, bias) in biases.iter().enumerate() {
        let spk = speaker_id(s);
        for (c, (prev, next)) in cfg.contexts.iter().enumerate() {
            for r in 0..cfg.segments_per_cell {
                let utt = format!("{spk}_c{c}_r{r}");
                let mut order: Vec<usize> = (0..cfg.phones.len()).collect();
                order.shuffle(&mut rng);
                let mut data = Vec::new();
                let mut spans = Vec::new();
                let mut start = 0usize;
                for &p in &order {
                    let len = rng.random_range(cfg.frames_per_segment.0..=cfg.frames_per_segment.1);
                    for _ in 0..len {
                        for d in 0..dim {
                            let noise: f64 = if cfg.noise_scale > 0.0 {
                                cfg.noise_scale * rng.sample::<f64, _>(StandardNormal)
                            } else {
                                0.0
                            };
                            data.push((means[p][d] + bias[d] + noise) as f32);
                        }
                    }
                    let onset = start as f64 * period_s;
                    let offset = (start + len) as f64 * period_s;
                    segments.push(ItemSegment {
                        utt: utt.clone(),
                        onset,
                        offset,
                        phone: cfg.phones[p].clone(),
                        prev: prev.clone(),
                        next: next.clone(),
                        speaker: spk.clone(),
                    });
                    spans.push(LabelSpan {
                        onset,
                        offset,
                        label: cfg.phones[p].clone(),
                    });
                    start += len;
                }
                utterances.push((utt.clone(), FrameMatrix::new(dim, data)?));
                truth.push(FrameLabelTrack { utt, spans });
            }
        }
    }
    truth.sort_by(|a, b| a.utt.cmp(&b.utt));
    Ok(SynthCorpus {
        archive: FeatureArchive::new(dim, cfg.frame_period_us, utterances)?,
        segments,
        truth,
        config: cfg.clone(),
    })
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    generator: &'static str,
    seed: u64,
    config: &'a SynthConfig,
}

impl SynthCorpus {
    /// Writes `features/*.fbin`, `items.item`, `truth.tsv` and `synth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.archive.write(&dir.join("features"), FeatureFormat::Binary)?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("items.item", write_items(&self.segments))?;
        put("truth.tsv", write_label_tracks(&self.truth))?;
        put("synth.json", self.sidecar_json())
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Sidecar {
            generator: GENERATOR,
            seed: self.config.seed,
            config: &self.config,
        })
        .expect("json");
        s.push('\n');
        s
    }
}
