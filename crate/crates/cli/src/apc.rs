use std::path::PathBuf;
use std::time::Instant;

use abxlab::apc::{
    encode_checkpoint, extract_features, load_checkpoint, random_gradient_check, train,
    ApcConfig, GRADCHECK_TOLERANCE,
};
use abxlab::corpus::encode_fbin;
use abxlab::{load_feature_archive, FeatureFormat};
use clap::{Args, Subcommand};
use serde_json::json;

use crate::output::{digest_inputs, Manifest, Staged, MANIFEST};
use crate::{read_json_config, CliError, OutDir};

#[derive(Subcommand)]
pub enum ApcCommand {
    /// Train a model; writes model.apc and loss.csv.
    Train(TrainArgs),
    /// Top-layer features for every utterance of an archive.
    Extract(ExtractArgs),
    /// Compare analytic and finite-difference gradients on a random instance.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// JSON model/training config; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "binary")]
    format: FeatureFormat,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Checkpoint written by `apc train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "binary")]
    format: FeatureFormat,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// JSON config giving the model shape; defaults to a 2-layer LSTM, H = 4, d = 3.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(cmd: ApcCommand) -> Result<(), CliError> {
    match cmd {
        ApcCommand::Train(a) => cmd_train(a),
        ApcCommand::Extract(a) => cmd_extract(a),
        ApcCommand::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ApcConfig, CliError> {
    match path {
        Some(p) => read_json_config(p),
        None => Ok(ApcConfig::default()),
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let archive = load_feature_archive(&a.features, a.format)?;
    let outcome = train(&cfg, &archive)?;
    let mut curve = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{i},{l:.9}\n"));
    }
    let mut inputs = vec![("features", a.features.as_path())];
    if let Some(p) = &a.config {
        inputs.push(("config", p.as_path()));
    }
    let effective = outcome.model.config().clone();
    let manifest = Manifest {
        command: "apc train".into(),
        config: serde_json::to_value(&effective).expect("json"),
        inputs: digest_inputs(&inputs)?,
        seed: Some(effective.seed),
        started,
    };
    let mut out = Staged::default();
    out.add("model.apc", encode_checkpoint(&outcome.model)?);
    out.add("loss.csv", curve);
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)?;
    if let (Some(first), Some(last)) = (outcome.loss_curve.first(), outcome.loss_curve.last()) {
        println!("loss {first:.6} -> {last:.6}");
    }
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let model = load_checkpoint(&a.model)?;
    let archive = load_feature_archive(&a.features, a.format)?;
    let feats = extract_features(&model, &archive)?;
    let mut out = Staged::default();
    for (utt, m) in feats.iter() {
        out.add(format!("{utt}.fbin"), encode_fbin(m, feats.frame_period_us()));
    }
    let manifest = Manifest {
        command: "apc extract".into(),
        config: serde_json::to_value(model.config()).expect("json"),
        inputs: digest_inputs(&[("model", &a.model), ("features", &a.features)])?,
        seed: Some(model.config().seed),
        started,
    };
    out.add(MANIFEST, manifest.render());
    out.commit(&a.out.out)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(_) => load_config(&a.config)?,
        None => ApcConfig {
            layers: 2,
            hidden_dim: 4,
            input_dim: 3,
            ..ApcConfig::default()
        },
    };
    let res = random_gradient_check(&cfg, a.seed)?;
    println!(
        "{}",
        json!({
            "max_relative_error": if res.inconclusive { None } else { Some(res.max_relative_error) },
            "tolerance": GRADCHECK_TOLERANCE,
            "inconclusive": res.inconclusive,
            "n_params": res.n_params,
            "attempts": res.attempts,
        })
    );
    if res.inconclusive {
        Err(CliError::GradcheckInconclusive)
    } else if res.passed() {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed(res.max_relative_error))
    }
}
