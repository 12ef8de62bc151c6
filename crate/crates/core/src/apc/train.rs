use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::net::ApcModel;
use super::{ApcConfig, Optimizer};
use crate::corpus::{FeatureArchive, FrameMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ApcModel,
    /// Mean per-utterance loss for each epoch, measured during the pass.
    pub loss_curve: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

fn to_f64_rows(m: &FrameMatrix) -> Vec<Vec<f64>> {
    m.rows().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect()
}

/// Fill `input_dim` from the archive when unset, otherwise check it.
pub(crate) fn resolve_config(cfg: &ApcConfig, dim: usize) -> Result<ApcConfig> {
    let mut cfg = cfg.clone();
    if cfg.input_dim == 0 {
        cfg.input_dim = dim;
    } else if cfg.input_dim != dim {
        return Err(Error::Argument(format!(
            "config input_dim {} does not match feature dim {dim}",
            cfg.input_dim
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Mini-batch training with full backpropagation through time.
///
/// Utterances are shuffled every epoch by a generator seeded from the config;
/// the batch gradient is the mean of per-utterance gradients.
pub fn train(cfg: &ApcConfig, corpus: &FeatureArchive) -> Result<TrainOutcome> {
    let cfg = resolve_config(cfg, corpus.dim())?;
    let n = cfg.prediction_step;
    if corpus.is_empty() {
        return Err(Error::Data("training archive has no utterances".into()));
    }
    let mut data = Vec::with_capacity(corpus.len());
    for (utt, m) in corpus.iter() {
        if m.nframes() <= n {
            return Err(Error::InsufficientLength {
                utt: utt.to_string(),
                nframes: m.nframes(),
                step: n,
            });
        }
        data.push(to_f64_rows(m));
    }

    let mut model = ApcModel::init(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam {
        m: vec![0.0; model.n_params()],
        v: vec![0.0; model.n_params()],
        step: 0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = if cfg.linear_decay {
            cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64)
        } else {
            cfg.learning_rate
        };
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; model.n_params()];
            for &i in batch {
                let (loss, g) = model.loss_and_grad(&data[i]);
                total += loss;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            step(&cfg, &mut model, &mut adam, &grad, lr);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        curve.push(mean);
    }
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
    })
}

fn step(cfg: &ApcConfig, model: &mut ApcModel, adam: &mut Adam, grad: &[f64], lr: f64) {
    let params = model.params_mut();
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam => {
            adam.step += 1;
            let c1 = 1.0 - cfg.beta1.powi(adam.step);
            let c2 = 1.0 - cfg.beta2.powi(adam.step);
            for (k, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                adam.m[k] = cfg.beta1 * adam.m[k] + (1.0 - cfg.beta1) * g;
                adam.v[k] = cfg.beta2 * adam.v[k] + (1.0 - cfg.beta2) * g * g;
                let mh = adam.m[k] / c1;
                let vh = adam.v[k] / c2;
                *p -= lr * mh / (vh.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}

/// Top-layer activations for every utterance, same length and frame period.
pub fn extract_features(model: &ApcModel, archive: &FeatureArchive) -> Result<FeatureArchive> {
    if archive.dim() != model.config().input_dim {
        return Err(Error::Argument(format!(
            "archive dim {} does not match model input_dim {}",
            archive.dim(),
            model.config().input_dim
        )));
    }
    let utts: Vec<(&str, &FrameMatrix)> = archive.iter().collect();
    let out = utts
        .par_iter()
        .map(|(utt, m)| {
            let fw = model.forward(m)?;
            let data = fw.top_hidden.iter().flatten().map(|&v| v as f32).collect();
            Ok((utt.to_string(), FrameMatrix::new(model.config().hidden_dim, data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureArchive::new(model.config().hidden_dim, archive.frame_period_us(), out)
}
