use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{load_corpus, MemeSample};
use crate::error::{Error, Result};
use crate::gradcore::{AdamConfig, AdamState, Real, Tape};
use crate::harness::{Precision, TrainConfig};
use crate::metrics::{aggregate, case_metrics, MetricsReport};
use crate::model::{
    checkpoint_bytes, labels_as, load_checkpoint_for_dim, predict, save_checkpoint, ForwardHooks,
    MimeParams,
};

// Keeps the shuffle stream distinct from the init stream for the same seed.
const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (best validation macro-F1).
    pub best_epoch: usize,
    pub test: Option<MetricsReport>,
    pub checkpoint_sha256: String,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// Everything except wall-clock time; identical across reruns with the
    /// same seed and inputs.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.wall_clock_secs = 0.0;
        serde_json::to_string(&r).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant: {}", self.config.variant);
        let _ = writeln!(s, "seed: {}", self.config.seed);
        for e in &self.epochs {
            let _ = write!(s, "epoch {:>3}  loss {:.6}", e.epoch, e.train_loss);
            if let Some(v) = &e.val {
                let _ = write!(s, "  val f1 {:.4}  em {:.4}", v.f1, v.exact_match);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "best epoch: {}", self.best_epoch);
        if let Some(t) = &self.test {
            let _ = writeln!(s, "test:\n{t}");
        }
        let _ = writeln!(s, "checkpoint sha256: {}", self.checkpoint_sha256);
        let _ = write!(s, "wall clock: {:.2}s", self.wall_clock_secs);
        s
    }
}

pub struct TrainOutcome {
    pub report: RunReport,
    pub params: MimeParams<f32>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn checkpoint_hash(params: &MimeParams<f32>) -> Result<String> {
    Ok(sha256_hex(&checkpoint_bytes(params)?))
}

/// Predicted labels for every sample, in corpus order.
pub fn predict_corpus<T: Real>(
    params: &MimeParams<T>,
    corpus: &[MemeSample],
    threshold: f64,
) -> Result<Vec<Vec<bool>>> {
    corpus
        .par_iter()
        .map(|s| params.logits(s).map(|z| predict(&z, threshold)))
        .collect()
}

/// Scores a corpus with an arbitrary predictor.
pub fn evaluate_with<F>(corpus: &[MemeSample], predictor: F) -> Result<MetricsReport>
where
    F: Fn(&MemeSample) -> Result<Vec<bool>> + Sync,
{
    let cases = corpus
        .par_iter()
        .map(|s| case_metrics(&predictor(s)?, &s.labels))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&cases)
}

pub fn evaluate<T: Real>(
    params: &MimeParams<T>,
    corpus: &[MemeSample],
    threshold: f64,
) -> Result<MetricsReport> {
    evaluate_with(corpus, |s| params.logits(s).map(|z| predict(&z, threshold)))
}

/// Loads a checkpoint and scores a corpus file with it. The checkpoint's
/// model dim is checked against the corpus before any forward pass.
pub fn evaluate_checkpoint(
    checkpoint: impl AsRef<Path>,
    corpus: impl AsRef<Path>,
    threshold: f64,
) -> Result<MetricsReport> {
    let corpus = load_corpus(corpus)?;
    let d = corpus
        .first()
        .map(MemeSample::dim)
        .ok_or_else(|| Error::Config("evaluation corpus is empty".into()))?;
    let params = load_checkpoint_for_dim(checkpoint, d)?;
    check_corpus(&params, &corpus)?;
    evaluate(&params, &corpus, threshold)
}

fn check_corpus<T: Real>(params: &MimeParams<T>, corpus: &[MemeSample]) -> Result<()> {
    corpus.iter().try_for_each(|s| params.check_sample(s))
}

/// Trains on in-memory splits. `val` drives model selection when present;
/// `test` is scored once with the selected parameters.
pub fn train_on(
    cfg: &TrainConfig,
    train: &[MemeSample],
    val: &[MemeSample],
    test: &[MemeSample],
) -> Result<TrainOutcome> {
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, train, val, test),
        Precision::F64 => train_typed::<f64>(cfg, train, val, test),
    }
}

fn train_typed<T: Real>(
    cfg: &TrainConfig,
    train: &[MemeSample],
    val: &[MemeSample],
    test: &[MemeSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let start = Instant::now();
    let mut params =
        MimeParams::<T>::init_with_std(cfg.d, cfg.heads, cfg.variant, cfg.seed, cfg.init_std)?;
    check_corpus(&params, train)?;
    check_corpus(&params, val)?;
    check_corpus(&params, test)?;

    let mut adam = AdamState::<T>::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MimeParams<T>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::<T>::new();
            let bound = params.bind(&mut tape);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &train[i];
                let trace = bound.forward(&mut tape, s, ForwardHooks::default())?;
                losses.push(tape.bce_with_logits(trace.logits, &labels_as::<T>(&s.labels))?);
            }
            let stacked = tape.concat_rows(&losses)?;
            let sum = tape.sum(stacked);
            let loss = tape.scale(sum, T::one() / T::from_f64(batch.len() as f64));
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::Training {
                    location: format!("epoch {epoch}, batch {}", b + 1),
                    msg: format!("non-finite loss {value}"),
                });
            }
            total += value * batch.len() as f64;
            tape.backward(loss)?;
            adam.step(&mut params, &tape.param_grads())
                .map_err(|e| match e {
                    Error::Training { msg, .. } => Error::Training {
                        location: format!("epoch {epoch}, batch {}", b + 1),
                        msg,
                    },
                    other => other,
                })?;
        }

        let val_report = if val.is_empty() {
            None
        } else {
            Some(evaluate(&params, val, cfg.threshold)?)
        };
        let score = val_report.as_ref().map_or(f64::NEG_INFINITY, |r| r.f1);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => val_report.is_none() || score > *b,
        };
        if improved {
            best = Some((score, epoch, params.clone()));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val: val_report,
        });
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    let test_report = if test.is_empty() {
        None
    } else {
        Some(evaluate(&best_params, test, cfg.threshold)?)
    };
    let params32 = best_params.cast::<f32>();
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(&params32, path)?;
    }
    let report = RunReport {
        config: cfg.clone(),
        epochs,
        best_epoch,
        test: test_report,
        checkpoint_sha256: checkpoint_hash(&params32)?,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        params: params32,
    })
}

/// Loads the corpora named in the config and trains.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let train_path = cfg
        .train
        .as_ref()
        .ok_or_else(|| Error::Config("no training corpus given".into()))?;
    let train = load_corpus(train_path)?;
    let val = cfg
        .val
        .as_ref()
        .map(load_corpus)
        .transpose()?
        .unwrap_or_default();
    let test = cfg
        .test
        .as_ref()
        .map(load_corpus)
        .transpose()?
        .unwrap_or_default();
    train_on(cfg, &train, &val, &test)
}
