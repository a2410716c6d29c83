//! Synthetic corpora with a planted, recoverable evidence signal.
//!
//! Each sample draws unit-norm latent vectors: a meme vector `m`, a
//! knowledge vector `k` and a topic vector `t`. Evidence sentences are
//! `normalize(α·s + σ·u)` for a signal vector `s` and a random unit `u`;
//! distractors are independent random unit vectors. The mode picks `s`:
//!
//! | mode        | signal | mm_meme           | text_meme         | image_meme        | knowledge |
//! |-------------|--------|-------------------|-------------------|-------------------|-----------|
//! | `fusion`    | `m`    | `m`               | `normalize(m+u₁)` | `normalize(m+u₂)` | `k`       |
//! | `knowledge` | `k`    | `m`               | `normalize(m+u₁)` | `normalize(m+u₂)` | `k`       |
//! | `text_only` | `t`    | `normalize(m+t)`  | `t`               | `m`               | `k`       |
//!
//! so in knowledge mode the signal is reachable only through the knowledge
//! channel.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{write_corpus, Channel, MemeSample, MAX_SENTENCES};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    Fusion,
    Knowledge,
    TextOnly,
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthMode::Fusion => "fusion",
            SynthMode::Knowledge => "knowledge",
            SynthMode::TextOnly => "text_only",
        })
    }
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(SynthMode::Fusion),
            "knowledge" => Ok(SynthMode::Knowledge),
            "text_only" | "text-only" => Ok(SynthMode::TextOnly),
            _ => Err(Error::Config(format!("unknown synthetic mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_samples: usize,
    pub d: usize,
    /// Inclusive sentence-count range.
    pub n_range: (usize, usize),
    /// Inclusive evidence-count range.
    pub evidence_range: (usize, usize),
    pub mode: SynthMode,
    pub alpha: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            d: 32,
            n_range: (3, 10),
            evidence_range: (1, 3),
            mode: SynthMode::Fusion,
            alpha: 0.8,
            noise: 0.3,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (n_lo, n_hi) = self.n_range;
        let (e_lo, e_hi) = self.evidence_range;
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if n_lo == 0 || n_lo > n_hi || n_hi > MAX_SENTENCES {
            return bad(format!(
                "sentence range {n_lo}..={n_hi} must lie in 1..={MAX_SENTENCES}"
            ));
        }
        if e_lo == 0 || e_lo > e_hi {
            return bad(format!(
                "evidence range {e_lo}..={e_hi} must be non-empty and start at 1 or more"
            ));
        }
        if e_hi > n_lo {
            return bad(format!(
                "impossible config: up to {e_hi} evidence sentences but samples may have only {n_lo} sentences"
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("signal strength {} outside (0, 1]", self.alpha));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!(
                "noise {} must be finite and non-negative",
                self.noise
            ));
        }
        Ok(())
    }

    /// Expected fraction of positive sentences pooled over a large corpus.
    pub fn expected_base_rate(&self) -> f64 {
        let mean = |(lo, hi): (usize, usize)| (lo + hi) as f64 / 2.0;
        mean(self.evidence_range) / mean(self.n_range)
    }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}

fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

fn row(v: &[f64]) -> Tensor<f32> {
    Tensor::matrix(1, v.len(), v.iter().map(|&x| x as f32).collect())
}

fn one_sample(cfg: &SynthConfig, rng: &mut ChaCha8Rng, idx: usize) -> MemeSample {
    let d = cfg.d;
    let m = unit(rng, d);
    let k = unit(rng, d);
    let t = unit(rng, d);
    let u1 = unit(rng, d);
    let u2 = unit(rng, d);
    let n = rng.random_range(cfg.n_range.0..=cfg.n_range.1);
    let e = rng.random_range(cfg.evidence_range.0..=cfg.evidence_range.1);
    let mut labels = vec![false; n];
    for i in sample_indices(rng, n, e) {
        labels[i] = true;
    }

    let signal = match cfg.mode {
        SynthMode::Fusion => &m,
        SynthMode::Knowledge => &k,
        SynthMode::TextOnly => &t,
    };
    let mut rows = Vec::with_capacity(n * d);
    for &is_evidence in &labels {
        let v = if is_evidence {
            if cfg.noise == 0.0 {
                signal.clone()
            } else {
                let u = unit(rng, d);
                normalize(mix(signal, cfg.alpha, &u, cfg.noise))
            }
        } else {
            unit(rng, d)
        };
        rows.extend(v.into_iter().map(|x| x as f32));
    }

    let mut channels = BTreeMap::new();
    match cfg.mode {
        SynthMode::Fusion | SynthMode::Knowledge => {
            channels.insert(Channel::MmMeme, row(&m));
            channels.insert(Channel::TextMeme, row(&normalize(mix(&m, 1.0, &u1, 1.0))));
            channels.insert(Channel::ImageMeme, row(&normalize(mix(&m, 1.0, &u2, 1.0))));
        }
        SynthMode::TextOnly => {
            channels.insert(Channel::MmMeme, row(&normalize(mix(&m, 1.0, &t, 1.0))));
            channels.insert(Channel::TextMeme, row(&t));
            channels.insert(Channel::ImageMeme, row(&m));
        }
    }
    channels.insert(Channel::Knowledge, row(&k));

    MemeSample {
        id: format!("syn-{}-{:05}", cfg.mode, idx),
        channels,
        sentences: Tensor::matrix(n, d, rows),
        labels,
        text: None,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<MemeSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.num_samples)
        .map(|i| one_sample(cfg, &mut rng, i))
        .collect())
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<MemeSample>,
    pub val: Vec<MemeSample>,
    pub test: Vec<MemeSample>,
}

/// Generates `train + val + test` samples in one stream and cuts it in order.
pub fn generate_splits(cfg: &SynthConfig, train: usize, val: usize, test: usize) -> Result<Splits> {
    let mut all = generate(&SynthConfig {
        num_samples: train + val + test,
        ..cfg.clone()
    })?;
    let test_part = all.split_off(train + val);
    let val_part = all.split_off(train);
    Ok(Splits {
        train: all,
        val: val_part,
        test: test_part,
    })
}

/// Cuts a corpus 80:10:10 in order.
pub fn split_80_10_10(mut samples: Vec<MemeSample>) -> Splits {
    let n = samples.len();
    let train = n * 8 / 10;
    let val = n / 10;
    let test = samples.split_off(train + val);
    let val_part = samples.split_off(train);
    Splits {
        train: samples,
        val: val_part,
        test,
    }
}

/// Writes `train.jsonl`, `val.jsonl` and `test.jsonl` (80:10:10) under `dir`.
pub fn generate_to_dir(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<[PathBuf; 3]> {
    let dir = dir.as_ref();
    let s = split_80_10_10(generate(cfg)?);
    Ok([
        write_corpus(dir, "train.jsonl", &s.train)?,
        write_corpus(dir, "val.jsonl", &s.val)?,
        write_corpus(dir, "test.jsonl", &s.test)?,
    ])
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Non-learned baseline: a sentence is evidence when its cosine similarity
/// to the sum of the given meme-side channels reaches `threshold`.
pub fn cosine_rule(sample: &MemeSample, channels: &[Channel], threshold: f64) -> Result<Vec<bool>> {
    let d = sample.dim();
    let mut probe = vec![0.0f32; d];
    for &c in channels {
        for (p, &v) in probe.iter_mut().zip(sample.channel(c)?.data()) {
            *p += v;
        }
    }
    Ok((0..sample.n())
        .map(|i| cosine(&probe, sample.sentences.row_slice(i)) >= threshold)
        .collect())
}
