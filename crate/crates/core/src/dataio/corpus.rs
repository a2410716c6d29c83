//! Corpus manifests.
//!
//! A manifest is a JSON-lines file. Each non-blank line describes one
//! sample; paths are relative to the manifest's directory:
//!
//! ```text
//! {"id":"m0001","channels":{"mm_meme":"m0001.mm_meme.memx","knowledge":"m0001.knowledge.memx"},
//!  "sentences":"m0001.sentences.memx","labels":[0,1,0],"text":"optional meme text"}
//! ```
//!
//! Channel files hold a `1×d` matrix, the sentence file an `n×d` matrix
//! with one row per context sentence in document order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{read_embedding, write_embedding, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Upper bound on context sentences per sample.
pub const MAX_SENTENCES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    MmMeme,
    TextMeme,
    ImageMeme,
    Knowledge,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::MmMeme,
        Channel::TextMeme,
        Channel::ImageMeme,
        Channel::Knowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::MmMeme => "mm_meme",
            Channel::TextMeme => "text_meme",
            Channel::ImageMeme => "image_meme",
            Channel::Knowledge => "knowledge",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel {s:?}")))
    }
}

/// One evidence-detection instance.
#[derive(Clone, Debug, PartialEq)]
pub struct MemeSample {
    pub id: String,
    pub channels: BTreeMap<Channel, EmbeddingMatrix>,
    /// `n × d`, one row per context sentence.
    pub sentences: EmbeddingMatrix,
    pub labels: Vec<bool>,
    pub text: Option<String>,
}

impl MemeSample {
    pub fn n(&self) -> usize {
        self.sentences.rows()
    }

    pub fn dim(&self) -> usize {
        self.sentences.cols()
    }

    pub fn channel(&self, c: Channel) -> Result<&EmbeddingMatrix> {
        self.channels
            .get(&c)
            .ok_or_else(|| Error::validation(&self.id, format!("missing channel {c}")))
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Checks the sample invariants. Gold training data must carry at least
    /// one evidence sentence; pass `require_positive = false` for unlabeled
    /// or prediction-only input.
    pub fn validate(&self, require_positive: bool) -> Result<()> {
        let err = |msg: String| Error::validation(&self.id, msg);
        let n = self.n();
        if n == 0 || n > MAX_SENTENCES {
            return Err(err(format!(
                "sentence count {n} outside 1..={MAX_SENTENCES}"
            )));
        }
        if self.labels.len() != n {
            return Err(err(format!(
                "{} labels for {n} sentences",
                self.labels.len()
            )));
        }
        let d = self.dim();
        for (c, m) in &self.channels {
            if m.shape() != [1, d] {
                return Err(err(format!(
                    "channel {c} has shape {:?}, expected [1, {d}]",
                    m.shape()
                )));
            }
        }
        if !self.sentences.is_finite() || self.channels.values().any(|m| !m.is_finite()) {
            return Err(err("non-finite embedding values".into()));
        }
        if require_positive && self.positives() == 0 {
            return Err(err("no evidence sentence in gold labels".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub channels: BTreeMap<Channel, PathBuf>,
    pub sentences: PathBuf,
    pub labels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub require_positive: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            require_positive: true,
        }
    }
}

pub fn load_corpus(manifest: impl AsRef<Path>) -> Result<Vec<MemeSample>> {
    load_corpus_with(manifest, LoadOptions::default())
}

pub fn load_corpus_with(manifest: impl AsRef<Path>, opts: LoadOptions) -> Result<Vec<MemeSample>> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            path: manifest.to_path_buf(),
            msg: format!("line {}: {e}", lineno + 1),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::validation(&rec.id, "duplicate sample id"));
        }
        let sample = load_record(&rec, base)?;
        sample.validate(opts.require_positive)?;
        samples.push(sample);
    }
    Ok(samples)
}

fn load_record(rec: &ManifestRecord, base: &Path) -> Result<MemeSample> {
    let labels = rec
        .labels
        .iter()
        .map(|&l| match l {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::validation(
                &rec.id,
                format!("label {other} is not 0 or 1"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut channels = BTreeMap::new();
    for (c, p) in &rec.channels {
        channels.insert(*c, read_embedding(base.join(p))?);
    }
    Ok(MemeSample {
        id: rec.id.clone(),
        channels,
        sentences: read_embedding(base.join(&rec.sentences))?,
        labels,
        text: rec.text.clone(),
    })
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `samples` as embedding files under `dir` plus a manifest named
/// `manifest_name`, returning the manifest path.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    manifest_name: &str,
    samples: &[MemeSample],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lines = String::new();
    for s in samples {
        let stem = file_stem_for(&s.id);
        let mut channels = BTreeMap::new();
        for (c, m) in &s.channels {
            let name = PathBuf::from(format!("{stem}.{c}.memx"));
            write_embedding(m, dir.join(&name))?;
            channels.insert(*c, name);
        }
        let sentences = PathBuf::from(format!("{stem}.sentences.memx"));
        write_embedding(&s.sentences, dir.join(&sentences))?;
        let rec = ManifestRecord {
            id: s.id.clone(),
            channels,
            sentences,
            labels: s.labels.iter().map(|&l| l as u8).collect(),
            text: s.text.clone(),
        };
        lines.push_str(&serde_json::to_string(&rec).expect("manifest record serializes"));
        lines.push('\n');
    }
    let path = dir.join(manifest_name);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(lines.as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
