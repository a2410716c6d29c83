//! Knowledge-enriched meme encoder.
//!
//! The meme vector `H_m` and the pooled knowledge vector `H_k` are fused by
//! two sigmoid gates computed from their concatenation:
//!
//! ```text
//! z   = [H_m ; H_k]                  (1 × 2d)
//! g_m = σ(z W_m + b_m)               (1 × d)
//! g_k = σ(z W_k + b_k)
//! Ĥ_m = g_m ⊙ H_m + g_k ⊙ H_k
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::dataio::{read_embedding, write_embedding, Channel, EmbeddingMatrix, MemeSample};
use crate::error::{Error, Result};
use crate::gradcore::{ParamSet, Real, Tape, Tensor, Var};
use crate::init::gaussian;

/// Word vectors distilled from knowledge-graph node representations.
#[derive(Clone, Debug)]
pub struct KnowledgeTable {
    index: HashMap<String, usize>,
    vectors: EmbeddingMatrix,
}

impl KnowledgeTable {
    /// Words are case-folded; a repeated word keeps its first row.
    pub fn new(words: &[String], vectors: EmbeddingMatrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::dim(
                "knowledge_table",
                &[words.len()],
                vectors.shape(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            index.entry(w.to_lowercase()).or_insert(i);
        }
        Ok(Self { index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn lookup(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(&word.to_lowercase())
            .map(|&i| self.vectors.row_slice(i))
    }

    /// Reads a vector file plus its row-aligned word list (one word per line).
    pub fn load(vectors: impl AsRef<Path>, words: impl AsRef<Path>) -> Result<Self> {
        let words_path = words.as_ref();
        let text = fs::read_to_string(words_path).map_err(|e| Error::io(words_path, e))?;
        let words: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        Self::new(&words, read_embedding(vectors)?)
    }

    pub fn save(&self, vectors: impl AsRef<Path>, words: impl AsRef<Path>) -> Result<()> {
        let mut by_row: Vec<(&usize, &String)> = self.index.iter().map(|(w, i)| (i, w)).collect();
        by_row.sort();
        let rows: Vec<f32> = by_row
            .iter()
            .flat_map(|(&i, _)| self.vectors.row_slice(i).to_vec())
            .collect();
        let m = Tensor::matrix(by_row.len(), self.dim(), rows);
        write_embedding(&m, vectors)?;
        let list: String = by_row.iter().map(|(_, w)| format!("{w}\n")).collect();
        let p = words.as_ref();
        fs::write(p, list).map_err(|e| Error::io(p, e))
    }
}

/// Mean of the table vectors of `tokens`. Unknown tokens contribute a zero
/// vector but still count toward the mean; no tokens gives zero.
pub fn knowledge_repr<S: AsRef<str>>(tokens: &[S], table: &KnowledgeTable) -> EmbeddingMatrix {
    let d = table.dim();
    let mut acc = vec![0.0f64; d];
    for t in tokens {
        if let Some(v) = table.lookup(t.as_ref()) {
            for (a, &x) in acc.iter_mut().zip(v) {
                *a += x as f64;
            }
        }
    }
    let n = tokens.len().max(1) as f64;
    Tensor::matrix(1, d, acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Fills the knowledge channel of samples that carry meme text but no
/// knowledge vector. Returns how many samples were filled.
pub fn fill_knowledge(samples: &mut [MemeSample], table: &KnowledgeTable) -> Result<usize> {
    let mut filled = 0;
    for s in samples.iter_mut() {
        if s.channels.contains_key(&Channel::Knowledge) {
            continue;
        }
        let Some(text) = &s.text else { continue };
        if table.dim() != s.dim() {
            return Err(Error::validation(
                &s.id,
                format!(
                    "knowledge table dim {} != sample dim {}",
                    table.dim(),
                    s.dim()
                ),
            ));
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        s.channels
            .insert(Channel::Knowledge, knowledge_repr(&tokens, table));
        filled += 1;
    }
    Ok(filled)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmfParams<T: Real = f32> {
    pub w_m: Tensor<T>,
    pub w_k: Tensor<T>,
    pub b_m: Tensor<T>,
    pub b_k: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct GmfVars {
    pub w_m: Var,
    pub w_k: Var,
    pub b_m: Var,
    pub b_k: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GmfOutput {
    pub fused: Var,
    pub g_m: Var,
    pub g_k: Var,
}

impl<T: Real> GmfParams<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_m: Tensor::zeros(2 * d, d),
            w_k: Tensor::zeros(2 * d, d),
            b_m: Tensor::zeros(1, d),
            b_k: Tensor::zeros(1, d),
        }
    }

    /// Gaussian weights, zero biases.
    pub fn init<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        Self {
            w_m: gaussian(rng, 2 * d, d, std),
            w_k: gaussian(rng, 2 * d, d, std),
            b_m: Tensor::zeros(1, d),
            b_k: Tensor::zeros(1, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.b_m.cols()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> GmfVars {
        GmfVars {
            w_m: tape.param("kme.w_m", &self.w_m),
            w_k: tape.param("kme.w_k", &self.w_k),
            b_m: tape.param("kme.b_m", &self.b_m),
            b_k: tape.param("kme.b_k", &self.b_k),
        }
    }

    /// Tape-free fusion, returning `(Ĥ_m, g_m, g_k)`.
    pub fn fuse(
        &self,
        h_m: &Tensor<T>,
        h_k: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let m = tape.constant(h_m.clone());
        let k = tape.constant(h_k.clone());
        let out = gmf_fuse(&mut tape, m, k, &vars)?;
        Ok((
            tape.value(out.fused).detached(),
            tape.value(out.g_m).detached(),
            tape.value(out.g_k).detached(),
        ))
    }
}

impl<T: Real> ParamSet<T> for GmfParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("kme.w_m".into(), &self.w_m),
            ("kme.w_k".into(), &self.w_k),
            ("kme.b_m".into(), &self.b_m),
            ("kme.b_k".into(), &self.b_k),
        ]
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            ("kme.w_m".into(), &mut self.w_m),
            ("kme.w_k".into(), &mut self.w_k),
            ("kme.b_m".into(), &mut self.b_m),
            ("kme.b_k".into(), &mut self.b_k),
        ]
    }
}

pub fn gmf_fuse<T: Real>(tape: &mut Tape<T>, h_m: Var, h_k: Var, p: &GmfVars) -> Result<GmfOutput> {
    let d = tape.value(p.b_m).cols();
    for v in [h_m, h_k] {
        if tape.shape(v) != [1, d] {
            return Err(Error::dim("gmf_fuse", tape.shape(v), &[1, d]));
        }
    }
    let z = tape.concat_cols(&[h_m, h_k])?;
    let zm = tape.matmul(z, p.w_m)?;
    let zm = tape.add(zm, p.b_m)?;
    let g_m = tape.sigmoid(zm);
    let zk = tape.matmul(z, p.w_k)?;
    let zk = tape.add(zk, p.b_k)?;
    let g_k = tape.sigmoid(zk);
    let a = tape.mul(g_m, h_m)?;
    let b = tape.mul(g_k, h_k)?;
    let fused = tape.add(a, b)?;
    Ok(GmfOutput { fused, g_m, g_k })
}
