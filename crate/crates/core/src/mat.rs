//! Meme-aware transformer encoder.
//!
//! Keys and values of ordinary self-attention over the context sentences are
//! pulled toward a projection of the meme vector `Ĥ_m`, by per-sentence
//! sigmoid gates:
//!
//! ```text
//! Q, K, V = H_c W_Q, H_c W_K, H_c W_V
//! λ_k     = σ(K W_k1 + (Ĥ_m U_k) W_k2)          (n × 1)
//! K̂       = (1 - λ_k) ⊙ K + λ_k ⊙ (Ĥ_m U_k)
//! ```
//!
//! and likewise for `V̂`. Gating happens in the full `d`-dimensional space;
//! the result then goes through standard multi-head scaled dot-product
//! attention, a residual + layer-norm, and a position-wise feed-forward
//! sublayer with its own residual + layer-norm.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{ParamSet, Real, Tape, Tensor, Var};
use crate::init::gaussian;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const FFN_MULT: usize = 4;

/// Whether the key/value gates are computed or pinned to zero. `Off`
/// reduces the layer to conventional self-attention; it is used for the
/// plain-transformer ablation and in reduction tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GateMode {
    #[default]
    Learned,
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatParams<T: Real = f32> {
    pub heads: usize,
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub u_k: Tensor<T>,
    pub u_v: Tensor<T>,
    pub w_k1: Tensor<T>,
    pub w_v1: Tensor<T>,
    pub w_k2: Tensor<T>,
    pub w_v2: Tensor<T>,
    pub ffn_w1: Tensor<T>,
    pub ffn_b1: Tensor<T>,
    pub ffn_w2: Tensor<T>,
    pub ffn_b2: Tensor<T>,
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct MatVars {
    pub heads: usize,
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub u_k: Var,
    pub u_v: Var,
    pub w_k1: Var,
    pub w_v1: Var,
    pub w_k2: Var,
    pub w_v2: Var,
    pub ffn_w1: Var,
    pub ffn_b1: Var,
    pub ffn_w2: Var,
    pub ffn_b2: Var,
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
}

fn check_heads(d: usize, heads: usize) -> Result<()> {
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Contract(format!(
            "model dim {d} is not divisible by head count {heads}"
        )));
    }
    Ok(())
}

impl<T: Real> MatParams<T> {
    /// All weights zero, layer-norm gains one.
    pub fn zeros(d: usize, heads: usize) -> Result<Self> {
        check_heads(d, heads)?;
        let h = FFN_MULT * d;
        Ok(Self {
            heads,
            w_q: Tensor::zeros(d, d),
            w_k: Tensor::zeros(d, d),
            w_v: Tensor::zeros(d, d),
            u_k: Tensor::zeros(d, d),
            u_v: Tensor::zeros(d, d),
            w_k1: Tensor::zeros(d, 1),
            w_v1: Tensor::zeros(d, 1),
            w_k2: Tensor::zeros(d, 1),
            w_v2: Tensor::zeros(d, 1),
            ffn_w1: Tensor::zeros(d, h),
            ffn_b1: Tensor::zeros(1, h),
            ffn_w2: Tensor::zeros(h, d),
            ffn_b2: Tensor::zeros(1, d),
            ln1_gamma: Tensor::full(1, d, T::one()),
            ln1_beta: Tensor::zeros(1, d),
            ln2_gamma: Tensor::full(1, d, T::one()),
            ln2_beta: Tensor::zeros(1, d),
        })
    }

    /// Gaussian weight matrices; biases zero, layer-norm gains one.
    pub fn init<R: Rng + ?Sized>(d: usize, heads: usize, std: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(d, heads)?;
        let h = FFN_MULT * d;
        p.w_q = gaussian(rng, d, d, std);
        p.w_k = gaussian(rng, d, d, std);
        p.w_v = gaussian(rng, d, d, std);
        p.u_k = gaussian(rng, d, d, std);
        p.u_v = gaussian(rng, d, d, std);
        p.w_k1 = gaussian(rng, d, 1, std);
        p.w_v1 = gaussian(rng, d, 1, std);
        p.w_k2 = gaussian(rng, d, 1, std);
        p.w_v2 = gaussian(rng, d, 1, std);
        p.ffn_w1 = gaussian(rng, d, h, std);
        p.ffn_w2 = gaussian(rng, h, d, std);
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> MatVars {
        let mut it = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| tape.param(n, t))
            .collect::<Vec<_>>()
            .into_iter();
        let mut next = || it.next().expect("mat param count");
        MatVars {
            heads: self.heads,
            w_q: next(),
            w_k: next(),
            w_v: next(),
            u_k: next(),
            u_v: next(),
            w_k1: next(),
            w_v1: next(),
            w_k2: next(),
            w_v2: next(),
            ffn_w1: next(),
            ffn_b1: next(),
            ffn_w2: next(),
            ffn_b2: next(),
            ln1_gamma: next(),
            ln1_beta: next(),
            ln2_gamma: next(),
            ln2_beta: next(),
        }
    }
}

macro_rules! mat_fields {
    ($self:ident, $($ref:tt)*) => {
        vec![
            ("mat.w_q".into(), $($ref)* $self.w_q),
            ("mat.w_k".into(), $($ref)* $self.w_k),
            ("mat.w_v".into(), $($ref)* $self.w_v),
            ("mat.u_k".into(), $($ref)* $self.u_k),
            ("mat.u_v".into(), $($ref)* $self.u_v),
            ("mat.w_k1".into(), $($ref)* $self.w_k1),
            ("mat.w_v1".into(), $($ref)* $self.w_v1),
            ("mat.w_k2".into(), $($ref)* $self.w_k2),
            ("mat.w_v2".into(), $($ref)* $self.w_v2),
            ("mat.ffn_w1".into(), $($ref)* $self.ffn_w1),
            ("mat.ffn_b1".into(), $($ref)* $self.ffn_b1),
            ("mat.ffn_w2".into(), $($ref)* $self.ffn_w2),
            ("mat.ffn_b2".into(), $($ref)* $self.ffn_b2),
            ("mat.ln1_gamma".into(), $($ref)* $self.ln1_gamma),
            ("mat.ln1_beta".into(), $($ref)* $self.ln1_beta),
            ("mat.ln2_gamma".into(), $($ref)* $self.ln2_gamma),
            ("mat.ln2_beta".into(), $($ref)* $self.ln2_beta),
        ]
    };
}

impl<T: Real> ParamSet<T> for MatParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        mat_fields!(self, &)
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        mat_fields!(self, &mut)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MemeGates {
    pub lambda_k: Var,
    pub lambda_v: Var,
    /// `Ĥ_m U_k` and `Ĥ_m U_v`, the meme rows keys and values are mixed with.
    pub meme_k: Var,
    pub meme_v: Var,
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub output: Var,
    /// Per-head `n × n` attention weights.
    pub weights: Vec<Var>,
    pub gates: Option<MemeGates>,
}

#[derive(Clone, Debug)]
pub struct MatOutput {
    pub output: Var,
    pub attention: AttentionOutput,
}

fn gate<T: Real>(tape: &mut Tape<T>, x: Var, meme: Var, w1: Var, w2: Var) -> Result<Var> {
    let n = tape.value(x).rows();
    let from_x = tape.matmul(x, w1)?;
    let from_meme = tape.matmul(meme, w2)?;
    let from_meme = tape.broadcast(from_meme, n, 1)?;
    let pre = tape.add(from_x, from_meme)?;
    Ok(tape.sigmoid(pre))
}

/// Computes `λ_k`, `λ_v` for already-projected keys and values.
pub fn meme_gates<T: Real>(
    tape: &mut Tape<T>,
    k: Var,
    v: Var,
    meme: Var,
    p: &MatVars,
) -> Result<MemeGates> {
    let d = tape.value(p.u_k).rows();
    if tape.shape(meme) != [1, d] {
        return Err(Error::dim("meme_gates", tape.shape(meme), &[1, d]));
    }
    if tape.shape(k) != tape.shape(v) || tape.value(k).cols() != d {
        return Err(Error::dim("meme_gates", tape.shape(k), tape.shape(v)));
    }
    let meme_k = tape.matmul(meme, p.u_k)?;
    let meme_v = tape.matmul(meme, p.u_v)?;
    let lambda_k = gate(tape, k, meme_k, p.w_k1, p.w_k2)?;
    let lambda_v = gate(tape, v, meme_v, p.w_v1, p.w_v2)?;
    Ok(MemeGates {
        lambda_k,
        lambda_v,
        meme_k,
        meme_v,
    })
}

/// `(1 - λ) ⊙ x + λ ⊙ meme`, with `λ` (n × 1) and `meme` (1 × d) broadcast.
fn blend<T: Real>(tape: &mut Tape<T>, x: Var, lambda: Var, meme: Var) -> Result<Var> {
    let (n, d) = (tape.value(x).rows(), tape.value(x).cols());
    let lam = tape.broadcast(lambda, n, d)?;
    let keep = tape.one_minus(lam);
    let meme = tape.broadcast(meme, n, d)?;
    let a = tape.mul(keep, x)?;
    let b = tape.mul(lam, meme)?;
    tape.add(a, b)
}

/// Multi-head scaled dot-product attention of `q` over `k`, `v`.
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let d = tape.value(q).cols();
    check_heads(d, heads)?;
    let dh = d / heads;
    let scale = T::one() / T::from_f64(dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let w = tape.row_softmax(scores)?;
        outs.push(tape.matmul(w, vh)?);
        weights.push(w);
    }
    let output = if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    Ok((output, weights))
}

pub fn meme_aware_attention<T: Real>(
    tape: &mut Tape<T>,
    h_c: Var,
    meme: Var,
    p: &MatVars,
    mode: GateMode,
) -> Result<AttentionOutput> {
    let d = tape.value(p.w_q).rows();
    let (_, cols) = tape.value(h_c).expect_matrix("meme_aware_attention")?;
    if cols != d {
        return Err(Error::dim("meme_aware_attention", tape.shape(h_c), &[0, d]));
    }
    let q = tape.matmul(h_c, p.w_q)?;
    let k = tape.matmul(h_c, p.w_k)?;
    let v = tape.matmul(h_c, p.w_v)?;
    let (k_hat, v_hat, gates) = match mode {
        GateMode::Off => (k, v, None),
        GateMode::Learned => {
            let g = meme_gates(tape, k, v, meme, p)?;
            let k_hat = blend(tape, k, g.lambda_k, g.meme_k)?;
            let v_hat = blend(tape, v, g.lambda_v, g.meme_v)?;
            (k_hat, v_hat, Some(g))
        }
    };
    let (output, weights) = multi_head_attention(tape, q, k_hat, v_hat, p.heads)?;
    Ok(AttentionOutput {
        output,
        weights,
        gates,
    })
}

fn norm_affine<T: Real>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let (n, d) = (tape.value(x).rows(), tape.value(x).cols());
    let normed = tape.layer_norm(x, T::from_f64(LAYER_NORM_EPS))?;
    let g = tape.broadcast(gamma, n, d)?;
    let b = tape.broadcast(beta, n, d)?;
    let scaled = tape.mul(normed, g)?;
    tape.add(scaled, b)
}

/// One encoder block: attention, add & norm, feed-forward, add & norm.
pub fn mat_encode<T: Real>(
    tape: &mut Tape<T>,
    h_c: Var,
    meme: Var,
    p: &MatVars,
    mode: GateMode,
) -> Result<MatOutput> {
    let attention = meme_aware_attention(tape, h_c, meme, p, mode)?;
    let n = tape.value(h_c).rows();
    let res = tape.add(h_c, attention.output)?;
    let x = norm_affine(tape, res, p.ln1_gamma, p.ln1_beta)?;

    let hid = tape.matmul(x, p.ffn_w1)?;
    let hid_cols = tape.value(hid).cols();
    let b1 = tape.broadcast(p.ffn_b1, n, hid_cols)?;
    let hid = tape.add(hid, b1)?;
    let hid = tape.gelu(hid);
    let f = tape.matmul(hid, p.ffn_w2)?;
    let d = tape.value(f).cols();
    let b2 = tape.broadcast(p.ffn_b2, n, d)?;
    let f = tape.add(f, b2)?;

    let res = tape.add(x, f)?;
    let output = norm_affine(tape, res, p.ln2_gamma, p.ln2_beta)?;
    Ok(MatOutput { output, attention })
}
