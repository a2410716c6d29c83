//! Straight-line f64 reimplementations used as test oracles. Nothing here
//! touches the tape; every value is produced by explicit loops.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mime_evidence::dataio::{Channel, MemeSample};
use mime_evidence::gradcore::ParamSet;
use mime_evidence::model::{ContextEncoder, MemeChannel, MimeParams, SequenceLayer};

pub type M = Vec<Vec<f64>>;

pub fn from_tensor<T: mime_evidence::gradcore::Real>(t: &mime_evidence::gradcore::Tensor<T>) -> M {
    (0..t.rows())
        .map(|r| t.row_slice(r).iter().map(|v| v.as_f64()).collect())
        .collect()
}

pub fn matmul(a: &M, b: &M) -> M {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn vecmat(x: &[f64], w: &M) -> Vec<f64> {
    matmul(&vec![x.to_vec()], w).remove(0)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

pub fn add_v(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let s = (var + 1e-5).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / s * gamma[i] + beta[i])
        .collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn flatten(m: &M) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

/// Named parameters as plain matrices.
pub struct P(pub BTreeMap<String, M>);

impl P {
    pub fn of<T: mime_evidence::gradcore::Real, S: ParamSet<T>>(s: &S) -> Self {
        P(s.named_tensors()
            .into_iter()
            .map(|(n, t)| (n, from_tensor(t)))
            .collect())
    }

    pub fn m(&self, name: &str) -> &M {
        self.0.get(name).unwrap_or_else(|| panic!("missing {name}"))
    }

    pub fn row(&self, name: &str) -> &[f64] {
        &self.m(name)[0]
    }

    pub fn col(&self, name: &str) -> Vec<f64> {
        self.m(name).iter().map(|r| r[0]).collect()
    }
}

pub struct Gmf {
    pub fused: Vec<f64>,
    pub g_m: Vec<f64>,
    pub g_k: Vec<f64>,
}

pub fn gmf(w_m: &M, w_k: &M, b_m: &[f64], b_k: &[f64], h_m: &[f64], h_k: &[f64]) -> Gmf {
    let d = h_m.len();
    let z: Vec<f64> = h_m.iter().chain(h_k).copied().collect();
    let mut g_m = vec![0.0; d];
    let mut g_k = vec![0.0; d];
    let mut fused = vec![0.0; d];
    for j in 0..d {
        let mut a = b_m[j];
        let mut b = b_k[j];
        for i in 0..2 * d {
            a += z[i] * w_m[i][j];
            b += z[i] * w_k[i][j];
        }
        g_m[j] = sigmoid(a);
        g_k[j] = sigmoid(b);
        fused[j] = g_m[j] * h_m[j] + g_k[j] * h_k[j];
    }
    Gmf { fused, g_m, g_k }
}

pub struct Attention {
    pub output: M,
    /// `[head][row][col]`.
    pub weights: Vec<M>,
    pub lambda_k: Vec<f64>,
    pub lambda_v: Vec<f64>,
}

/// Meme-aware multi-head attention; `gates == false` pins λ to zero.
pub fn attention(p: &P, h_c: &M, meme: &[f64], heads: usize, gates: bool) -> Attention {
    let n = h_c.len();
    let d = h_c[0].len();
    let q = matmul(h_c, p.m("mat.w_q"));
    let mut k = matmul(h_c, p.m("mat.w_k"));
    let mut v = matmul(h_c, p.m("mat.w_v"));
    let mk = vecmat(meme, p.m("mat.u_k"));
    let mv = vecmat(meme, p.m("mat.u_v"));
    let mut lambda_k = vec![0.0; n];
    let mut lambda_v = vec![0.0; n];
    if gates {
        let (wk1, wk2) = (p.col("mat.w_k1"), p.col("mat.w_k2"));
        let (wv1, wv2) = (p.col("mat.w_v1"), p.col("mat.w_v2"));
        let mk2: f64 = (0..d).map(|j| mk[j] * wk2[j]).sum();
        let mv2: f64 = (0..d).map(|j| mv[j] * wv2[j]).sum();
        for t in 0..n {
            let a: f64 = (0..d).map(|j| k[t][j] * wk1[j]).sum();
            let b: f64 = (0..d).map(|j| v[t][j] * wv1[j]).sum();
            lambda_k[t] = sigmoid(a + mk2);
            lambda_v[t] = sigmoid(b + mv2);
        }
        for t in 0..n {
            for j in 0..d {
                k[t][j] = (1.0 - lambda_k[t]) * k[t][j] + lambda_k[t] * mk[j];
                v[t][j] = (1.0 - lambda_v[t]) * v[t][j] + lambda_v[t] * mv[j];
            }
        }
    }
    let dh = d / heads;
    let mut output = vec![vec![0.0; d]; n];
    let mut weights = Vec::new();
    for h in 0..heads {
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    (0..dh)
                        .map(|c| q[i][h * dh + c] * k[j][h * dh + c])
                        .sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            w[i] = softmax(&scores);
            for c in 0..dh {
                output[i][h * dh + c] = (0..n).map(|j| w[i][j] * v[j][h * dh + c]).sum();
            }
        }
        weights.push(w);
    }
    Attention {
        output,
        weights,
        lambda_k,
        lambda_v,
    }
}

pub fn mat_block(p: &P, h_c: &M, meme: &[f64], heads: usize, gates: bool) -> M {
    let att = attention(p, h_c, meme, heads, gates);
    let (g1, b1) = (p.row("mat.ln1_gamma"), p.row("mat.ln1_beta"));
    let (g2, b2) = (p.row("mat.ln2_gamma"), p.row("mat.ln2_beta"));
    let (fb1, fb2) = (p.row("mat.ffn_b1"), p.row("mat.ffn_b2"));
    h_c.iter()
        .zip(&att.output)
        .map(|(x, a)| {
            let x = layer_norm(&add_v(x, a), g1, b1);
            let hid: Vec<f64> = add_v(&vecmat(&x, p.m("mat.ffn_w1")), fb1)
                .into_iter()
                .map(gelu)
                .collect();
            let f = add_v(&vecmat(&hid, p.m("mat.ffn_w2")), fb2);
            layer_norm(&add_v(&x, &f), g2, b2)
        })
        .collect()
}

pub struct LstmStep {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub meme_gate: Vec<f64>,
}

/// One LSTM step with prefix `pre` (e.g. "lstm", "malstm"); `meme` adds the
/// meme-aware term when given.
pub fn lstm_step(
    p: &P,
    pre: &str,
    x: &[f64],
    h: &[f64],
    c: &[f64],
    meme: Option<(&[f64], f64)>,
) -> LstmStep {
    let hid = h.len();
    let gate = |g: &str| -> Vec<f64> {
        let a = vecmat(x, p.m(&format!("{pre}.w_{g}")));
        let b = vecmat(h, p.m(&format!("{pre}.u_{g}")));
        let bias = p.row(&format!("{pre}.b_{g}"));
        (0..hid).map(|j| a[j] + b[j] + bias[j]).collect()
    };
    let i: Vec<f64> = gate("i").into_iter().map(sigmoid).collect();
    let f: Vec<f64> = gate("f").into_iter().map(sigmoid).collect();
    let o: Vec<f64> = gate("o").into_iter().map(sigmoid).collect();
    let g: Vec<f64> = gate("g").into_iter().map(f64::tanh).collect();
    let mut c_new: Vec<f64> = (0..hid).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
    let mut meme_gate = vec![0.0; hid];
    if let Some((m, scale)) = meme {
        let a = vecmat(x, p.m("malstm.w_p"));
        let b = vecmat(h, p.m("malstm.u_p"));
        let e = vecmat(m, p.m("malstm.v_p"));
        let bp = p.row("malstm.b_p");
        let s = vecmat(m, p.m("malstm.w_s"));
        let bs = p.row("malstm.b_s");
        for j in 0..hid {
            meme_gate[j] = sigmoid(a[j] + b[j] + e[j] + bp[j]);
            c_new[j] += scale * meme_gate[j] * (s[j] + bs[j]).tanh();
        }
    }
    let h_new = (0..hid).map(|j| o[j] * c_new[j].tanh()).collect();
    LstmStep {
        c: c_new,
        h: h_new,
        meme_gate,
    }
}

/// Hidden states of a scan over `xs`; `reverse` runs last to first but
/// returns rows in input order.
pub fn lstm_scan(
    p: &P,
    pre: &str,
    xs: &M,
    meme: Option<(&[f64], f64)>,
    reverse: bool,
) -> Vec<LstmStep> {
    let hid = p.row(&format!("{pre}.b_i")).len();
    let mut h = vec![0.0; hid];
    let mut c = vec![0.0; hid];
    let mut out: Vec<Option<LstmStep>> = (0..xs.len()).map(|_| None).collect();
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let s = lstm_step(p, pre, &xs[t], &h, &c, meme);
        h = s.h.clone();
        c = s.c.clone();
        out[t] = Some(s);
    }
    out.into_iter().map(Option::unwrap).collect()
}

pub struct Switches {
    pub attention_gates: bool,
    pub meme_scale: Option<f64>,
}

impl Default for Switches {
    fn default() -> Self {
        Self {
            attention_gates: true,
            meme_scale: None,
        }
    }
}

fn channel_row(s: &MemeSample, c: Channel) -> Vec<f64> {
    from_tensor(s.channel(c).unwrap()).remove(0)
}

/// The whole pipeline for one sample.
pub fn mime_logits(params: &MimeParams<f64>, sample: &MemeSample, sw: &Switches) -> Vec<f64> {
    let p = P::of(params);
    let v = params.variant;
    let d = params.d;
    let meme_raw = match v.meme_channel {
        MemeChannel::MmMeme => channel_row(sample, Channel::MmMeme),
        MemeChannel::TextMeme => channel_row(sample, Channel::TextMeme),
        MemeChannel::ImageMeme => channel_row(sample, Channel::ImageMeme),
        MemeChannel::EarlyFusionConcat => {
            let mut z = channel_row(sample, Channel::TextMeme);
            z.extend(channel_row(sample, Channel::ImageMeme));
            add_v(&vecmat(&z, p.m("fusion.w")), p.row("fusion.b"))
        }
    };
    let meme = if v.use_kme {
        let k = channel_row(sample, Channel::Knowledge);
        gmf(
            p.m("kme.w_m"),
            p.m("kme.w_k"),
            p.row("kme.b_m"),
            p.row("kme.b_k"),
            &meme_raw,
            &k,
        )
        .fused
    } else {
        meme_raw
    };
    let h_c = from_tensor(&sample.sentences);
    let enc = match v.context_encoder {
        ContextEncoder::None => h_c,
        ContextEncoder::MemeAwareTransformer => {
            mat_block(&p, &h_c, &meme, params.heads, sw.attention_gates)
        }
        ContextEncoder::StandardTransformer => mat_block(&p, &h_c, &meme, params.heads, false),
    };
    let ctx: M = match v.sequence_layer {
        SequenceLayer::None => enc,
        SequenceLayer::MaLstm => {
            let scale = sw.meme_scale.unwrap_or(params.meme_scale().unwrap());
            lstm_scan(&p, "malstm", &enc, Some((&meme, scale)), false)
                .into_iter()
                .map(|s| s.h)
                .collect()
        }
        SequenceLayer::Lstm => lstm_scan(&p, "lstm", &enc, None, false)
            .into_iter()
            .map(|s| s.h)
            .collect(),
        SequenceLayer::BiLstm => {
            let f = lstm_scan(&p, "bilstm.fwd", &enc, None, false);
            let b = lstm_scan(&p, "bilstm.bwd", &enc, None, true);
            f.into_iter()
                .zip(b)
                .map(|(f, b)| f.h.into_iter().chain(b.h).collect())
                .collect()
        }
    };
    let w = p.col("head.w");
    let b = p.row("head.b")[0];
    ctx.iter()
        .map(|row| {
            let mut z = b;
            for j in 0..d {
                z += row[j] * w[j] + meme[j] * w[d + j];
            }
            z
        })
        .collect()
}

/// Brute-force per-case metrics straight from the confusion counts.
pub fn confusion_metrics(pred: &[bool], gold: &[bool]) -> [f64; 5] {
    let (mut tp, mut fp, mut fneg, mut tn) = (0.0, 0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let (prec, rec) = if tp + fp == 0.0 && tp + fneg == 0.0 {
        (1.0, 1.0)
    } else if tp + fp == 0.0 || tp + fneg == 0.0 {
        (0.0, 0.0)
    } else {
        (tp / (tp + fp), tp / (tp + fneg))
    };
    let f1 = if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    };
    let acc = (tp + tn) / pred.len() as f64;
    let em = if fp + fneg == 0.0 { 1.0 } else { 0.0 };
    [prec, rec, f1, acc, em]
}

/// Overwrites every tensor with `N(0, std²)` draws; layer-norm gains are
/// centred on one instead of zero.
pub fn randomize<S: ParamSet<f64>>(params: &mut S, seed: u64, std: f64) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    for (name, t) in params.named_tensors_mut() {
        let centre = if name.ends_with("gamma") { 1.0 } else { 0.0 };
        for v in t.data_mut() {
            *v = centre + normal.sample(&mut rng);
        }
    }
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> mime_evidence::gradcore::Tensor<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    mime_evidence::gradcore::Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// A sample with every channel filled with uniform noise.
pub fn random_sample(d: usize, n: usize, seed: u64) -> MemeSample {
    let mut channels = BTreeMap::new();
    for (i, c) in Channel::ALL.iter().enumerate() {
        channels.insert(
            *c,
            random_matrix(1, d, seed.wrapping_mul(31).wrapping_add(i as u64 + 1)).cast(),
        );
    }
    let labels = (0..n).map(|i| i % 2 == 0).collect();
    MemeSample {
        id: format!("rand-{seed}"),
        channels,
        sentences: random_matrix(n, d, seed.wrapping_mul(31)).cast(),
        labels,
        text: None,
    }
}
