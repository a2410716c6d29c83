//! Model assembly: variant wiring, prediction head, loss, checkpoints.
//!
//! The full pipeline for one sample with `n` context sentences:
//!
//! 1. meme vector from the configured channel (optionally early-fused),
//! 2. `Ĥ_m` from gated knowledge fusion, or the raw meme vector,
//! 3. context encoder over the `n × d` sentence matrix,
//! 4. sequence layer over the encoder output,
//! 5. `logit_t = [row_t ; Ĥ_m] w + b`.

mod checkpoint;
mod variant;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, load_checkpoint_for_dim, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use variant::{ContextEncoder, MemeChannel, SequenceLayer, VariantSpec, PRESETS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{Channel, MemeSample};
use crate::error::{Error, Result};
use crate::gradcore::{sigmoid, ParamSet, Real, Tape, Tensor, Var};
use crate::init::{gaussian, INIT_STD};
use crate::kme::{gmf_fuse, GmfOutput, GmfParams, GmfVars};
use crate::malstm::{
    lstm_forward, malstm_forward, LstmParams, LstmVars, MaLstmParams, MaLstmStep, MaLstmVars,
};
use crate::mat::{mat_encode, GateMode, MatOutput, MatParams, MatVars};

pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct MimeParams<T: Real = f32> {
    pub d: usize,
    pub heads: usize,
    pub variant: VariantSpec,
    /// Early-fusion projection `2d → d`.
    pub fusion_w: Option<Tensor<T>>,
    pub fusion_b: Option<Tensor<T>>,
    pub kme: Option<GmfParams<T>>,
    /// Present for both transformer encoders; the plain one ignores the gates.
    pub mat: Option<MatParams<T>>,
    pub malstm: Option<MaLstmParams<T>>,
    pub lstm: Option<LstmParams<T>>,
    pub bilstm: Option<(LstmParams<T>, LstmParams<T>)>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
}

/// Test-only switches on the forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardHooks {
    pub attention_gates: GateMode,
}

impl<T: Real> MimeParams<T> {
    fn skeleton(d: usize, heads: usize, variant: VariantSpec) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("model dim must be positive".into()));
        }
        let has_mat = variant.context_encoder != ContextEncoder::None;
        let mat = if has_mat {
            Some(MatParams::zeros(d, heads)?)
        } else {
            None
        };
        let bilstm = if variant.sequence_layer == SequenceLayer::BiLstm {
            if !d.is_multiple_of(2) {
                return Err(Error::Config(format!(
                    "bidirectional LSTM needs an even dim, got {d}"
                )));
            }
            Some((
                LstmParams::zeros("bilstm.fwd", d, d / 2),
                LstmParams::zeros("bilstm.bwd", d, d / 2),
            ))
        } else {
            None
        };
        let early = variant.meme_channel == MemeChannel::EarlyFusionConcat;
        Ok(Self {
            d,
            heads,
            variant,
            fusion_w: early.then(|| Tensor::zeros(2 * d, d)),
            fusion_b: early.then(|| Tensor::zeros(1, d)),
            kme: variant.use_kme.then(|| GmfParams::zeros(d)),
            mat,
            malstm: (variant.sequence_layer == SequenceLayer::MaLstm)
                .then(|| MaLstmParams::zeros(d)),
            lstm: (variant.sequence_layer == SequenceLayer::Lstm)
                .then(|| LstmParams::zeros("lstm", d, d)),
            bilstm,
            head_w: Tensor::zeros(2 * d, 1),
            head_b: Tensor::zeros(1, 1),
        })
    }

    /// All-zero weights (layer-norm gains one, meme scale one).
    pub fn zeros(d: usize, heads: usize, variant: VariantSpec) -> Result<Self> {
        Self::skeleton(d, heads, variant)
    }

    /// Weight matrices drawn from `N(0, std²)` with a seeded generator;
    /// biases zero and layer-norm gains one.
    pub fn init_with_std(
        d: usize,
        heads: usize,
        variant: VariantSpec,
        seed: u64,
        std: f64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::skeleton(d, heads, variant)?;
        if variant.meme_channel == MemeChannel::EarlyFusionConcat {
            p.fusion_w = Some(gaussian(&mut rng, 2 * d, d, std));
        }
        if variant.use_kme {
            p.kme = Some(GmfParams::init(d, std, &mut rng));
        }
        if p.mat.is_some() {
            p.mat = Some(MatParams::init(d, heads, std, &mut rng)?);
        }
        match variant.sequence_layer {
            SequenceLayer::MaLstm => p.malstm = Some(MaLstmParams::init(d, std, &mut rng)),
            SequenceLayer::Lstm => p.lstm = Some(LstmParams::init("lstm", d, d, std, &mut rng)),
            SequenceLayer::BiLstm => {
                p.bilstm = Some((
                    LstmParams::init("bilstm.fwd", d, d / 2, std, &mut rng),
                    LstmParams::init("bilstm.bwd", d, d / 2, std, &mut rng),
                ))
            }
            SequenceLayer::None => {}
        }
        p.head_w = gaussian(&mut rng, 2 * d, 1, std);
        Ok(p)
    }

    pub fn init(d: usize, heads: usize, variant: VariantSpec, seed: u64) -> Result<Self> {
        Self::init_with_std(d, heads, variant, seed, INIT_STD)
    }

    pub fn meme_scale(&self) -> Option<T> {
        self.malstm.as_ref().map(|m| m.meme_scale)
    }

    pub fn set_meme_scale(&mut self, s: T) {
        if let Some(m) = self.malstm.as_mut() {
            m.meme_scale = s;
        }
    }

    pub fn cast<U: Real>(&self) -> MimeParams<U> {
        let mut out = MimeParams::<U>::skeleton(self.d, self.heads, self.variant)
            .expect("valid source params");
        for ((_, dst), (_, src)) in out
            .named_tensors_mut()
            .into_iter()
            .zip(self.named_tensors())
        {
            *dst = src.cast();
        }
        if let Some(s) = self.meme_scale() {
            out.set_meme_scale(U::from_f64(s.as_f64()));
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundMime {
        BoundMime {
            d: self.d,
            variant: self.variant,
            fusion: self
                .fusion_w
                .as_ref()
                .zip(self.fusion_b.as_ref())
                .map(|(w, b)| (tape.param("fusion.w", w), tape.param("fusion.b", b))),
            kme: self.kme.as_ref().map(|p| p.bind(tape)),
            mat: self.mat.as_ref().map(|p| p.bind(tape)),
            malstm: self.malstm.as_ref().map(|p| p.bind(tape)),
            lstm: self.lstm.as_ref().map(|p| p.bind(tape)),
            bilstm: self
                .bilstm
                .as_ref()
                .map(|(f, b)| (f.bind(tape), b.bind(tape))),
            head_w: tape.param("head.w", &self.head_w),
            head_b: tape.param("head.b", &self.head_b),
        }
    }

    /// Logits for one sample.
    pub fn logits(&self, sample: &MemeSample) -> Result<Vec<T>> {
        self.logits_with(sample, ForwardHooks::default())
    }

    pub fn logits_with(&self, sample: &MemeSample, hooks: ForwardHooks) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let trace = bound.forward(&mut tape, sample, hooks)?;
        Ok(tape.value(trace.logits).data().to_vec())
    }

    /// Checks that a sample can be fed to this model without running it.
    pub fn check_sample(&self, sample: &MemeSample) -> Result<()> {
        if sample.dim() != self.d {
            return Err(Error::dim(
                format!("forward[{}]: sentences", sample.id),
                sample.sentences.shape(),
                &[sample.n(), self.d],
            ));
        }
        for &c in self.variant.meme_channel.required_channels() {
            sample.channel(c)?;
        }
        if self.variant.use_kme {
            sample.channel(Channel::Knowledge)?;
        }
        Ok(())
    }
}

impl<T: Real> ParamSet<T> for MimeParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        if let (Some(w), Some(b)) = (&self.fusion_w, &self.fusion_b) {
            v.push(("fusion.w".to_string(), w));
            v.push(("fusion.b".to_string(), b));
        }
        if let Some(p) = &self.kme {
            v.extend(p.named_tensors());
        }
        if let Some(p) = &self.mat {
            v.extend(p.named_tensors());
        }
        if let Some(p) = &self.malstm {
            v.extend(p.named_tensors());
        }
        if let Some(p) = &self.lstm {
            v.extend(p.named_tensors());
        }
        if let Some((f, b)) = &self.bilstm {
            v.extend(f.named_tensors());
            v.extend(b.named_tensors());
        }
        v.push(("head.w".into(), &self.head_w));
        v.push(("head.b".into(), &self.head_b));
        v
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v = Vec::new();
        if let (Some(w), Some(b)) = (&mut self.fusion_w, &mut self.fusion_b) {
            v.push(("fusion.w".to_string(), w));
            v.push(("fusion.b".to_string(), b));
        }
        if let Some(p) = &mut self.kme {
            v.extend(p.named_tensors_mut());
        }
        if let Some(p) = &mut self.mat {
            v.extend(p.named_tensors_mut());
        }
        if let Some(p) = &mut self.malstm {
            v.extend(p.named_tensors_mut());
        }
        if let Some(p) = &mut self.lstm {
            v.extend(p.named_tensors_mut());
        }
        if let Some((f, b)) = &mut self.bilstm {
            v.extend(f.named_tensors_mut());
            v.extend(b.named_tensors_mut());
        }
        v.push(("head.w".into(), &mut self.head_w));
        v.push(("head.b".into(), &mut self.head_b));
        v
    }
}

/// Parameters registered on one tape; reusable for every sample of a batch.
#[derive(Clone, Debug)]
pub struct BoundMime {
    pub d: usize,
    pub variant: VariantSpec,
    fusion: Option<(Var, Var)>,
    kme: Option<GmfVars>,
    mat: Option<MatVars>,
    malstm: Option<MaLstmVars>,
    lstm: Option<LstmVars>,
    bilstm: Option<(LstmVars, LstmVars)>,
    head_w: Var,
    head_b: Var,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `n × 1`.
    pub logits: Var,
    /// Meme vector before knowledge fusion.
    pub meme_raw: Var,
    /// `Ĥ_m`.
    pub meme: Var,
    pub gmf: Option<GmfOutput>,
    pub mat: Option<MatOutput>,
    pub malstm_steps: Vec<MaLstmStep>,
    /// Output of the sequence layer (or of the encoder if there is none).
    pub context: Var,
}

fn const_of<T: Real>(tape: &mut Tape<T>, t: &Tensor<f32>) -> Var {
    tape.constant(t.cast())
}

impl BoundMime {
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        sample: &MemeSample,
        hooks: ForwardHooks,
    ) -> Result<ForwardTrace> {
        if sample.dim() != self.d {
            return Err(Error::dim(
                format!("forward[{}]: sentences", sample.id),
                sample.sentences.shape(),
                &[sample.n(), self.d],
            ));
        }
        let stage = |stage: &str, e: Error| match e {
            Error::Validation { id, msg } => Error::Validation {
                id,
                msg: format!("{stage}: {msg}"),
            },
            other => other,
        };

        let meme_raw = match self.variant.meme_channel {
            MemeChannel::EarlyFusionConcat => {
                let t = const_of(
                    tape,
                    sample
                        .channel(Channel::TextMeme)
                        .map_err(|e| stage("meme channel", e))?,
                );
                let i = const_of(
                    tape,
                    sample
                        .channel(Channel::ImageMeme)
                        .map_err(|e| stage("meme channel", e))?,
                );
                let z = tape.concat_cols(&[t, i])?;
                let (w, b) = self.fusion.expect("early fusion params bound");
                let zw = tape.matmul(z, w)?;
                tape.add(zw, b)?
            }
            other => {
                let c = match other {
                    MemeChannel::MmMeme => Channel::MmMeme,
                    MemeChannel::TextMeme => Channel::TextMeme,
                    _ => Channel::ImageMeme,
                };
                const_of(
                    tape,
                    sample.channel(c).map_err(|e| stage("meme channel", e))?,
                )
            }
        };

        let (meme, gmf) = match &self.kme {
            Some(vars) => {
                let k = const_of(
                    tape,
                    sample
                        .channel(Channel::Knowledge)
                        .map_err(|e| stage("kme", e))?,
                );
                let out = gmf_fuse(tape, meme_raw, k, vars)?;
                (out.fused, Some(out))
            }
            None => (meme_raw, None),
        };

        let h_c = const_of(tape, &sample.sentences);
        let (encoded, mat) = match (self.variant.context_encoder, &self.mat) {
            (ContextEncoder::None, _) => (h_c, None),
            (enc, Some(vars)) => {
                let mode = if enc == ContextEncoder::StandardTransformer {
                    GateMode::Off
                } else {
                    hooks.attention_gates
                };
                let out = mat_encode(tape, h_c, meme, vars, mode)?;
                (out.output, Some(out))
            }
            (_, None) => unreachable!("transformer params bound for transformer variant"),
        };

        let mut malstm_steps = Vec::new();
        let context = match self.variant.sequence_layer {
            SequenceLayer::None => encoded,
            SequenceLayer::MaLstm => {
                let (out, steps) =
                    malstm_forward(tape, encoded, meme, self.malstm.as_ref().expect("bound"))?;
                malstm_steps = steps;
                out
            }
            SequenceLayer::Lstm => {
                lstm_forward(tape, encoded, self.lstm.as_ref().expect("bound"), false)?
            }
            SequenceLayer::BiLstm => {
                let (f, b) = self.bilstm.as_ref().expect("bound");
                let fwd = lstm_forward(tape, encoded, f, false)?;
                let bwd = lstm_forward(tape, encoded, b, true)?;
                tape.concat_cols(&[fwd, bwd])?
            }
        };

        let n = sample.n();
        let meme_rows = tape.broadcast(meme, n, self.d)?;
        let joint = tape.concat_cols(&[context, meme_rows])?;
        let z = tape.matmul(joint, self.head_w)?;
        let bias = tape.broadcast(self.head_b, n, 1)?;
        let logits = tape.add(z, bias)?;
        Ok(ForwardTrace {
            logits,
            meme_raw,
            meme,
            gmf,
            mat,
            malstm_steps,
            context,
        })
    }
}

/// Mean binary cross-entropy of logits against 0/1 labels, in the
/// overflow-free form `max(z,0) - z*y + ln(1 + e^-|z|)`.
pub fn bce_loss<T: Real>(logits: &[T], labels: &[bool]) -> Result<T> {
    if logits.is_empty() {
        return Err(Error::Contract("bce_loss on empty input".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::dim("bce_loss", &[logits.len()], &[labels.len()]));
    }
    let total = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let y = if y { T::one() } else { T::zero() };
            z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
        })
        .fold(T::zero(), |a, b| a + b);
    Ok(total / T::from_f64(logits.len() as f64))
}

/// `σ(z) ≥ threshold`, element-wise.
pub fn predict<T: Real>(logits: &[T], threshold: f64) -> Vec<bool> {
    logits
        .iter()
        .map(|&z| sigmoid(z).as_f64() >= threshold)
        .collect()
}

pub fn labels_as<T: Real>(labels: &[bool]) -> Vec<T> {
    labels
        .iter()
        .map(|&l| if l { T::one() } else { T::zero() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce_loss(&[0.0f64, 0.0], &[true, false]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(bce_loss(&[20.0f64], &[true]).unwrap() < 1e-8);
        let v = bce_loss(&[1.0f64, -1.0], &[true, false]).unwrap();
        assert!((v - 0.313262).abs() < 1e-5);
        assert!(bce_loss::<f64>(&[], &[]).is_err());
        assert!(bce_loss(&[1.0f64], &[true, false]).is_err());
    }

    #[test]
    fn bce_is_finite_at_extremes() {
        let v = bce_loss(&[1e4f32, -1e4], &[false, true]).unwrap();
        assert!(v.is_finite());
        assert!((v - 1e4).abs() < 1.0);
    }

    #[test]
    fn predict_tie_and_threshold() {
        assert_eq!(predict(&[0.0f64, 0.0], 0.5), vec![true, true]);
        let z = (0.8f64 / 0.2).ln();
        assert_eq!(predict(&[z], 0.9), vec![false]);
    }

    #[test]
    fn bilstm_needs_even_dim() {
        let v = VariantSpec::preset("-ma-lstm+bilstm").unwrap();
        assert!(MimeParams::<f32>::zeros(5, 1, v).is_err());
        assert!(MimeParams::<f32>::zeros(6, 2, v).is_ok());
    }

    #[test]
    fn cast_preserves_values() {
        let p = MimeParams::<f32>::init(8, 4, VariantSpec::mime(), 3).unwrap();
        let q = p.cast::<f64>().cast::<f32>();
        assert_eq!(p, q);
    }

    #[test]
    fn init_is_seeded() {
        let a = MimeParams::<f32>::init(8, 4, VariantSpec::mime(), 42).unwrap();
        let b = MimeParams::<f32>::init(8, 4, VariantSpec::mime(), 42).unwrap();
        let c = MimeParams::<f32>::init(8, 4, VariantSpec::mime(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
