use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::Channel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextEncoder {
    MemeAwareTransformer,
    StandardTransformer,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceLayer {
    MaLstm,
    /// Plain unidirectional LSTM, hidden size `d`.
    Lstm,
    /// Two plain LSTMs of hidden size `d/2`, outputs concatenated.
    BiLstm,
    None,
}

/// Where the meme representation comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemeChannel {
    MmMeme,
    TextMeme,
    ImageMeme,
    /// `[text_meme ; image_meme]` through a learned `2d → d` projection.
    EarlyFusionConcat,
}

impl MemeChannel {
    pub fn required_channels(self) -> &'static [Channel] {
        match self {
            MemeChannel::MmMeme => &[Channel::MmMeme],
            MemeChannel::TextMeme => &[Channel::TextMeme],
            MemeChannel::ImageMeme => &[Channel::ImageMeme],
            MemeChannel::EarlyFusionConcat => &[Channel::TextMeme, Channel::ImageMeme],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariantSpec {
    pub use_kme: bool,
    pub context_encoder: ContextEncoder,
    pub sequence_layer: SequenceLayer,
    pub meme_channel: MemeChannel,
}

const fn spec(
    use_kme: bool,
    context_encoder: ContextEncoder,
    sequence_layer: SequenceLayer,
) -> VariantSpec {
    VariantSpec {
        use_kme,
        context_encoder,
        sequence_layer,
        meme_channel: MemeChannel::MmMeme,
    }
}

use ContextEncoder as CE;
use SequenceLayer as SL;

/// Named variants: the component ablation lattice, embedding-level
/// baselines, and the plain transformer + LSTM pipeline.
pub const PRESETS: &[(&str, VariantSpec)] = &[
    ("mime", spec(true, CE::MemeAwareTransformer, SL::MaLstm)),
    ("base", spec(false, CE::None, SL::None)),
    ("+kme", spec(true, CE::None, SL::None)),
    ("+mat", spec(false, CE::MemeAwareTransformer, SL::None)),
    ("+ma-lstm", spec(false, CE::None, SL::MaLstm)),
    ("-ma-lstm", spec(true, CE::MemeAwareTransformer, SL::None)),
    (
        "-ma-lstm+bilstm",
        spec(true, CE::MemeAwareTransformer, SL::BiLstm),
    ),
    ("-mat", spec(true, CE::None, SL::MaLstm)),
    ("-mat+t", spec(true, CE::StandardTransformer, SL::MaLstm)),
    ("-kme", spec(false, CE::MemeAwareTransformer, SL::MaLstm)),
    ("vanilla", spec(false, CE::StandardTransformer, SL::Lstm)),
    (
        "text-only",
        VariantSpec {
            meme_channel: MemeChannel::TextMeme,
            ..spec(false, CE::None, SL::None)
        },
    ),
    (
        "image-only",
        VariantSpec {
            meme_channel: MemeChannel::ImageMeme,
            ..spec(false, CE::None, SL::None)
        },
    ),
    (
        "early-fusion",
        VariantSpec {
            meme_channel: MemeChannel::EarlyFusionConcat,
            ..spec(false, CE::None, SL::None)
        },
    ),
];

impl VariantSpec {
    pub fn mime() -> Self {
        PRESETS[0].1
    }

    pub fn base() -> Self {
        PRESETS[1].1
    }

    pub fn preset(name: &str) -> Result<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::Config(format!(
                    "unknown variant {name:?}; known: {}",
                    known.join(", ")
                ))
            })
    }

    /// Preset name, if this spec is one.
    pub fn name(&self) -> Option<&'static str> {
        PRESETS.iter().find(|(_, v)| v == self).map(|(n, _)| *n)
    }

    pub fn with_channel(mut self, c: MemeChannel) -> Self {
        self.meme_channel = c;
        self
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(
                f,
                "kme={} ctx={:?} seq={:?} meme={:?}",
                self.use_kme, self.context_encoder, self.sequence_layer, self.meme_channel
            ),
        }
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::preset(s)
    }
}
