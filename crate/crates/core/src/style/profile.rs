use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder taps, in depth order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Relu1_1,
    Relu2_1,
    Relu3_1,
    Relu4_1,
    Relu5_1,
}

impl Layer {
    pub const ALL: [Layer; 5] = [
        Layer::Relu1_1,
        Layer::Relu2_1,
        Layer::Relu3_1,
        Layer::Relu4_1,
        Layer::Relu5_1,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Spatial downsampling factor relative to the input image.
    pub fn stride(self) -> usize {
        1 << self.index()
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::Relu1_1 => "relu1_1",
            Layer::Relu2_1 => "relu2_1",
            Layer::Relu3_1 => "relu3_1",
            Layer::Relu4_1 => "relu4_1",
            Layer::Relu5_1 => "relu5_1",
        }
    }
}

/// Channel widths of the network. The encoder follows the VGG-19 feature
/// stack up to relu5_1; the decoder mirrors it from relu4_1 down.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchProfile {
    pub name: String,
    /// Channels at relu1_1 .. relu5_1.
    pub widths: [usize; 5],
    /// The attention query/key projections map `C` channels to
    /// `max(1, C / attention_reduction)`.
    pub attention_reduction: usize,
}

impl ArchProfile {
    /// Full-width VGG-19 profile.
    pub fn vgg19() -> Self {
        ArchProfile {
            name: "vgg19".into(),
            widths: [64, 128, 256, 512, 512],
            attention_reduction: 8,
        }
    }

    /// Four channels per layer; small enough to train on a laptop CPU.
    pub fn tiny() -> Self {
        ArchProfile {
            name: "tiny".into(),
            widths: [4; 5],
            attention_reduction: 8,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "vgg19" => Some(Self::vgg19()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn channels(&self, layer: Layer) -> usize {
        self.widths[layer.index()]
    }

    pub fn attention_channels(&self, channels: usize) -> usize {
        (channels / self.attention_reduction.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) || self.attention_reduction == 0 {
            return Err(Error::Checkpoint(format!(
                "profile `{}` has a zero width or reduction",
                self.name
            )));
        }
        if self.widths[3] != self.widths[4] {
            return Err(Error::Checkpoint(format!(
                "profile `{}`: relu4_1 and relu5_1 widths must match to be merged",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Group {
    Encoder,
    Transform,
    Decoder,
}

/// One convolution in the network; its tensors are `{name}.weight`
/// `(cout, cin, k, k)` and `{name}.bias` `(cout)`.
#[derive(Clone, Debug)]
pub(crate) struct ConvSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub group: Group,
}

impl ConvSpec {
    fn new(name: impl Into<String>, cin: usize, cout: usize, k: usize, group: Group) -> Self {
        ConvSpec {
            name: name.into(),
            cin,
            cout,
            k,
            group,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.cout, self.cin, self.k, self.k]
    }
}

pub(crate) const ENCODER_CONVS: [&str; 14] = [
    "conv0", "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3", "conv3_4",
    "conv4_1", "conv4_2", "conv4_3", "conv4_4", "conv5_1",
];

pub(crate) fn conv_specs(p: &ArchProfile) -> Vec<ConvSpec> {
    use Group::*;
    let [w1, w2, w3, w4, w5] = p.widths;
    let enc = |n: &str| format!("encoder.{n}");
    let mut specs = vec![
        ConvSpec::new(enc("conv0"), 3, 3, 1, Encoder),
        ConvSpec::new(enc("conv1_1"), 3, w1, 3, Encoder),
        ConvSpec::new(enc("conv1_2"), w1, w1, 3, Encoder),
        ConvSpec::new(enc("conv2_1"), w1, w2, 3, Encoder),
        ConvSpec::new(enc("conv2_2"), w2, w2, 3, Encoder),
        ConvSpec::new(enc("conv3_1"), w2, w3, 3, Encoder),
        ConvSpec::new(enc("conv3_2"), w3, w3, 3, Encoder),
        ConvSpec::new(enc("conv3_3"), w3, w3, 3, Encoder),
        ConvSpec::new(enc("conv3_4"), w3, w3, 3, Encoder),
        ConvSpec::new(enc("conv4_1"), w3, w4, 3, Encoder),
        ConvSpec::new(enc("conv4_2"), w4, w4, 3, Encoder),
        ConvSpec::new(enc("conv4_3"), w4, w4, 3, Encoder),
        ConvSpec::new(enc("conv4_4"), w4, w4, 3, Encoder),
        ConvSpec::new(enc("conv5_1"), w4, w5, 3, Encoder),
    ];
    for (block, c) in [("sanet4_1", w4), ("sanet5_1", w5)] {
        let r = p.attention_channels(c);
        let t = |n: &str| format!("transform.{block}.{n}");
        specs.push(ConvSpec::new(t("f"), c, r, 1, Transform));
        specs.push(ConvSpec::new(t("g"), c, r, 1, Transform));
        specs.push(ConvSpec::new(t("h"), c, c, 1, Transform));
        specs.push(ConvSpec::new(t("out"), c, c, 1, Transform));
    }
    specs.push(ConvSpec::new("transform.merge", w4, w4, 3, Transform));
    let dec = [
        (w4, w3),
        (w3, w3),
        (w3, w3),
        (w3, w3),
        (w3, w2),
        (w2, w2),
        (w2, w1),
        (w1, w1),
        (w1, 3),
    ];
    for (i, (cin, cout)) in dec.into_iter().enumerate() {
        specs.push(ConvSpec::new(
            format!("decoder.conv{}", i + 1),
            cin,
            cout,
            3,
            Decoder,
        ));
    }
    specs
}
