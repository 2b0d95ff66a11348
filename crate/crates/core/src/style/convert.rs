//! Import of published pretrained weights stored as safetensors files.
//!
//! The encoder file holds the normalized VGG-19 feature stack as an
//! `nn.Sequential` (tensors `0.weight`, `2.weight`, ... `42.bias`). Optional
//! decoder and transformer files use the layout of the reference
//! style-attention implementation. Channel widths are read from the files,
//! so any consistent width profile converts.

use safetensors::{Dtype, SafeTensors};

use super::loss::LossWeights;
use super::profile::{conv_specs, ArchProfile, ENCODER_CONVS};
use super::weights::StyleNetWeights;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Sequential indices of the encoder convolutions, in [`ENCODER_CONVS`] order.
pub const ENCODER_INDICES: [usize; 14] = [0, 2, 5, 9, 12, 16, 19, 22, 25, 29, 32, 35, 38, 42];

/// Sequential indices of the nine decoder convolutions.
pub const DECODER_INDICES: [usize; 9] = [1, 5, 8, 11, 14, 18, 21, 25, 28];

fn read_tensor(st: &SafeTensors<'_>, name: &str, file: &str) -> Result<Tensor> {
    let view = st
        .tensor(name)
        .map_err(|_| Error::Checkpoint(format!("{file} weights lack tensor `{name}`")))?;
    let bytes = view.data();
    let data: Vec<f64> = match view.dtype() {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        other => {
            return Err(Error::Checkpoint(format!(
                "{file} tensor `{name}` has dtype {other:?}; convert to float32 first"
            )))
        }
    };
    Ok(Tensor::new(view.shape().to_vec(), data))
}

fn parse<'a>(bytes: &'a [u8], file: &str) -> Result<SafeTensors<'a>> {
    SafeTensors::deserialize(bytes)
        .map_err(|e| Error::Checkpoint(format!("{file} weights are not valid safetensors: {e}")))
}

/// Builds a weight set from pretrained files. Parts without a file are
/// randomly initialized from `seed`.
pub fn import_safetensors(
    encoder: &[u8],
    decoder: Option<&[u8]>,
    transformer: Option<&[u8]>,
    seed: u64,
) -> Result<StyleNetWeights> {
    let enc = parse(encoder, "encoder")?;
    let width_of = |idx: usize| -> Result<usize> {
        Ok(read_tensor(&enc, &format!("{idx}.weight"), "encoder")?.shape()[0])
    };
    let widths = [
        width_of(2)?,
        width_of(9)?,
        width_of(16)?,
        width_of(29)?,
        width_of(42)?,
    ];

    let tra = transformer.map(|b| parse(b, "transformer")).transpose()?;
    let attention_reduction = match &tra {
        Some(t) => {
            let f = read_tensor(t, "sanet4_1.f.weight", "transformer")?;
            let (out, cin) = (f.shape()[0], f.shape()[1]);
            if out == 0 || cin % out != 0 {
                return Err(Error::Checkpoint(format!(
                    "attention projection {cin} -> {out} is not an integer reduction"
                )));
            }
            cin / out
        }
        None => ArchProfile::vgg19().attention_reduction,
    };
    let profile = ArchProfile {
        name: if widths == ArchProfile::vgg19().widths {
            "vgg19".into()
        } else {
            "custom".into()
        },
        widths,
        attention_reduction,
    };
    let mut tensors = StyleNetWeights::init(profile.clone(), seed)?.tensors().clone();

    let mut copy = |st: &SafeTensors<'_>, src: &str, dst: &str, file: &str| -> Result<()> {
        for suffix in ["weight", "bias"] {
            let t = read_tensor(st, &format!("{src}.{suffix}"), file)?;
            tensors.insert(format!("{dst}.{suffix}"), t);
        }
        Ok(())
    };
    for (name, idx) in ENCODER_CONVS.iter().zip(ENCODER_INDICES) {
        copy(&enc, &idx.to_string(), &format!("encoder.{name}"), "encoder")?;
    }
    if let Some(d) = decoder {
        let dec = parse(d, "decoder")?;
        for (i, idx) in DECODER_INDICES.iter().enumerate() {
            copy(
                &dec,
                &idx.to_string(),
                &format!("decoder.conv{}", i + 1),
                "decoder",
            )?;
        }
    }
    if let Some(t) = &tra {
        for block in ["sanet4_1", "sanet5_1"] {
            for (src, dst) in [("f", "f"), ("g", "g"), ("h", "h"), ("out_conv", "out")] {
                copy(
                    t,
                    &format!("{block}.{src}"),
                    &format!("transform.{block}.{dst}"),
                    "transformer",
                )?;
            }
        }
        copy(t, "merge_conv", "transform.merge", "transformer")?;
    }
    debug_assert_eq!(tensors.len(), 2 * conv_specs(&profile).len());
    StyleNetWeights::from_tensors(profile, LossWeights::default(), tensors)
}
