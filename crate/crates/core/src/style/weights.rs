use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::LossWeights;
use super::profile::{conv_specs, ArchProfile, Group, Layer};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// All network tensors plus the architecture they belong to.
///
/// The encoder part is frozen; only transform and decoder tensors are
/// trainable.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleNetWeights {
    profile: ArchProfile,
    loss_weights: LossWeights,
    tensors: BTreeMap<String, Tensor>,
}

impl StyleNetWeights {
    /// Random initialization with zero biases and unit-gain uniform weights.
    ///
    /// Thin ReLU stacks easily start with every unit of some layer dead, so
    /// the init keeps the whole path from image to output active: each
    /// attention output projection starts at zero (the block passes content
    /// features through), and every filter on that path whose weights sum
    /// negative is sign-flipped, since it sees non-negative inputs.
    /// Values are rounded to `f32` so a checkpoint round trip is exact.
    pub fn init(profile: ArchProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for spec in conv_specs(&profile) {
            let fan_in = (spec.cin * spec.k * spec.k) as f64;
            let wb = (3.0 / fan_in).sqrt();
            let n = spec.cout * spec.cin * spec.k * spec.k;
            let mut w: Vec<f64> = (0..n).map(|_| round_f32(rng.gen_range(-wb..wb))).collect();
            if spec.name.ends_with(".out") {
                w.iter_mut().for_each(|v| *v = 0.0);
            } else if on_signal_path(&spec.name) {
                for filter in w.chunks_exact_mut(n / spec.cout) {
                    if filter.iter().sum::<f64>() < 0.0 {
                        filter.iter_mut().for_each(|v| *v = -*v);
                    }
                }
            }
            tensors.insert(spec.weight_name(), Tensor::new(spec.weight_shape(), w));
            tensors.insert(spec.bias_name(), Tensor::zeros(vec![spec.cout]));
        }
        Ok(StyleNetWeights {
            profile,
            loss_weights: LossWeights::default(),
            tensors,
        })
    }

    /// Assembles weights from named tensors, checking names, shapes and
    /// finiteness against the profile.
    pub fn from_tensors(
        profile: ArchProfile,
        loss_weights: LossWeights,
        tensors: BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let w = StyleNetWeights {
            profile,
            loss_weights,
            tensors,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let specs = conv_specs(&self.profile);
        let mut expected = 0;
        for spec in &specs {
            for (name, shape) in [
                (spec.weight_name(), spec.weight_shape()),
                (spec.bias_name(), vec![spec.cout]),
            ] {
                expected += 1;
                let t = self
                    .tensors
                    .get(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, profile `{}` expects {shape:?}",
                        t.shape(),
                        self.profile.name
                    )));
                }
                if !t.is_finite() {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has non-finite values"
                    )));
                }
            }
        }
        if self.tensors.len() != expected {
            let known: Vec<String> = specs
                .iter()
                .flat_map(|s| [s.weight_name(), s.bias_name()])
                .collect();
            let extra = self.tensors.keys().find(|k| !known.contains(k));
            return Err(Error::Checkpoint(format!(
                "unexpected tensor `{}`",
                extra.map(String::as_str).unwrap_or("?")
            )));
        }
        self.loss_weights.validate()
    }

    pub fn profile(&self) -> &ArchProfile {
        &self.profile
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.loss_weights
    }

    pub fn set_loss_weights(&mut self, lw: LossWeights) {
        self.loss_weights = lw;
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub(crate) fn tensor(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("validated weights lack `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Names of tensors updated by training, in sorted order.
    pub fn trainable_names(&self) -> Vec<String> {
        self.names_in(|g| g != Group::Encoder)
    }

    pub fn encoder_names(&self) -> Vec<String> {
        self.names_in(|g| g == Group::Encoder)
    }

    fn names_in(&self, keep: impl Fn(Group) -> bool) -> Vec<String> {
        let mut names: Vec<String> = conv_specs(&self.profile)
            .into_iter()
            .filter(|s| keep(s.group))
            .flat_map(|s| [s.weight_name(), s.bias_name()])
            .collect();
        names.sort();
        names
    }

    /// Copy of the attention block parameters attached to `layer`
    /// (relu4_1 or relu5_1).
    pub fn attention_params(&self, layer: Layer) -> Result<AttentionBlockParams> {
        let block = match layer {
            Layer::Relu4_1 => "sanet4_1",
            Layer::Relu5_1 => "sanet5_1",
            other => return Err(Error::contract(format!("no attention block at {}", other.name()))),
        };
        let conv = |n: &str| Conv1x1 {
            weight: self.tensor(&format!("transform.{block}.{n}.weight")).clone(),
            bias: self.tensor(&format!("transform.{block}.{n}.bias")).clone(),
        };
        Ok(AttentionBlockParams {
            f: conv("f"),
            g: conv("g"),
            h: conv("h"),
            out: conv("out"),
        })
    }
}

fn on_signal_path(conv: &str) -> bool {
    !conv.starts_with("transform.sanet")
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// A 1x1 convolution: weight `(cout, cin, 1, 1)`, bias `(cout)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1x1 {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv1x1 {
    pub fn random(cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        let b = 1.0 / (cin as f64).sqrt();
        Conv1x1 {
            weight: Tensor::new(
                vec![cout, cin, 1, 1],
                (0..cout * cin).map(|_| rng.gen_range(-b..b)).collect(),
            ),
            bias: Tensor::new(vec![cout], (0..cout).map(|_| rng.gen_range(-b..b)).collect()),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Projections of one style-attention block: query (`f`), key (`g`),
/// value (`h`) and the output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlockParams {
    pub f: Conv1x1,
    pub g: Conv1x1,
    pub h: Conv1x1,
    pub out: Conv1x1,
}

impl AttentionBlockParams {
    pub fn random(channels: usize, reduced: usize, rng: &mut impl Rng) -> Self {
        AttentionBlockParams {
            f: Conv1x1::random(channels, reduced, rng),
            g: Conv1x1::random(channels, reduced, rng),
            h: Conv1x1::random(channels, channels, rng),
            out: Conv1x1::random(channels, channels, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.h.in_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let ok = self.f.in_channels() == c
            && self.g.in_channels() == c
            && self.f.out_channels() == self.g.out_channels()
            && self.h.out_channels() == c
            && self.out.in_channels() == c
            && self.out.out_channels() == c
            && [&self.f, &self.g, &self.h, &self.out]
                .iter()
                .all(|p| p.weight.shape()[2..] == [1, 1] && p.bias.len() == p.out_channels());
        if ok {
            Ok(())
        } else {
            Err(Error::contract("inconsistent attention block shapes"))
        }
    }
}
