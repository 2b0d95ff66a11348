//! Encoder, style-attention transform and decoder, built on the autodiff
//! graph so the same code serves inference and training.

use std::collections::HashMap;

use super::profile::{conv_specs, Group, Layer};
use super::weights::{AttentionBlockParams, Conv1x1, StyleNetWeights};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::nn::{Graph, Tensor, Var};

/// Smallest power-of-two side the encoder accepts: relu5_1 sits at 1/16
/// resolution and needs at least one position.
pub const MIN_NETWORK_SIDE: u32 = 16;

/// Activations of one encoder layer, `(channels, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    layer: Layer,
    activations: Tensor,
}

impl FeatureMap {
    pub fn new(layer: Layer, activations: Tensor) -> Result<Self> {
        if activations.shape().len() != 3 {
            return Err(Error::contract(format!(
                "feature map must be (c, h, w), got {:?}",
                activations.shape()
            )));
        }
        if !activations.is_finite() {
            return Err(Error::contract("feature map has non-finite values"));
        }
        Ok(FeatureMap { layer, activations })
    }

    pub fn layer(&self) -> Layer {
        self.layer
    }

    pub fn activations(&self) -> &Tensor {
        &self.activations
    }

    pub fn into_activations(self) -> Tensor {
        self.activations
    }

    /// `(channels, height, width)`
    pub fn dims(&self) -> (usize, usize, usize) {
        self.activations.dims3()
    }
}

/// Encoder output at the two layers the transform consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFeatures {
    pub relu4_1: FeatureMap,
    pub relu5_1: FeatureMap,
}

impl EncodedFeatures {
    pub fn get(&self, layer: Layer) -> Option<&FeatureMap> {
        match layer {
            Layer::Relu4_1 => Some(&self.relu4_1),
            Layer::Relu5_1 => Some(&self.relu5_1),
            _ => None,
        }
    }
}

/// Graph handles for every conv in a weight set.
pub(crate) struct Params {
    convs: HashMap<String, (Var, Var)>,
}

impl Params {
    /// Adds all weights as borrowed leaves. Transform and decoder tensors
    /// require gradients when `train` is set; the encoder never does.
    pub fn bind<'t>(g: &mut Graph<'t>, w: &'t StyleNetWeights, train: bool) -> Self {
        let mut convs = HashMap::new();
        for spec in conv_specs(w.profile()) {
            let grad = train && spec.group != Group::Encoder;
            let wv = g.param(w.tensor(&spec.weight_name()), grad);
            let bv = g.param(w.tensor(&spec.bias_name()), grad);
            convs.insert(spec.name, (wv, bv));
        }
        Params { convs }
    }

    pub fn conv(&self, name: &str) -> (Var, Var) {
        *self
            .convs
            .get(name)
            .unwrap_or_else(|| panic!("unknown conv `{name}`"))
    }

    pub fn attention(&self, block: &str) -> AttnVars {
        let c = |n: &str| self.conv(&format!("transform.{block}.{n}"));
        AttnVars {
            f: c("f"),
            g: c("g"),
            h: c("h"),
            out: c("out"),
        }
    }

    /// `(weight, bias)` leaves for every conv, keyed by conv name.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &(Var, Var))> {
        self.convs.iter()
    }
}

#[derive(Clone, Copy)]
pub(crate) struct AttnVars {
    pub f: (Var, Var),
    pub g: (Var, Var),
    pub h: (Var, Var),
    pub out: (Var, Var),
}

impl AttnVars {
    fn bind<'t>(g: &mut Graph<'t>, p: &'t AttentionBlockParams) -> Self {
        let mut c = |conv: &'t Conv1x1| (g.param(&conv.weight, false), g.param(&conv.bias, false));
        AttnVars {
            f: c(&p.f),
            g: c(&p.g),
            h: c(&p.h),
            out: c(&p.out),
        }
    }
}

fn conv1(g: &mut Graph<'_>, (w, b): (Var, Var), x: Var) -> Var {
    g.conv2d(x, w, b)
}

fn conv3(g: &mut Graph<'_>, (w, b): (Var, Var), x: Var) -> Var {
    let padded = g.pad_reflect(x, 1);
    g.conv2d(padded, w, b)
}

fn conv3_relu(g: &mut Graph<'_>, p: &Params, name: &str, x: Var) -> Var {
    let y = conv3(g, p.conv(name), x);
    g.relu(y)
}

/// Runs the frozen encoder on a `(3, h, w)` input; returns relu1_1..relu5_1.
pub(crate) fn encoder(g: &mut Graph<'_>, p: &Params, x: Var) -> [Var; 5] {
    let e = |n: &str| format!("encoder.{n}");
    let x = conv1(g, p.conv(&e("conv0")), x);
    let r1 = conv3_relu(g, p, &e("conv1_1"), x);

    let x = conv3_relu(g, p, &e("conv1_2"), r1);
    let x = g.max_pool2(x);
    let r2 = conv3_relu(g, p, &e("conv2_1"), x);

    let x = conv3_relu(g, p, &e("conv2_2"), r2);
    let x = g.max_pool2(x);
    let r3 = conv3_relu(g, p, &e("conv3_1"), x);

    let mut x = r3;
    for n in ["conv3_2", "conv3_3", "conv3_4"] {
        x = conv3_relu(g, p, &e(n), x);
    }
    let x = g.max_pool2(x);
    let r4 = conv3_relu(g, p, &e("conv4_1"), x);

    let mut x = r4;
    for n in ["conv4_2", "conv4_3", "conv4_4"] {
        x = conv3_relu(g, p, &e(n), x);
    }
    let x = g.max_pool2(x);
    let r5 = conv3_relu(g, p, &e("conv5_1"), x);

    [r1, r2, r3, r4, r5]
}

/// Style attention: normalize both maps, attend from each content position
/// over all style positions, gather projected style features, project and
/// add the content features back. Returns `(output, attention matrix)`.
pub(crate) fn attention(g: &mut Graph<'_>, a: &AttnVars, fc: Var, fs: Var) -> (Var, Var) {
    let (c, hc, wc) = g.value(fc).dims3();
    let (_, hs, ws) = g.value(fs).dims3();
    let (nc, ns) = (hc * wc, hs * ws);

    let norm_c = g.mean_var_norm(fc);
    let norm_s = g.mean_var_norm(fs);
    let q = conv1(g, a.f, norm_c);
    let k = conv1(g, a.g, norm_s);
    let v = conv1(g, a.h, fs);
    let reduced = g.value(q).dims3().0;

    let q = g.reshape(q, vec![reduced, nc]);
    let k = g.reshape(k, vec![reduced, ns]);
    let v = g.reshape(v, vec![c, ns]);

    let qt = g.transpose(q);
    let logits = g.matmul(qt, k);
    let attn = g.softmax_rows(logits);
    let attn_t = g.transpose(attn);
    let gathered = g.matmul(v, attn_t);
    let gathered = g.reshape(gathered, vec![c, hc, wc]);
    let projected = conv1(g, a.out, gathered);
    (g.add(projected, fc), attn)
}

/// Upsamples the relu5_1 branch, adds the relu4_1 branch and applies the
/// 3x3 merge convolution.
pub(crate) fn merge(g: &mut Graph<'_>, p: &Params, out4: Var, out5: Var) -> Var {
    let up = g.upsample2(out5);
    let sum = g.add(out4, up);
    conv3(g, p.conv("transform.merge"), sum)
}

pub(crate) fn transform(g: &mut Graph<'_>, p: &Params, content: &[Var; 5], style: &[Var; 5]) -> Var {
    let (o4, _) = attention(g, &p.attention("sanet4_1"), content[3], style[3]);
    let (o5, _) = attention(g, &p.attention("sanet5_1"), content[4], style[4]);
    merge(g, p, o4, o5)
}

/// Mirror of the encoder up to relu4_1: nearest upsampling and 3x3
/// reflect-padded convolutions. Output is raw (unclamped) RGB.
pub(crate) fn decoder(g: &mut Graph<'_>, p: &Params, x: Var) -> Var {
    let d = |i: usize| format!("decoder.conv{i}");
    let mut x = conv3_relu(g, p, &d(1), x);
    x = g.upsample2(x);
    for i in 2..=5 {
        x = conv3_relu(g, p, &d(i), x);
    }
    x = g.upsample2(x);
    x = conv3_relu(g, p, &d(6), x);
    x = conv3_relu(g, p, &d(7), x);
    x = g.upsample2(x);
    x = conv3_relu(g, p, &d(8), x);
    conv3(g, p.conv(&d(9)), x)
}

/// Full stylization graph from pre-encoded features; raw decoder output.
pub(crate) fn stylized(g: &mut Graph<'_>, p: &Params, content: &[Var; 5], style: &[Var; 5]) -> Var {
    let t = transform(g, p, content, style);
    decoder(g, p, t)
}

pub(crate) fn check_network_input(img_dims: (u32, u32), what: &str) -> Result<()> {
    let (w, h) = img_dims;
    let ok = |s: u32| s.is_power_of_two() && s >= MIN_NETWORK_SIDE;
    if !ok(w) || !ok(h) {
        return Err(Error::contract(format!(
            "{what} is {w}x{h}; the network needs power-of-two sides >= {MIN_NETWORK_SIDE} \
             (preprocess with to_power_of_two)"
        )));
    }
    Ok(())
}

fn tensor_dims(t: &Tensor) -> (u32, u32) {
    let (_, h, w) = t.dims3();
    (w as u32, h as u32)
}

/// Encoder features at relu4_1 (1/8 resolution) and relu5_1 (1/16).
pub fn encode(img: &Image, w: &StyleNetWeights) -> Result<EncodedFeatures> {
    check_network_input(img.dims(), "encoder input")?;
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let x = g.input(img.to_tensor(), false);
    let feats = encoder(&mut g, &p, x);
    Ok(EncodedFeatures {
        relu4_1: FeatureMap::new(Layer::Relu4_1, g.value(feats[3]).clone())?,
        relu5_1: FeatureMap::new(Layer::Relu5_1, g.value(feats[4]).clone())?,
    })
}

/// Encoder features at all five taps, relu1_1 first.
pub fn encode_all(img: &Image, w: &StyleNetWeights) -> Result<Vec<FeatureMap>> {
    check_network_input(img.dims(), "encoder input")?;
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let x = g.input(img.to_tensor(), false);
    let feats = encoder(&mut g, &p, x);
    Layer::ALL
        .iter()
        .zip(feats)
        .map(|(l, v)| FeatureMap::new(*l, g.value(v).clone()))
        .collect()
}

fn check_attention_inputs(fc: &FeatureMap, fs: &FeatureMap, p: &AttentionBlockParams) -> Result<()> {
    p.validate()?;
    if fc.layer() != fs.layer() {
        return Err(Error::contract(format!(
            "content features from {} but style features from {}",
            fc.layer().name(),
            fs.layer().name()
        )));
    }
    let (cc, cs) = (fc.dims().0, fs.dims().0);
    if cc != cs || cc != p.channels() {
        return Err(Error::contract(format!(
            "channel mismatch: content {cc}, style {cs}, attention block {}",
            p.channels()
        )));
    }
    Ok(())
}

/// Rearranges style features according to content features; output has the
/// content map's shape.
pub fn attention_rearrange(fc: &FeatureMap, fs: &FeatureMap, p: &AttentionBlockParams) -> Result<FeatureMap> {
    check_attention_inputs(fc, fs, p)?;
    let mut g = Graph::new();
    let vars = AttnVars::bind(&mut g, p);
    let c = g.param(fc.activations(), false);
    let s = g.param(fs.activations(), false);
    let (out, _) = attention(&mut g, &vars, c, s);
    FeatureMap::new(fc.layer(), g.value(out).clone())
}

/// The `(content positions, style positions)` attention matrix; each row is
/// a softmax distribution.
pub fn attention_matrix(fc: &FeatureMap, fs: &FeatureMap, p: &AttentionBlockParams) -> Result<Tensor> {
    check_attention_inputs(fc, fs, p)?;
    let mut g = Graph::new();
    let vars = AttnVars::bind(&mut g, p);
    let c = g.param(fc.activations(), false);
    let s = g.param(fs.activations(), false);
    let (_, attn) = attention(&mut g, &vars, c, s);
    Ok(g.value(attn).clone())
}

/// Merges the two attention outputs and decodes them to an image at 8x the
/// relu4_1 resolution, clamped to `[0, 1]`.
pub fn merge_and_decode(out4: &FeatureMap, out5: &FeatureMap, w: &StyleNetWeights) -> Result<Image> {
    let (c4, h4, w4) = out4.dims();
    let (c5, h5, w5) = out5.dims();
    if 2 * h5 != h4 || 2 * w5 != w4 || c4 != c5 {
        return Err(Error::contract(format!(
            "relu5_1 map {c5}x{h5}x{w5} must be half the spatial size of relu4_1 map {c4}x{h4}x{w4}"
        )));
    }
    if c4 != w.profile().channels(Layer::Relu4_1) {
        return Err(Error::contract(format!(
            "feature maps have {c4} channels, weights expect {}",
            w.profile().channels(Layer::Relu4_1)
        )));
    }
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let a = g.param(out4.activations(), false);
    let b = g.param(out5.activations(), false);
    let merged = merge(&mut g, &p, a, b);
    let out = decoder(&mut g, &p, merged);
    Image::from_tensor_clamped(g.value(out))
}

/// Stylizes `content` with `style`. Both must already have power-of-two
/// sides; the output has the content's dimensions.
pub fn stylize(content: &Image, style: &Image, w: &StyleNetWeights) -> Result<Image> {
    check_network_input(content.dims(), "content image")?;
    check_network_input(style.dims(), "style image")?;
    let raw = stylize_tensor(&content.to_tensor(), &style.to_tensor(), w)?;
    Image::from_tensor_clamped(&raw)
}

/// Unclamped decoder output for tensor inputs.
pub(crate) fn stylize_tensor(content: &Tensor, style: &Tensor, w: &StyleNetWeights) -> Result<Tensor> {
    check_network_input(tensor_dims(content), "content tensor")?;
    check_network_input(tensor_dims(style), "style tensor")?;
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let c = g.param(content, false);
    let s = g.param(style, false);
    let fc = encoder(&mut g, &p, c);
    let fs = encoder(&mut g, &p, s);
    let out = stylized(&mut g, &p, &fc, &fs);
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::style::profile::ArchProfile;
    use crate::style::train::Adam;

    fn tiny() -> StyleNetWeights {
        StyleNetWeights::init(ArchProfile::tiny(), 7).unwrap()
    }

    fn random_image(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..w * h * 3).map(|_| rng.gen()).collect();
        Image::from_raw(w, h, data).unwrap()
    }

    fn random_map(layer: Layer, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
        let data = (0..c * h * w).map(|_| rng.gen_range(-2.0..2.0)).collect();
        FeatureMap::new(layer, Tensor::new(vec![c, h, w], data)).unwrap()
    }

    fn naive_norm(x: &Tensor) -> Vec<Vec<f64>> {
        let (c, h, w) = x.dims3();
        let n = h * w;
        (0..c)
            .map(|ch| {
                let plane = &x.data()[ch * n..(ch + 1) * n];
                let mean = plane.iter().sum::<f64>() / n as f64;
                let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                plane
                    .iter()
                    .map(|v| (v - mean) / (var + crate::nn::VAR_EPS).sqrt())
                    .collect()
            })
            .collect()
    }

    fn naive_conv1x1(conv: &Conv1x1, x: &[Vec<f64>], pos: usize) -> Vec<f64> {
        let (cout, cin) = (conv.out_channels(), conv.in_channels());
        (0..cout)
            .map(|o| {
                conv.bias.data()[o]
                    + (0..cin)
                        .map(|i| conv.weight.data()[o * cin + i] * x[i][pos])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Position-by-position attention with plain loops.
    fn naive_attention(fc: &Tensor, fs: &Tensor, p: &AttentionBlockParams) -> Vec<f64> {
        let (c, hc, wc) = fc.dims3();
        let (_, hs, ws) = fs.dims3();
        let (nc, ns) = (hc * wc, hs * ws);
        let nfc = naive_norm(fc);
        let nfs = naive_norm(fs);
        let raw_s: Vec<Vec<f64>> = (0..c)
            .map(|ch| fs.data()[ch * ns..(ch + 1) * ns].to_vec())
            .collect();
        let mut out = vec![0.0; c * nc];
        for i in 0..nc {
            let q = naive_conv1x1(&p.f, &nfc, i);
            let logits: Vec<f64> = (0..ns)
                .map(|j| {
                    let k = naive_conv1x1(&p.g, &nfs, j);
                    q.iter().zip(&k).map(|(a, b)| a * b).sum()
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut gathered = vec![vec![0.0; 1]; c];
            for j in 0..ns {
                let v = naive_conv1x1(&p.h, &raw_s, j);
                for ch in 0..c {
                    gathered[ch][0] += exps[j] / z * v[ch];
                }
            }
            let projected = naive_conv1x1(&p.out, &gathered, 0);
            for ch in 0..c {
                out[ch * nc + i] = projected[ch] + fc.data()[ch * nc + i];
            }
        }
        out
    }

    #[test]
    fn attention_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (c, hc, wc, hs, ws) in [(8, 4, 4, 4, 4), (8, 8, 8, 8, 8), (8, 2, 8, 4, 2), (3, 1, 1, 2, 3)] {
            let p = AttentionBlockParams::random(c, (c / 8).max(1), &mut rng);
            let fc = random_map(Layer::Relu4_1, c, hc, wc, &mut rng);
            let fs = random_map(Layer::Relu4_1, c, hs, ws, &mut rng);
            let got = attention_rearrange(&fc, &fs, &p).unwrap();
            let want = naive_attention(fc.activations(), fs.activations(), &p);
            let diff = got
                .activations()
                .data()
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-5, "{c}x{hc}x{wc} vs {hs}x{ws}: {diff}");
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c = rng.gen_range(1..10);
            let p = AttentionBlockParams::random(c, rng.gen_range(1..=c), &mut rng);
            let fc = random_map(
                Layer::Relu5_1,
                c,
                rng.gen_range(1..7),
                rng.gen_range(1..7),
                &mut rng,
            );
            let fs = random_map(
                Layer::Relu5_1,
                c,
                rng.gen_range(1..7),
                rng.gen_range(1..7),
                &mut rng,
            );
            let a = attention_matrix(&fc, &fs, &p).unwrap();
            let (rows, cols) = a.dims2();
            assert_eq!(rows, fc.dims().1 * fc.dims().2);
            for r in a.data().chunks_exact(cols) {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_style_position_broadcasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AttentionBlockParams::random(4, 2, &mut rng);
        let fc = random_map(Layer::Relu4_1, 4, 3, 3, &mut rng);
        let fs = random_map(Layer::Relu4_1, 4, 1, 1, &mut rng);
        let a = attention_matrix(&fc, &fs, &p).unwrap();
        assert!(a.data().iter().all(|v| (*v - 1.0).abs() < 1e-12));
        let out = attention_rearrange(&fc, &fs, &p).unwrap();
        let s: Vec<Vec<f64>> = (0..4).map(|ch| vec![fs.activations().data()[ch]]).collect();
        let hv: Vec<Vec<f64>> = naive_conv1x1(&p.h, &s, 0).into_iter().map(|v| vec![v]).collect();
        let projected = naive_conv1x1(&p.out, &hv, 0);
        for ch in 0..4 {
            for pos in 0..9 {
                let want = projected[ch] + fc.activations().data()[ch * 9 + pos];
                assert!((out.activations().data()[ch * 9 + pos] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AttentionBlockParams::random(4, 1, &mut rng);
        let fc = random_map(Layer::Relu4_1, 4, 2, 2, &mut rng);
        let fs = random_map(Layer::Relu4_1, 5, 2, 2, &mut rng);
        assert!(matches!(
            attention_rearrange(&fc, &fs, &p),
            Err(Error::Contract(_))
        ));
        let other = random_map(Layer::Relu5_1, 4, 2, 2, &mut rng);
        assert!(attention_rearrange(&fc, &other, &p).is_err());
    }

    #[test]
    fn encoder_dims_follow_strides() {
        let w = tiny();
        for side in [64u32, 128, 256] {
            let f = encode(&random_image(side, side, 5), &w).unwrap();
            let s = side as usize;
            assert_eq!(f.relu4_1.dims(), (4, s / 8, s / 8));
            assert_eq!(f.relu5_1.dims(), (4, s / 16, s / 16));
        }
        let all = encode_all(&random_image(64, 32, 5), &w).unwrap();
        let dims: Vec<_> = all.iter().map(|f| f.dims()).collect();
        assert_eq!(
            dims,
            vec![(4, 32, 64), (4, 16, 32), (4, 8, 16), (4, 4, 8), (4, 2, 4)]
        );
    }

    #[test]
    fn encoder_is_deterministic_and_checks_input() {
        let w = tiny();
        let img = random_image(64, 64, 6);
        assert_eq!(encode(&img, &w).unwrap(), encode(&img, &w).unwrap());
        assert!(matches!(
            encode(&random_image(48, 64, 6), &w),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn merge_and_decode_shape_and_range() {
        let w = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let o4 = random_map(Layer::Relu4_1, 4, 32, 32, &mut rng);
        let o5 = random_map(Layer::Relu5_1, 4, 16, 16, &mut rng);
        let img = merge_and_decode(&o4, &o5, &w).unwrap();
        assert_eq!(img.dims(), (256, 256));
        assert!(img.as_raw().iter().all(|v| (0.0..=1.0).contains(v)));
        let bad = random_map(Layer::Relu5_1, 4, 15, 16, &mut rng);
        assert!(merge_and_decode(&o4, &bad, &w).is_err());
    }

    #[test]
    fn stylize_keeps_content_dims_and_is_deterministic() {
        let w = tiny();
        let style = random_image(64, 64, 10);
        for (cw, ch) in [(64, 64), (128, 64), (64, 256)] {
            let content = random_image(cw, ch, 11);
            let a = stylize(&content, &style, &w).unwrap();
            assert_eq!(a.dims(), (cw, ch));
            assert_eq!(a, stylize(&content, &style, &w).unwrap());
        }
    }

    fn smooth_image(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: [[f32; 3]; 3] = rng.gen();
        Image::from_fn(64, 64, |x, y| {
            let (u, v) = (x as f32 / 63.0, y as f32 / 63.0);
            [0, 1, 2].map(|k| c[0][k] * (1.0 - u) + c[1][k] * u * (1.0 - v) + c[2][k] * u * v)
        })
    }

    #[test]
    fn decoder_learns_to_reconstruct_encoder_features() {
        let mut w = tiny();
        let images: Vec<Image> = (0..8).map(smooth_image).collect();
        let mut adam = Adam::default();
        let mae = |w: &StyleNetWeights| -> f64 {
            images
                .iter()
                .map(|img| {
                    let mut g = Graph::new();
                    let p = Params::bind(&mut g, w, false);
                    let x = g.input(img.to_tensor(), false);
                    let f = encoder(&mut g, &p, x);
                    let y = decoder(&mut g, &p, f[3]);
                    let out = Image::from_tensor_clamped(g.value(y)).unwrap();
                    out.as_raw()
                        .iter()
                        .zip(img.as_raw())
                        .map(|(a, b)| (a - b).abs() as f64)
                        .sum::<f64>()
                        / out.as_raw().len() as f64
                })
                .sum::<f64>()
                / images.len() as f64
        };
        let before = mae(&w);
        for _ in 0..400 {
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            for img in &images {
                let mut g = Graph::new();
                let p = Params::bind(&mut g, &w, true);
                let x = g.input(img.to_tensor(), false);
                let f = encoder(&mut g, &p, x);
                let y = decoder(&mut g, &p, f[3]);
                let target = g.input(img.to_tensor(), false);
                let loss = g.mse(y, target);
                let mut gr = g.backward(loss);
                for (name, (wv, bv)) in p.iter().filter(|(n, _)| n.starts_with("decoder.")) {
                    for (suffix, v) in [("weight", wv), ("bias", bv)] {
                        let t = gr.take(*v).unwrap();
                        grads
                            .entry(format!("{name}.{suffix}"))
                            .and_modify(|acc| acc.add_assign(&t))
                            .or_insert(t);
                    }
                }
            }
            adam.update(&mut w, &grads, 1e-3);
        }
        let after = mae(&w);
        assert!(after < 0.15, "reconstruction MAE {before:.3} -> {after:.3}");
    }
}
