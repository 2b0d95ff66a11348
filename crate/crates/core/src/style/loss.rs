use serde::{Deserialize, Serialize};

use super::network::{check_network_input, encoder, stylized, Params};
use super::weights::StyleNetWeights;
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::nn::{Graph, Tensor, Var};

/// Multipliers of the four training loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub content: f64,
    pub style: f64,
    pub identity1: f64,
    pub identity2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            content: 1.0,
            style: 3.0,
            identity1: 50.0,
            identity2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.content, self.style, self.identity1, self.identity2];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-term loss values and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub content: f64,
    pub style: f64,
    pub identity1: f64,
    pub identity2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn from_terms(content: f64, style: f64, id1: f64, id2: f64, lw: &LossWeights) -> Self {
        LossBreakdown {
            content,
            style,
            identity1: id1,
            identity2: id2,
            total: lw.content * content + lw.style * style + lw.identity1 * id1 + lw.identity2 * id2,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.content,
            self.style,
            self.identity1,
            self.identity2,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("content", self.content),
            ("style", self.style),
            ("identity1", self.identity1),
            ("identity2", self.identity2),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Mean squared distance of normalized features at relu4_1 and relu5_1.
pub(crate) fn content_term(g: &mut Graph<'_>, out: &[Var; 5], target: &[Var; 5]) -> Var {
    let mut terms = Vec::with_capacity(2);
    for l in [3, 4] {
        let a = g.mean_var_norm(out[l]);
        let b = g.mean_var_norm(target[l]);
        terms.push(g.mse(a, b));
    }
    g.sum(&terms).expect("two terms")
}

/// Distance of per-channel means and standard deviations over all five taps.
pub(crate) fn style_term(g: &mut Graph<'_>, out: &[Var; 5], target: &[Var; 5]) -> Var {
    let mut terms = Vec::with_capacity(10);
    for l in 0..5 {
        let ma = g.channel_mean(out[l]);
        let mb = g.channel_mean(target[l]);
        let dm = g.sub(ma, mb);
        terms.push(g.l2_norm(dm));
        let sa = g.channel_std(out[l]);
        let sb = g.channel_std(target[l]);
        let ds = g.sub(sa, sb);
        terms.push(g.l2_norm(ds));
    }
    g.sum(&terms).expect("ten terms")
}

/// Pixel-level and feature-level identity terms.
#[allow(clippy::too_many_arguments)]
pub(crate) fn identity_terms(
    g: &mut Graph<'_>,
    icc: Var,
    iss: Var,
    content: Var,
    style: Var,
    f_icc: &[Var; 5],
    f_iss: &[Var; 5],
    fc: &[Var; 5],
    fs: &[Var; 5],
) -> (Var, Var) {
    let a = g.mse(icc, content);
    let b = g.mse(iss, style);
    let id1 = g.add(a, b);
    let mut terms = Vec::with_capacity(10);
    for l in 0..5 {
        terms.push(g.mse(f_icc[l], fc[l]));
        terms.push(g.mse(f_iss[l], fs[l]));
    }
    let id2 = g.sum(&terms).expect("ten terms");
    (id1, id2)
}

pub(crate) struct LossVars {
    pub content: Var,
    pub style: Var,
    pub identity1: Var,
    pub identity2: Var,
}

/// Builds all four loss terms for one (content, style) pair: three network
/// passes (Ics, Icc, Iss) plus the encodings the losses compare.
pub(crate) fn pair_losses(g: &mut Graph<'_>, p: &Params, content: Var, style: Var) -> LossVars {
    let fc = encoder(g, p, content);
    let fs = encoder(g, p, style);
    let ics = stylized(g, p, &fc, &fs);
    let f_ics = encoder(g, p, ics);
    let content_l = content_term(g, &f_ics, &fc);
    let style_l = style_term(g, &f_ics, &fs);

    let icc = stylized(g, p, &fc, &fc);
    let iss = stylized(g, p, &fs, &fs);
    let f_icc = encoder(g, p, icc);
    let f_iss = encoder(g, p, iss);
    let (identity1, identity2) = identity_terms(g, icc, iss, content, style, &f_icc, &f_iss, &fc, &fs);
    LossVars {
        content: content_l,
        style: style_l,
        identity1,
        identity2,
    }
}

fn check_same_dims(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::contract(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn dims_of(t: &Tensor) -> (u32, u32) {
    let (_, h, w) = t.dims3();
    (w as u32, h as u32)
}

enum Statistic {
    Content,
    Style,
}

fn feature_loss(
    stat: Statistic,
    output: &Tensor,
    target: &Tensor,
    w: &StyleNetWeights,
    with_grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    check_network_input(dims_of(output), "loss input")?;
    check_network_input(dims_of(target), "loss target")?;
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let x = g.param(output, with_grad);
    let t = g.param(target, false);
    let fx = encoder(&mut g, &p, x);
    let ft = encoder(&mut g, &p, t);
    let loss = match stat {
        Statistic::Content => content_term(&mut g, &fx, &ft),
        Statistic::Style => style_term(&mut g, &fx, &ft),
    };
    let value = g.value(loss).item();
    let grad = with_grad.then(|| g.backward(loss).take(x).expect("input requires grad"));
    Ok((value, grad))
}

/// Mean squared distance between mean-variance normalized encoder features
/// of `stylized` and `content` at relu4_1 and relu5_1.
pub fn content_loss(stylized: &Image, content: &Image, w: &StyleNetWeights) -> Result<f64> {
    let (a, b) = (stylized.to_tensor(), content.to_tensor());
    check_same_dims(&a, &b, "content_loss")?;
    Ok(feature_loss(Statistic::Content, &a, &b, w, false)?.0)
}

/// Sum over relu1_1..relu5_1 of the Euclidean distances between per-channel
/// feature means and between per-channel standard deviations.
pub fn style_loss(stylized: &Image, style: &Image, w: &StyleNetWeights) -> Result<f64> {
    Ok(feature_loss(
        Statistic::Style,
        &stylized.to_tensor(),
        &style.to_tensor(),
        w,
        false,
    )?
    .0)
}

/// Content loss and its gradient with respect to the stylized input tensor.
pub fn content_loss_with_grad(
    stylized: &Tensor,
    content: &Tensor,
    w: &StyleNetWeights,
) -> Result<(f64, Tensor)> {
    check_same_dims(stylized, content, "content_loss")?;
    let (v, g) = feature_loss(Statistic::Content, stylized, content, w, true)?;
    Ok((v, g.expect("requested")))
}

/// Style loss and its gradient with respect to the stylized input tensor.
pub fn style_loss_with_grad(stylized: &Tensor, style: &Tensor, w: &StyleNetWeights) -> Result<(f64, Tensor)> {
    let (v, g) = feature_loss(Statistic::Style, stylized, style, w, true)?;
    Ok((v, g.expect("requested")))
}

/// Identity losses of given reconstructions: `icc` should reproduce
/// `content` and `iss` should reproduce `style`.
pub fn identity_losses_from_outputs(
    icc: &Image,
    iss: &Image,
    content: &Image,
    style: &Image,
    w: &StyleNetWeights,
) -> Result<(f64, f64)> {
    let (icc, iss, c, s) = (
        icc.to_tensor(),
        iss.to_tensor(),
        content.to_tensor(),
        style.to_tensor(),
    );
    check_same_dims(&icc, &c, "identity (content)")?;
    check_same_dims(&iss, &s, "identity (style)")?;
    for t in [&c, &s] {
        check_network_input(dims_of(t), "identity loss input")?;
    }
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let [icc, iss, c, s] = [&icc, &iss, &c, &s].map(|t| g.param(t, false));
    let f_icc = encoder(&mut g, &p, icc);
    let f_iss = encoder(&mut g, &p, iss);
    let fc = encoder(&mut g, &p, c);
    let fs = encoder(&mut g, &p, s);
    let (a, b) = identity_terms(&mut g, icc, iss, c, s, &f_icc, &f_iss, &fc, &fs);
    Ok((g.value(a).item(), g.value(b).item()))
}

/// `(L_id1, L_id2)`: the network run with `content` as both inputs should
/// reproduce `content`, likewise for `style`. L_id1 compares pixels, L_id2
/// compares encoder features at all five taps. Both use mean squared error.
pub fn identity_losses(content: &Image, style: &Image, w: &StyleNetWeights) -> Result<(f64, f64)> {
    let terms = super::train::evaluate_pair(&content.to_tensor(), &style.to_tensor(), w)?;
    Ok((terms.identity1, terms.identity2))
}
