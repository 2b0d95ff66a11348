//! Desk-scale training: loss evaluation with gradients, Adam, and a
//! step loop. Only transform and decoder tensors are updated.

use std::collections::BTreeMap;

use super::loss::{pair_losses, LossBreakdown, LossWeights};
use super::network::{check_network_input, Params};
use super::weights::StyleNetWeights;
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::nn::{Graph, Tensor};
use crate::par;

fn dims_of(t: &Tensor) -> (u32, u32) {
    let (_, h, w) = t.dims3();
    (w as u32, h as u32)
}

fn check_pair(content: &Tensor, style: &Tensor) -> Result<()> {
    check_network_input(dims_of(content), "training content")?;
    check_network_input(dims_of(style), "training style")
}

/// Forward-only loss terms for one pair, weighted by the weights' own
/// [`LossWeights`].
pub fn evaluate_pair(content: &Tensor, style: &Tensor, w: &StyleNetWeights) -> Result<LossBreakdown> {
    check_pair(content, style)?;
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, false);
    let c = g.param(content, false);
    let s = g.param(style, false);
    let l = pair_losses(&mut g, &p, c, s);
    Ok(LossBreakdown::from_terms(
        g.value(l.content).item(),
        g.value(l.style).item(),
        g.value(l.identity1).item(),
        g.value(l.identity2).item(),
        &w.loss_weights(),
    ))
}

/// Batch-mean loss terms (weighted by `lw`) without gradients.
pub fn evaluate_batch(
    batch: &[(Tensor, Tensor)],
    w: &StyleNetWeights,
    lw: &LossWeights,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    let per_pair = par::map_slice(batch, |(c, s)| evaluate_pair(c, s, w));
    let mut sum = [0.0; 4];
    for r in per_pair {
        let b = r?;
        for (acc, v) in sum.iter_mut().zip([b.content, b.style, b.identity1, b.identity2]) {
            *acc += v;
        }
    }
    let n = batch.len() as f64;
    Ok(LossBreakdown::from_terms(
        sum[0] / n,
        sum[1] / n,
        sum[2] / n,
        sum[3] / n,
        lw,
    ))
}

/// Batch-mean loss terms and gradients of the weighted total with respect
/// to every trainable tensor.
pub fn loss_and_gradients(
    batch: &[(Tensor, Tensor)],
    w: &StyleNetWeights,
    lw: &LossWeights,
) -> Result<(LossBreakdown, BTreeMap<String, Tensor>)> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    lw.validate()?;
    for (c, s) in batch {
        check_pair(c, s)?;
    }
    let trainable = w.trainable_names();
    let per_pair = par::map_slice(batch, |(c, s)| pair_gradients(c, s, w, lw, &trainable));

    let n = batch.len() as f64;
    let mut terms = [0.0; 4];
    let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
    // Summed in batch order so the result does not depend on scheduling.
    for (t, g) in per_pair {
        for (acc, v) in terms.iter_mut().zip(t) {
            *acc += v;
        }
        for (name, tensor) in g {
            match grads.get_mut(&name) {
                Some(acc) => acc.add_assign(&tensor),
                None => {
                    grads.insert(name, tensor);
                }
            }
        }
    }
    for g in grads.values_mut() {
        g.scale_in_place(1.0 / n);
    }
    let breakdown = LossBreakdown::from_terms(terms[0] / n, terms[1] / n, terms[2] / n, terms[3] / n, lw);
    Ok((breakdown, grads))
}

fn pair_gradients(
    content: &Tensor,
    style: &Tensor,
    w: &StyleNetWeights,
    lw: &LossWeights,
    trainable: &[String],
) -> ([f64; 4], Vec<(String, Tensor)>) {
    let mut g = Graph::new();
    let p = Params::bind(&mut g, w, true);
    let c = g.param(content, false);
    let s = g.param(style, false);
    let l = pair_losses(&mut g, &p, c, s);
    let terms = [
        g.value(l.content).item(),
        g.value(l.style).item(),
        g.value(l.identity1).item(),
        g.value(l.identity2).item(),
    ];
    let weighted = [
        g.scale(l.content, lw.content),
        g.scale(l.style, lw.style),
        g.scale(l.identity1, lw.identity1),
        g.scale(l.identity2, lw.identity2),
    ];
    let total = g.sum(&weighted).expect("four terms");
    let mut grads = g.backward(total);

    let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();
    for (conv, (wv, bv)) in p.iter() {
        if let Some(t) = grads.take(*wv) {
            by_name.insert(format!("{conv}.weight"), t);
        }
        if let Some(t) = grads.take(*bv) {
            by_name.insert(format!("{conv}.bias"), t);
        }
    }
    let out = trainable
        .iter()
        .map(|name| {
            let t = by_name
                .remove(name)
                .unwrap_or_else(|| Tensor::zeros(w.tensor(name).shape().to_vec()));
            (name.clone(), t)
        })
        .collect();
    (terms, out)
}

/// Adam optimizer state for the trainable tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. With `lr == 0` the weights are left
    /// untouched.
    pub fn update(&mut self, w: &mut StyleNetWeights, grads: &BTreeMap<String, Tensor>, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, grad) in grads {
            let param = w.get_mut(name).expect("gradient for unknown tensor");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            for (i, (p, g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                if lr != 0.0 {
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

/// Converts image pairs to network tensors, checking sizes.
pub fn batch_tensors(batch: &[(Image, Image)]) -> Result<Vec<(Tensor, Tensor)>> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    batch
        .iter()
        .map(|(c, s)| {
            check_network_input(c.dims(), "training content")?;
            check_network_input(s.dims(), "training style")?;
            Ok((c.to_tensor(), s.to_tensor()))
        })
        .collect()
}

/// One gradient step on the weighted total loss. Returns the updated
/// weights and the loss terms measured before the update. The encoder is
/// never modified.
pub fn train_step(
    batch: &[(Image, Image)],
    w: &StyleNetWeights,
    opt: &mut Adam,
    lw: &LossWeights,
    lr: f64,
) -> Result<(StyleNetWeights, LossBreakdown)> {
    let tensors = batch_tensors(batch)?;
    let mut next = w.clone();
    let losses = step_tensors(&tensors, &mut next, opt, lw, lr)?;
    Ok((next, losses))
}

fn step_tensors(
    batch: &[(Tensor, Tensor)],
    w: &mut StyleNetWeights,
    opt: &mut Adam,
    lw: &LossWeights,
    lr: f64,
) -> Result<LossBreakdown> {
    let (losses, grads) = loss_and_gradients(batch, w, lw)?;
    let step = opt.steps() as usize + 1;
    if let Some(term) = losses.first_non_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("{term} loss is not finite ({losses:?})"),
        });
    }
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("gradient of `{name}` is not finite"),
        });
    }
    opt.update(w, &grads, lr);
    Ok(losses)
}

/// Cosine decay from `base` at step 1 towards `base * floor` at step `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize, floor: f64) -> f64 {
    if total <= 1 {
        return base;
    }
    let frac = (step.saturating_sub(1)) as f64 / (total - 1) as f64;
    let frac = frac.min(1.0);
    base * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}

/// Holds weights, optimizer state and a fixed training set across steps.
pub struct Trainer {
    weights: StyleNetWeights,
    loss_weights: LossWeights,
    optimizer: Adam,
    data: Vec<(Tensor, Tensor)>,
}

impl Trainer {
    pub fn new(weights: StyleNetWeights, loss_weights: LossWeights, data: &[(Image, Image)]) -> Result<Self> {
        loss_weights.validate()?;
        let mut weights = weights;
        weights.set_loss_weights(loss_weights);
        Ok(Trainer {
            weights,
            loss_weights,
            optimizer: Adam::default(),
            data: batch_tensors(data)?,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// One step on the pairs selected by `indices` (all pairs when `None`).
    pub fn step(&mut self, indices: Option<&[usize]>, lr: f64) -> Result<LossBreakdown> {
        let batch: Vec<(Tensor, Tensor)> = match indices {
            Some(ix) => ix.iter().map(|&i| self.data[i].clone()).collect(),
            None => self.data.clone(),
        };
        step_tensors(
            &batch,
            &mut self.weights,
            &mut self.optimizer,
            &self.loss_weights,
            lr,
        )
    }

    pub fn weights(&self) -> &StyleNetWeights {
        &self.weights
    }

    pub fn into_weights(self) -> StyleNetWeights {
        self.weights
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::style::profile::ArchProfile;

    fn pairs(n: usize, side: u32, seed: u64) -> Vec<(Image, Image)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = || {
            let data = (0..side * side * 3).map(|_| rng.gen()).collect();
            Image::from_raw(side, side, data).unwrap()
        };
        (0..n).map(|_| (img(), img())).collect()
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let w = StyleNetWeights::init(ArchProfile::tiny(), 1).unwrap();
        let (next, loss) = train_step(
            &pairs(2, 16, 2),
            &w,
            &mut Adam::default(),
            &LossWeights::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(next, w);
        assert!(loss.total > 0.0);
    }

    #[test]
    fn encoder_stays_frozen_and_rest_moves() {
        let w = StyleNetWeights::init(ArchProfile::tiny(), 1).unwrap();
        let (next, _) = train_step(
            &pairs(2, 16, 3),
            &w,
            &mut Adam::default(),
            &LossWeights::default(),
            1e-3,
        )
        .unwrap();
        for name in w.encoder_names() {
            assert_eq!(next.get(&name), w.get(&name), "{name}");
        }
        assert_ne!(next.get("decoder.conv9.weight"), w.get("decoder.conv9.weight"));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = pairs(2, 32, 4);
        let run = || {
            let w = StyleNetWeights::init(ArchProfile::tiny(), 9).unwrap();
            let mut t = Trainer::new(w, LossWeights::default(), &data).unwrap();
            let losses: Vec<f64> = (1..=15)
                .map(|s| t.step(None, cosine_lr(2e-3, s, 15, 0.1)).unwrap().total)
                .collect();
            (losses, t.into_weights())
        };
        let (a, wa) = run();
        let (b, wb) = run();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert!(a[14] < a[0], "{a:?}");
    }

    #[test]
    fn identity_gradient_matches_finite_difference() {
        let data = batch_tensors(&pairs(1, 16, 5)).unwrap();
        let w = StyleNetWeights::init(ArchProfile::tiny(), 2).unwrap();
        let lw = LossWeights {
            content: 0.0,
            style: 0.0,
            identity1: 1.0,
            identity2: 0.0,
        };
        let (_, grads) = loss_and_gradients(&data, &w, &lw).unwrap();
        let total = |w: &StyleNetWeights| evaluate_batch(&data, w, &lw).unwrap().total;
        for (name, idx) in [
            ("decoder.conv9.bias", 1),
            ("decoder.conv4.weight", 17),
            ("transform.merge.weight", 5),
        ] {
            let h = 1e-4;
            let mut plus = w.clone();
            plus.get_mut(name).unwrap().data_mut()[idx] += h;
            let mut minus = w.clone();
            minus.get_mut(name).unwrap().data_mut()[idx] -= h;
            let numeric = (total(&plus) - total(&minus)) / (2.0 * h);
            let analytic = grads[name].data()[idx];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-4, "{name}[{idx}]: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1.0, 1, 200, 0.1), 1.0);
        assert!((cosine_lr(1.0, 200, 200, 0.1) - 0.1).abs() < 1e-12);
        assert!(cosine_lr(1.0, 100, 200, 0.1) < 1.0);
        assert_eq!(cosine_lr(0.5, 1, 1, 0.1), 0.5);
    }

    #[test]
    fn bad_batches_are_rejected() {
        let w = StyleNetWeights::init(ArchProfile::tiny(), 1).unwrap();
        assert!(train_step(&[], &w, &mut Adam::default(), &LossWeights::default(), 1e-3).is_err());
        let odd = vec![(Image::black(24, 24), Image::black(32, 32))];
        assert!(matches!(
            train_step(&odd, &w, &mut Adam::default(), &LossWeights::default(), 1e-3),
            Err(Error::Contract(_))
        ));
    }
}
