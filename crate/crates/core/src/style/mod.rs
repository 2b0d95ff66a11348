//! The style-attention transfer network: a frozen VGG-style encoder, two
//! soft-attention blocks (relu4_1 and relu5_1) that rearrange style features
//! according to the content features, a merge convolution and a decoder.

pub mod checkpoint;
pub mod convert;
mod loss;
mod network;
mod profile;
mod train;
mod weights;

pub use loss::{
    content_loss, content_loss_with_grad, identity_losses, identity_losses_from_outputs, style_loss,
    style_loss_with_grad, LossBreakdown, LossWeights,
};
pub use network::{
    attention_matrix, attention_rearrange, encode, encode_all, merge_and_decode, stylize, EncodedFeatures,
    FeatureMap, MIN_NETWORK_SIDE,
};
pub use profile::{ArchProfile, Layer};
pub use train::{
    batch_tensors, cosine_lr, evaluate_batch, evaluate_pair, loss_and_gradients, train_step, Adam, Trainer,
};
pub use weights::{AttentionBlockParams, Conv1x1, StyleNetWeights};
