//! Nested U-Net inference with shared atrous convolutions, plus the
//! CE+dice loss and IoU used for model selection.

mod layers;
mod loss;
mod net;
mod tensor;
mod weights;

pub use layers::{batch_norm, pointwise_conv, res_block, shared_atrous_conv, BatchNorm, ConvKernel, Pointwise, ResBlock};
pub use loss::{ce_dice_loss, dice_grad, dice_term, iou, PROB_CLAMP};
pub use net::{mask_to_seg, Network, NetworkConfig};
pub use tensor::Tensor;
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, LayerKind, LayerRecord, NetworkWeights};

use thiserror::Error;

use crate::error::{FormatError, PathIoError};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model error at layer {layer}: {reason}")]
    Model { layer: String, reason: String },
    #[error("network config: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] PathIoError),
}
