//! A small CPU neural-network engine: layers with analytic backward
//! passes, binary cross-entropy, RMSProp and Adam, and the text and image
//! CNNs built from them.

mod layers;
mod models;
mod network;
mod optim;
mod tensor;
mod train;

pub use layers::{Cache, Conv1d, Conv2d, Dense, Embedding, Layer, Mode, Param};
pub use models::{
    encode_text, image_tensor, train_image_cnn, train_text_cnn, ImageCnn, ImageCnnConfig,
    TextCnn, TextCnnConfig, ID_OFFSET, OOV_ID, PAD_ID,
};
pub use network::{bce_with_logits, sigmoid, Network, LOGIT_CLAMP};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::{Scalar, Tensor, MAX_RANK};
pub use train::{fit, predict_proba, EpochPolicy, FitConfig, History};
