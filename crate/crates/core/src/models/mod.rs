//! Linear toy forecasters covering the three loss families: point (MSE/MAE),
//! Gaussian NLL and token cross-entropy.

mod forecaster;
mod loss;
mod tokenizer;
mod train;

pub use forecaster::{Gradients, LinearForecaster, LossKind, LOG_STD_LIMIT};
pub use loss::{loss_gaussian_nll, loss_mae, loss_mse, loss_token_ce, GaussianLoss, PointLoss, TokenLoss};
pub use tokenizer::{detokenize, tokenize, TokenizerSpec};
pub use train::{batch_gradient, clipped_magnitude, train, BatchGradient, TrainConfig, TrainStep, TrainTrace};
