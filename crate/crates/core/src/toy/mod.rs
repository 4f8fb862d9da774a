//! Desk-scale flow-matching: a small MLP velocity field trained on 2-D toy
//! targets with the regression loss `|| v(x_t, t, c) - (x1 - x0) ||^2`,
//! where `x_t = t x1 + (1 - t) x0`, `x0 ~ N(0, I)` and `t ~ U[0, 1]`.
//! Pairs are drawn with independent coupling.

mod data;
mod mlp;
mod train;
mod weights;

pub use data::{sample_pair, standard_normal as sample_standard_normal, Dataset};
pub use mlp::{fm_loss, fm_loss_and_gradient, Activation, MlpField};
pub use train::{train, TrainingConfig, TrainingTrace};
pub use weights::{WEIGHTS_MAGIC, WEIGHTS_VERSION};
