//! Differentiable building blocks for the paper-scale networks: dense and
//! LSTM layers on a reverse-mode tape, Adam, soft target updates, finite-
//! difference verification, and a binary checkpoint container.

pub mod act;
pub mod adam;
pub mod checkpoint;
pub mod fd;
pub mod layers;
pub mod params;
pub mod tape;

pub use act::{sigmoid, softmax, ActKind};
pub use adam::{clip_global_norm, AdamState};
pub use checkpoint::{read_tensors, write_tensors};
pub use fd::{check_gradients, FdReport};
pub use layers::{dense, lstm_step, LstmIds, LstmState};
pub use params::{ParamId, ParamSet, Shape, Tensor};
pub use tape::{Backprop, Gradients, NodeId, Tape};
