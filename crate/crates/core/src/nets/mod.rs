//! Parameterized network blocks and the optimizer.

mod layers;
mod optim;
mod params;

pub use layers::{BiLstm, BiOutput, CellKind, Direction, Linear, LstmCell, Mlp, MlpSpec, RecurrentSpec, RnnCell};
pub use optim::{clip_global_norm, Adam, StepReport};
pub use params::{grad_check_params, Bound, ParamGradCheck, ParamSet};
