pub mod autodiff;
pub mod checkpoint;
pub mod datagen;
pub mod decoding;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod trainer;
pub mod vocab;

pub use autodiff::{sgd_step, GradStore, Graph, ParamId, ParamSet, Parameter, Var};
pub use error::{Error, Result};
pub use model::{Conditioning, Mode, ModelConfig, Seq2Seq};
pub use checkpoint::Checkpoint;
pub use decoding::{DecodeConfig, DecodeMode};
pub use tensor::Tensor;
pub use trainer::{TrainingConfig, TrainingLog};
pub use vocab::{TokenSequence, Vocabulary};
