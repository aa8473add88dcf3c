//! Neural model: autodiff tape, encoder blocks, grammar-constrained decoder,
//! optimizer, checkpoints and teacher-forced training.

pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoders;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod train;

pub use config::{BlockCounts, ConfigError, ModelConfig};
pub use params::{Init, Mat, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use decoder::{Generation, GenerationLimits, RulePrediction};
pub use model::{Ablation, Model, ModelDims, ModelError, ModelInput, PreparedSample};
pub use optim::Adafactor;
pub use train::{TrainConfig, TrainLog};
