//! Differentiable building blocks shared by every neural stage.

pub mod container;
pub mod embeddings;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod vocab;

pub use container::{Container, ContainerError};
pub use graph::{Graph, Tensor, Var};
pub use layers::{
    deep_biaffine, word_dropout_replace, BiLstm, Biaffine, CharLstm, DeepBiaffine, DropoutSpec, EmbeddingTable,
    HighwayBiLstm, Linear, Lstm, LstmState,
};
pub use optim::{
    batch_indices, run_annealed, run_schedule, Adam, AdamConfig, AnnealLog, AnnealSchedule, OptimizerSchedule, ScheduleEvent,
    ScheduleLog,
};
pub use params::{Init, ParamGrads, ParamId, ParamStore};
pub use vocab::Vocab;
