//! The edit classifier and its training loop.

pub mod network;
pub mod state;
pub mod training;

pub use network::{
    argmax, classify_logits, edge_attention, edge_inputs, embed, encode, forward, gather_edge_features,
    positional_encoding, ClassifierKind, EdgeFeatures, EdgeInputs, Forward, Mode, Model, ModelConfig, ModelParams,
    CLASSES,
};
pub use state::{sidecar_path, ModelState};
pub use training::{
    encode_example, evaluate, inverse_class_weights, predict_labels, split_dev, train, EncodedExample, EpochLog,
    Evaluation, LossConfig, TrainConfig, TrainReport, WeightMode,
};
