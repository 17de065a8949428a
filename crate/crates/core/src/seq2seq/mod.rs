//! Sequence-to-sequence generation: model, training loop, decoding
//! strategies, and model bundles on disk.

pub mod bundle;
pub mod decode;
pub mod model;
pub mod train;

pub use bundle::{load_bundle, save_bundle};

pub use decode::{
    ancestral_sample, beam, greedy, noise_inject_sample, sample_batch_topk, DecodedSample,
    NoiseSpec, SampleBatchConfig,
};
pub use model::{
    build_example_loss, BoundModel, DecoderState, EncoderStates, ModelConfig, Seq2SeqModel, LAYERS,
    STREAM_PARAM_INIT,
};
pub use train::{
    train, EpochLog, SelectionMetric, TrainConfig, TrainLog, STREAM_DROPOUT, STREAM_SHUFFLE,
};
