//! Copy-mechanism encoder-decoder: BiGRU encoder, attentional GRU decoder and
//! a generate/copy mixture over the grammar-masked output space.

pub mod gru;
pub mod network;
pub mod params;

pub use network::{
    attend, decode_greedy, decode_sample, encode, encode_rows, initial_decoder_state,
    loss_and_gradients, sequence_logprob, step_distribution, teacher_force, EncoderOutput,
    Episode, EpisodeEnd, Mode, Outcome, StepDistribution, DEFAULT_MAX_LEN,
};
pub use params::{Dims, GruParams, ModelParams, ParamsDecodeError, TENSOR_NAMES};

/// Initialization range of every parameter.
pub const INIT_SCALE: f64 = 0.08;
