//! Frame-level neural audio quality assessment.
//!
//! A BLSTM reads a magnitude spectrogram, optional width-3 convolution and
//! frame-to-frame attention layers refine the hidden sequence, and a dense
//! head regresses one quality score per frame. The utterance score is the
//! mean of the frame scores. Around the model sit SNR-controlled corpus
//! construction, RMSprop training, correlation/F1 evaluation and frame-score
//! based anomaly localization.

pub mod config;
pub mod corpus;
pub mod error;
pub mod localize;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod signal;
pub mod tensor;
pub mod train;
pub mod util;
pub mod wav;

pub use error::{Error, Result};
