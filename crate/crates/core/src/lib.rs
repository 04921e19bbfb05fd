//! Acoustic contact sensing: PCM ingestion, log-mel featurization, a compact
//! CNN material classifier with blank rejection, and a streaming featurizer.
//!
//! The guide in `book/` walks through each stage; its code blocks run as
//! doctests of this crate.

pub mod audio_io;
pub mod classify;
pub mod features;
pub mod framing;
pub mod nn;
pub mod stream;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/audio-and-framing.md")]
    mod audio_and_framing {}
    #[doc = include_str!("../../../book/src/log-mel-features.md")]
    mod log_mel_features {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/blank-rejection.md")]
    mod blank_rejection {}
    #[doc = include_str!("../../../book/src/streaming.md")]
    mod streaming {}
    #[doc = include_str!("../../../book/src/synthetic-corpora.md")]
    mod synthetic_corpora {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
