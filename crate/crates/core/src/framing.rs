//! Window segmentation.
//!
//! Two regimes are used throughout the crate: non-overlapping 1 s windows for
//! material classification and 0.2 s frames advanced by 0.04 s (80% overlap)
//! for the streaming featurizer. Second-valued settings are converted to
//! sample counts once, with `round(x * fs)`, and everything after that is
//! integer arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;

#[derive(Debug, Error, PartialEq)]
pub enum FramingError {
    #[error("invalid framing config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramingConfig {
    pub window_len_s: f64,
    pub hop_s: f64,
}

impl FramingConfig {
    /// 1 s windows without overlap.
    pub const CLASSIFICATION: Self = Self { window_len_s: 1.0, hop_s: 1.0 };
    /// 0.2 s frames, a new one every 0.04 s.
    pub const STREAMING: Self = Self { window_len_s: 0.2, hop_s: 0.04 };

    pub fn new(window_len_s: f64, hop_s: f64) -> Result<Self, FramingError> {
        let cfg = Self { window_len_s, hop_s };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FramingError> {
        if !(self.window_len_s > 0.0 && self.window_len_s.is_finite()) {
            return Err(FramingError::InvalidConfig(format!(
                "window length must be positive, got {}",
                self.window_len_s
            )));
        }
        if !(self.hop_s > 0.0 && self.hop_s.is_finite()) {
            return Err(FramingError::InvalidConfig(format!("hop must be positive, got {}", self.hop_s)));
        }
        if self.hop_s > self.window_len_s {
            return Err(FramingError::InvalidConfig(format!(
                "hop {} s exceeds window length {} s",
                self.hop_s, self.window_len_s
            )));
        }
        Ok(())
    }

    /// Fraction of each window shared with its successor.
    pub fn overlap_fraction(&self) -> f64 {
        1.0 - self.hop_s / self.window_len_s
    }

    /// Window and hop in samples at `fs`.
    pub fn in_samples(&self, fs: u32) -> Result<SampleFraming, FramingError> {
        self.validate()?;
        let window = (self.window_len_s * f64::from(fs)).round() as usize;
        let hop = (self.hop_s * f64::from(fs)).round() as usize;
        if window == 0 || hop == 0 {
            return Err(FramingError::InvalidConfig(format!(
                "window {} s / hop {} s round to zero samples at {fs} Hz",
                self.window_len_s, self.hop_s
            )));
        }
        Ok(SampleFraming { window, hop: hop.min(window) })
    }
}

/// Framing expressed in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleFraming {
    pub window: usize,
    pub hop: usize,
}

impl SampleFraming {
    pub fn count(&self, n_samples: usize) -> usize {
        window_count(n_samples, self.window, self.hop)
    }
}

/// `floor((len - W) / H) + 1`, or zero when the input is shorter than a window.
pub fn window_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window {
        0
    } else {
        (n_samples - window) / hop + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub start_sample: usize,
    pub samples: &'a [f32],
}

/// Splits a clip into equal-length windows; a trailing remainder shorter than
/// one window is discarded.
pub fn segment<'a>(clip: &'a AudioClip, cfg: &FramingConfig) -> Result<Vec<Window<'a>>, FramingError> {
    let SampleFraming { window, hop } = cfg.in_samples(clip.sample_rate_hz)?;
    Ok((0..window_count(clip.samples.len(), window, hop))
        .map(|k| {
            let start = k * hop;
            Window { start_sample: start, samples: &clip.samples[start..start + window] }
        })
        .collect())
}
