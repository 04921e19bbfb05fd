//! Log-power Mel spectrograms.
//!
//! The pipeline for one window is
//!
//! 1. short-time power spectrum `|FFT(w ⊙ x)|²` over non-negative bins,
//! 2. optional high-frequency emphasis: bins whose center frequency lies above
//!    `nyquist_fraction × fs/2` are multiplied by `gain²` (the gain applies to
//!    magnitude),
//! 3. projection onto a triangular Mel filterbank (HTK mel scale),
//! 4. `ln(max(·, eps_floor))`.
//!
//! No per-window normalization is applied; the network's batch norm handles
//! scale.

use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("negative frequency {0} Hz")]
    NegativeFrequency(f64),
    #[error("invalid band: f_min {f_min} Hz, f_max {f_max} Hz, fs/2 {nyquist} Hz")]
    InvalidBand { f_min: f64, f_max: f64, nyquist: f64 },
    #[error("too many bands: {0}")]
    TooManyBands(String),
    #[error("window of {len} samples is shorter than n_fft = {n_fft}")]
    WindowTooShort { len: usize, n_fft: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// Power floor applied before the log.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-10;

/// HTK mel scale: `2595 · log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if f < 0.0 || f.is_nan() {
        return Err(FeatureError::NegativeFrequency(f));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    Hann,
    Rectangular,
}

impl WindowFn {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowFn::Rectangular => vec![1.0; n],
            WindowFn::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            WindowFn::Hann => "hann",
            WindowFn::Rectangular => "rectangular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop_length: usize,
    pub window_fn: WindowFn,
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || !self.n_fft.is_power_of_two() {
            return Err(FeatureError::InvalidConfig(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop_length == 0 || self.hop_length > self.n_fft {
            return Err(FeatureError::InvalidConfig(format!(
                "hop_length {} must be in 1..={}",
                self.hop_length, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        crate::framing::window_count(len, self.n_fft, self.hop_length)
    }
}

/// Triangular filters equally spaced on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_bins: usize,
    /// Row-major `n_mels × n_bins`.
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Hz positions of the `n_mels + 2` band edges.
    pub fn edges_hz(&self) -> Vec<f64> {
        mel_edges_hz(self.n_mels, self.f_min_hz, self.f_max_hz)
    }
}

fn mel_edges_hz(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let lo = 2595.0 * (1.0 + f_min / 700.0).log10();
    let hi = 2595.0 * (1.0 + f_max / 700.0).log10();
    let step = (hi - lo) / (n_mels + 1) as f64;
    let mut edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(lo + step * i as f64)).collect();
    // Pin the outer edges so round-off never lets a band leak past them.
    edges[0] = f_min;
    edges[n_mels + 1] = f_max;
    edges
}

pub fn build_mel_filterbank(fs: u32, stft: &StftConfig, n_mels: usize, f_min: f64, f_max: f64) -> Result<MelFilterbank> {
    stft.validate()?;
    let nyquist = f64::from(fs) / 2.0;
    if f_min.is_nan() || f_max.is_nan() || f_min < 0.0 || f_min >= f_max || f_max > nyquist {
        return Err(FeatureError::InvalidBand { f_min, f_max, nyquist });
    }
    let n_bins = stft.n_bins();
    if n_mels == 0 || n_bins < n_mels + 2 {
        return Err(FeatureError::TooManyBands(format!(
            "{n_mels} bands need at least {} FFT bins, have {n_bins}",
            n_mels + 2
        )));
    }
    let edges = mel_edges_hz(n_mels, f_min, f_max);
    let bin_hz = f64::from(fs) / stft.n_fft as f64;
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(FeatureError::TooManyBands(format!(
                "band {m} ({left:.1}-{right:.1} Hz) contains no FFT bin at n_fft = {}",
                stft.n_fft
            )));
        }
    }
    Ok(MelFilterbank { n_mels, f_min_hz: f_min, f_max_hz: f_max, n_bins, weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmphasisConfig {
    pub nyquist_fraction: f64,
    pub gain: f64,
    pub enabled: bool,
}

impl EmphasisConfig {
    /// Doubles the magnitude above 0.3× Nyquist.
    pub const IMPACT: Self = Self { nyquist_fraction: 0.3, gain: 2.0, enabled: true };
    pub const OFF: Self = Self { nyquist_fraction: 0.3, gain: 2.0, enabled: false };

    pub fn validate(&self) -> Result<()> {
        if !(self.nyquist_fraction > 0.0 && self.nyquist_fraction <= 1.0) {
            return Err(FeatureError::InvalidConfig(format!(
                "nyquist_fraction {} outside (0, 1]",
                self.nyquist_fraction
            )));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(FeatureError::InvalidConfig(format!("gain {} must be positive", self.gain)));
        }
        Ok(())
    }

    pub fn cutoff_hz(&self, fs: u32) -> f64 {
        self.nyquist_fraction * f64::from(fs) / 2.0
    }

    /// Multipliers applied to each power bin.
    pub fn power_scale(&self, fs: u32, n_fft: usize) -> Vec<f64> {
        let n_bins = n_fft / 2 + 1;
        if !self.enabled {
            return vec![1.0; n_bins];
        }
        let cutoff = self.cutoff_hz(fs);
        let bin_hz = f64::from(fs) / n_fft as f64;
        let boosted = self.gain * self.gain;
        (0..n_bins).map(|k| if k as f64 * bin_hz > cutoff { boosted } else { 1.0 }).collect()
    }
}

/// Power spectrogram, row-major `n_bins × n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub n_bins: usize,
    pub n_frames: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.n_frames + frame]
    }
}

/// Log-power Mel spectrogram, row-major `n_mels × n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub n_frames: usize,
    pub data: Vec<f64>,
    pub config_digest: String,
}

impl MelSpectrogram {
    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.data[mel * self.n_frames + frame]
    }

    /// Mean over the time axis, one value per band.
    pub fn time_average(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.n_frames)
            .map(|row| row.iter().sum::<f64>() / self.n_frames as f64)
            .collect()
    }
}

fn planned_fft(n_fft: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n_fft)
}

fn stft_power_with(samples: &[f32], cfg: &StftConfig, fft: &dyn Fft<f64>, window: &[f64]) -> Result<PowerSpectrogram> {
    if samples.len() < cfg.n_fft {
        return Err(FeatureError::WindowTooShort { len: samples.len(), n_fft: cfg.n_fft });
    }
    let n_bins = cfg.n_bins();
    let n_frames = cfg.n_frames(samples.len());
    let mut data = vec![0.0; n_bins * n_frames];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        let frame = &samples[t * cfg.hop_length..t * cfg.hop_length + cfg.n_fft];
        for ((c, &x), &w) in buf.iter_mut().zip(frame).zip(window) {
            *c = Complex::new(f64::from(x) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf[..n_bins].iter().enumerate() {
            data[k * n_frames + t] = c.norm_sqr();
        }
    }
    Ok(PowerSpectrogram { n_bins, n_frames, data })
}

/// `|FFT(window_fn ⊙ frame)|²` for every hop-spaced frame of `samples`.
pub fn stft_power(samples: &[f32], cfg: &StftConfig) -> Result<PowerSpectrogram> {
    cfg.validate()?;
    let fft = planned_fft(cfg.n_fft);
    stft_power_with(samples, cfg, fft.as_ref(), &cfg.window_fn.coefficients(cfg.n_fft))
}

fn mel_project(power: &PowerSpectrogram, bank: &MelFilterbank, scale: &[f64], eps_floor: f64, digest: String) -> MelSpectrogram {
    let n_frames = power.n_frames;
    let mut data = vec![0.0; bank.n_mels * n_frames];
    for m in 0..bank.n_mels {
        let out = &mut data[m * n_frames..(m + 1) * n_frames];
        for (k, (&w, &s)) in bank.row(m).iter().zip(scale).enumerate() {
            if w == 0.0 {
                continue;
            }
            let ws = w * s;
            let row = &power.data[k * n_frames..(k + 1) * n_frames];
            for (o, &p) in out.iter_mut().zip(row) {
                *o += ws * p;
            }
        }
        for o in out.iter_mut() {
            *o = o.max(eps_floor).ln();
        }
    }
    MelSpectrogram { n_mels: bank.n_mels, n_frames, data, config_digest: digest }
}

/// Stand-alone form of the featurization step; see [`Featurizer`] for the
/// reusable, pre-planned version.
pub fn mel_spectrogram(
    samples: &[f32],
    fs: u32,
    stft: &StftConfig,
    bank: &MelFilterbank,
    emphasis: &EmphasisConfig,
    eps_floor: f64,
) -> Result<MelSpectrogram> {
    emphasis.validate()?;
    if bank.n_bins != stft.n_bins() {
        return Err(FeatureError::InvalidConfig(format!(
            "filterbank has {} bins, STFT produces {}",
            bank.n_bins,
            stft.n_bins()
        )));
    }
    let power = stft_power(samples, stft)?;
    let digest = spectrogram_digest(fs, stft, bank.n_mels, bank.f_min_hz, bank.f_max_hz, emphasis, eps_floor);
    Ok(mel_project(&power, bank, &emphasis.power_scale(fs, stft.n_fft), eps_floor, digest))
}

fn spectrogram_digest(
    fs: u32,
    stft: &StftConfig,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    emphasis: &EmphasisConfig,
    eps_floor: f64,
) -> String {
    let emph = if emphasis.enabled {
        format!("on:{:?}:{:?}", emphasis.nyquist_fraction, emphasis.gain)
    } else {
        "off".to_string()
    };
    let canonical = format!(
        "fs={fs};n_fft={};hop={};window={};n_mels={n_mels};f_min={f_min:?};f_max={f_max:?};emphasis={emph};eps={eps_floor:?}",
        stft.n_fft,
        stft.hop_length,
        stft.window_fn.name(),
    );
    let hash = Sha256::digest(canonical.as_bytes());
    hash[..8].iter().fold(String::with_capacity(16), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Every setting that determines a window's spectrogram, independent of the
/// sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub f_min_hz: f64,
    /// `None` means `fs / 2`.
    pub f_max_hz: Option<f64>,
    pub emphasis: EmphasisConfig,
    pub eps_floor: f64,
}

impl FeatureConfig {
    /// 64 bands over a 2048-point Hann STFT, no emphasis.
    pub fn classification() -> Self {
        Self {
            stft: StftConfig { n_fft: 2048, hop_length: 512, window_fn: WindowFn::Hann },
            n_mels: 64,
            f_min_hz: 20.0,
            f_max_hz: None,
            emphasis: EmphasisConfig::OFF,
            eps_floor: DEFAULT_EPS_FLOOR,
        }
    }

    /// 32 bands over a 1024-point Hann STFT with impact emphasis.
    pub fn streaming() -> Self {
        Self {
            stft: StftConfig { n_fft: 1024, hop_length: 480, window_fn: WindowFn::Hann },
            n_mels: 32,
            f_min_hz: 20.0,
            f_max_hz: None,
            emphasis: EmphasisConfig::IMPACT,
            eps_floor: DEFAULT_EPS_FLOOR,
        }
    }

    pub fn f_max_at(&self, fs: u32) -> f64 {
        self.f_max_hz.unwrap_or(f64::from(fs) / 2.0)
    }

    pub fn digest(&self, fs: u32) -> String {
        spectrogram_digest(fs, &self.stft, self.n_mels, self.f_min_hz, self.f_max_at(fs), &self.emphasis, self.eps_floor)
    }
}

/// A featurization pipeline bound to one sample rate, with the filterbank,
/// FFT plan and analysis window precomputed. Shareable across threads.
#[derive(Clone)]
pub struct Featurizer {
    config: FeatureConfig,
    fs: u32,
    bank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    scale: Vec<f64>,
    digest: String,
}

impl std::fmt::Debug for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Featurizer")
            .field("config", &self.config)
            .field("fs", &self.fs)
            .field("digest", &self.digest)
            .finish_non_exhaustive()
    }
}

impl Featurizer {
    pub fn new(config: FeatureConfig, fs: u32) -> Result<Self> {
        config.stft.validate()?;
        config.emphasis.validate()?;
        if !(config.eps_floor > 0.0) {
            return Err(FeatureError::InvalidConfig(format!("eps_floor {} must be positive", config.eps_floor)));
        }
        let bank = build_mel_filterbank(fs, &config.stft, config.n_mels, config.f_min_hz, config.f_max_at(fs))?;
        Ok(Self {
            fs,
            fft: planned_fft(config.stft.n_fft),
            window: config.stft.window_fn.coefficients(config.stft.n_fft),
            scale: config.emphasis.power_scale(fs, config.stft.n_fft),
            digest: config.digest(fs),
            bank,
            config,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.fs
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Number of STFT frames produced for a window of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        self.config.stft.n_frames(len)
    }

    pub fn featurize(&self, samples: &[f32]) -> Result<MelSpectrogram> {
        let power = stft_power_with(samples, &self.config.stft, self.fft.as_ref(), &self.window)?;
        Ok(mel_project(&power, &self.bank, &self.scale, self.config.eps_floor, self.digest.clone()))
    }
}

/// Magic prefix of one record in a feature dump.
pub const MELF_MAGIC: &[u8; 4] = b"MELF";

/// Appends one window to a feature dump: `"MELF"`, `u32 n_mels`,
/// `u32 n_frames`, `f64 eps_floor`, then `n_mels × n_frames` row-major `f32`,
/// all little-endian.
pub fn write_melf_record<W: Write>(w: &mut W, spec: &MelSpectrogram, eps_floor: f64) -> io::Result<()> {
    let mut buf = Vec::with_capacity(20 + 4 * spec.data.len());
    buf.extend_from_slice(MELF_MAGIC);
    buf.extend_from_slice(&(spec.n_mels as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.n_frames as u32).to_le_bytes());
    buf.extend_from_slice(&eps_floor.to_le_bytes());
    for &v in &spec.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

/// One decoded feature-dump record.
#[derive(Debug, Clone, PartialEq)]
pub struct MelfRecord {
    pub n_mels: usize,
    pub n_frames: usize,
    pub eps_floor: f64,
    pub data: Vec<f32>,
}

/// Reads the next record, or `None` at a clean end of input.
pub fn read_melf_record<R: Read>(r: &mut R) -> io::Result<Option<MelfRecord>> {
    let mut head = [0u8; 20];
    let mut filled = 0;
    while filled < head.len() {
        match r.read(&mut head[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated MELF header")),
            n => filled += n,
        }
    }
    if &head[0..4] != MELF_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad MELF magic"));
    }
    let n_mels = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let n_frames = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let eps_floor = f64::from_le_bytes(head[12..20].try_into().unwrap());
    let mut payload = vec![0u8; 4 * n_mels * n_frames];
    r.read_exact(&mut payload)?;
    let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Some(MelfRecord { n_mels, n_frames, eps_floor, data }))
}
