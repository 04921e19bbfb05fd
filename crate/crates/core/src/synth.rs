//! Procedural contact sounds: modal synthesis for impacts, filtered noise for
//! sliding, a −60 dBFS floor for "no contact".
//!
//! Nine material profiles split into a rigid family (high, slowly decaying
//! modes) and a soft family (low, heavily damped modes buried in noise).
//! Classes are materials; the interaction kind is within-class variation.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{write_wav, AudioClip, AudioError};
use crate::classify::BLANK_CLASS;

/// Standard deviation of the noise floor, −60 dBFS.
pub const NOISE_FLOOR: f64 = 1e-3;
pub const PEAK_LIMIT: f64 = 0.99;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("clip duration {0} s is shorter than 0.25 s")]
    InvalidDuration(f64),
    #[error("sample rate {0} Hz is below 8000 Hz")]
    InvalidSampleRate(u32),
    #[error("invalid profile {name:?}: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialProfile {
    pub name: String,
    /// 2–5 strictly increasing mode frequencies.
    pub modal_freqs_hz: Vec<f64>,
    /// Exponential decay rate of each mode.
    pub decay_rates_per_s: Vec<f64>,
    /// Pass band of the friction noise.
    pub noise_band_hz: (f64, f64),
    /// Amplitude ratio between successive modes, in [0, 1].
    pub brightness: f64,
}

impl MaterialProfile {
    fn new(name: &str, freqs: &[f64], decays: &[f64], band: (f64, f64), brightness: f64) -> Self {
        Self {
            name: name.into(),
            modal_freqs_hz: freqs.to_vec(),
            decay_rates_per_s: decays.to_vec(),
            noise_band_hz: band,
            brightness,
        }
    }

    pub fn validate(&self, fs: u32) -> Result<()> {
        let bad = |reason: String| Err(SynthError::InvalidProfile { name: self.name.clone(), reason });
        let nyquist = f64::from(fs) / 2.0;
        let n = self.modal_freqs_hz.len();
        if !(2..=5).contains(&n) {
            return bad(format!("{n} modes, expected 2 to 5"));
        }
        if self.decay_rates_per_s.len() != n {
            return bad(format!("{n} modes but {} decay rates", self.decay_rates_per_s.len()));
        }
        if self.modal_freqs_hz[0] <= 0.0 || self.modal_freqs_hz.windows(2).any(|w| w[1] <= w[0]) {
            return bad("mode frequencies must be positive and strictly increasing".into());
        }
        if self.modal_freqs_hz[n - 1] >= nyquist {
            return bad(format!("mode at {} Hz is not below Nyquist ({nyquist} Hz)", self.modal_freqs_hz[n - 1]));
        }
        if self.decay_rates_per_s.iter().any(|&d| !(d > 0.0)) {
            return bad("decay rates must be positive".into());
        }
        let (lo, hi) = self.noise_band_hz;
        if !(lo > 0.0 && lo < hi && hi < nyquist) {
            return bad(format!("noise band ({lo}, {hi}) must satisfy 0 < low < high < {nyquist}"));
        }
        if !(0.0..=1.0).contains(&self.brightness) {
            return bad(format!("brightness {} outside [0, 1]", self.brightness));
        }
        Ok(())
    }
}

/// The default nine materials.
pub fn default_profiles() -> Vec<MaterialProfile> {
    vec![
        MaterialProfile::new("ceramic_mug", &[1150.0, 1450.0, 3300.0, 3700.0], &[14.0, 18.0, 28.0, 36.0], (2000.0, 5000.0), 0.7),
        MaterialProfile::new("glass_cup", &[2300.0, 6100.0, 11800.0], &[7.0, 11.0, 16.0], (4000.0, 5000.0), 0.85),
        MaterialProfile::new("human_skin", &[130.0, 370.0], &[90.0, 140.0], (150.0, 600.0), 0.1),
        MaterialProfile::new("leather_case", &[240.0, 810.0, 1900.0], &[25.0, 50.0, 80.0], (700.0, 1000.0), 0.25),
        MaterialProfile::new("notebook", &[310.0, 1150.0, 2600.0], &[20.0, 45.0, 80.0], (1000.0, 8000.0), 0.2),
        MaterialProfile::new("plastic_lid", &[520.0, 1380.0, 3100.0], &[25.0, 35.0, 50.0], (900.0, 3500.0), 0.5),
        MaterialProfile::new("plush_toy", &[80.0, 210.0], &[200.0, 260.0], (60.0, 900.0), 0.05),
        MaterialProfile::new("steel_tumbler", &[620.0, 2450.0, 5800.0, 9900.0, 15200.0], &[2.0, 3.0, 5.0, 8.0, 12.0], (3000.0, 15000.0), 0.9),
        MaterialProfile::new("wooden_table", &[180.0, 430.0, 910.0], &[40.0, 55.0, 70.0], (250.0, 1200.0), 0.3),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Tap,
    Knock,
    Slow,
    Drag,
    Blank,
}

impl InteractionKind {
    pub const CONTACT: [Self; 4] = [Self::Tap, Self::Knock, Self::Slow, Self::Drag];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tap => "tap",
            Self::Knock => "knock",
            Self::Slow => "slow",
            Self::Drag => "drag",
            Self::Blank => "blank",
        }
    }
}

/// Per-clip random perturbation ranges (±).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    /// Relative mode-frequency spread.
    pub freq_frac: f64,
    /// Relative amplitude spread.
    pub amp_frac: f64,
    /// Onset spread in seconds.
    pub onset_s: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self { freq_frac: 0.10, amp_frac: 0.20, onset_s: 0.030 }
    }
}

impl Jitter {
    pub const NONE: Self = Self { freq_frac: 0.0, amp_frac: 0.0, onset_s: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub fs: u32,
    pub clip_duration_s: f64,
    pub clips_per_cell: usize,
    pub blank_clips: usize,
    pub master_seed: u64,
    pub interactions: Vec<InteractionKind>,
    #[serde(default)]
    pub jitter: Jitter,
    pub profiles: Vec<MaterialProfile>,
}

impl Default for CorpusSpec {
    /// Nine materials × four interactions × 20 one-second clips, plus 80
    /// blank clips: 80 windows per class at 48 kHz.
    fn default() -> Self {
        Self {
            fs: 48_000,
            clip_duration_s: 1.0,
            clips_per_cell: 20,
            blank_clips: 80,
            master_seed: 20_240_917,
            interactions: InteractionKind::CONTACT.to_vec(),
            jitter: Jitter::default(),
            profiles: default_profiles(),
        }
    }
}

impl CorpusSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data")
    }

    pub fn validate(&self) -> Result<()> {
        check_clip_params(self.clip_duration_s, self.fs)?;
        if self.profiles.is_empty() {
            return Err(SynthError::InvalidSpec("no profiles".into()));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            p.validate(self.fs)?;
            if p.name == BLANK_CLASS || self.profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(SynthError::InvalidSpec(format!("profile name {:?} is reserved or duplicated", p.name)));
            }
            if p.name.is_empty() || p.name.contains(['/', '\\', ',']) {
                return Err(SynthError::InvalidSpec(format!("profile name {:?} is not a usable directory name", p.name)));
            }
        }
        if self.interactions.is_empty() || self.interactions.contains(&InteractionKind::Blank) {
            return Err(SynthError::InvalidSpec("interactions must be a non-empty list of contact kinds".into()));
        }
        let j = self.jitter;
        if !(0.0..0.5).contains(&j.freq_frac) || !(0.0..1.0).contains(&j.amp_frac) || !(0.0..=0.1).contains(&j.onset_s) {
            return Err(SynthError::InvalidSpec(format!("jitter out of range: {j:?}")));
        }
        Ok(())
    }

    pub fn n_clips(&self) -> usize {
        self.profiles.len() * self.interactions.len() * self.clips_per_cell + self.blank_clips
    }
}

fn check_clip_params(duration_s: f64, fs: u32) -> Result<()> {
    if !(duration_s >= 0.25 && duration_s.is_finite()) {
        return Err(SynthError::InvalidDuration(duration_s));
    }
    if fs < 8000 {
        return Err(SynthError::InvalidSampleRate(fs));
    }
    Ok(())
}

/// Stable 64-bit FNV-1a over the clip's identity.
pub fn clip_seed(master_seed: u64, class: &str, index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = master_seed.to_le_bytes().into_iter().chain(class.bytes()).chain([0xff]).chain((index as u64).to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// RBJ band-pass biquad (constant 0 dB peak gain).
struct BandPass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BandPass {
    fn new(lo: f64, hi: f64, fs: f64) -> Self {
        let center = (lo * hi).sqrt();
        let q = center / (hi - lo);
        let w0 = 2.0 * PI * center / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b0: alpha / a0, b2: -alpha / a0, a1: -2.0 * w0.cos() / a0, a2: (1.0 - alpha) / a0, x1: 0.0, x2: 0.0, y1: 0.0, y2: 0.0 }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn symmetric(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    if spread == 0.0 {
        0.0
    } else {
        rng.gen_range(-spread..=spread)
    }
}

/// Band-limited noise normalized to unit RMS.
fn band_noise(rng: &mut ChaCha8Rng, band: (f64, f64), fs: f64, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut filter = BandPass::new(band.0, band.1, fs);
    let mut out: Vec<f64> = (0..n).map(|_| filter.process(normal.sample(rng))).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Adds decaying sinusoids starting at `onset` to `out`.
#[allow(clippy::too_many_arguments)]
fn add_modes(out: &mut [f64], rng: &mut ChaCha8Rng, p: &MaterialProfile, fs: f64, onset: usize, amp: f64, damping: f64, freq_scale: f64) {
    let nyquist_guard = 0.45 * fs;
    let mut weight = 1.0;
    let mut norm = 0.0;
    let modes: Vec<(f64, f64, f64, f64)> = p
        .modal_freqs_hz
        .iter()
        .zip(&p.decay_rates_per_s)
        .map(|(&f, &d)| {
            let m = (f * freq_scale, d * damping, weight, rng.gen_range(0.0..2.0 * PI));
            norm += weight;
            weight *= p.brightness.max(0.05);
            m
        })
        .filter(|m| m.0 < nyquist_guard)
        .collect();
    for (i, v) in out[onset..].iter_mut().enumerate() {
        let t = i as f64 / fs;
        let s: f64 = modes.iter().map(|&(f, d, w, ph)| w * (2.0 * PI * f * t + ph).sin() * (-d * t).exp()).sum();
        *v += amp * s / norm;
    }
}

/// An impact: ringing modes plus a decaying noise burst. Dull (low
/// brightness) materials put most of the energy in the burst.
#[allow(clippy::too_many_arguments)]
fn add_impact(out: &mut [f64], rng: &mut ChaCha8Rng, p: &MaterialProfile, fs: f64, onset: usize, amp: f64, damping: f64, freq_scale: f64) {
    add_modes(out, rng, p, fs, onset, amp * (0.2 + 0.8 * p.brightness), damping, freq_scale);
    let decay = p.decay_rates_per_s[0] * damping;
    let len = ((7.0 / decay * fs) as usize).min(out.len() - onset);
    if len == 0 {
        return;
    }
    let burst = band_noise(rng, p.noise_band_hz, fs, len);
    let level = 0.5 * amp * (1.0 - p.brightness);
    for (i, v) in burst.iter().enumerate() {
        out[onset + i] += level * (-decay * i as f64 / fs).exp() * v;
    }
}

/// One clip of `kind` on `profile`, deterministic in `seed`.
pub fn synth_clip(profile: &MaterialProfile, kind: InteractionKind, duration_s: f64, fs: u32, seed: u64) -> Result<AudioClip> {
    synth_clip_with(profile, kind, duration_s, fs, seed, &Jitter::default())
}

pub fn synth_clip_with(profile: &MaterialProfile, kind: InteractionKind, duration_s: f64, fs: u32, seed: u64, jitter: &Jitter) -> Result<AudioClip> {
    check_clip_params(duration_s, fs)?;
    if kind != InteractionKind::Blank {
        profile.validate(fs)?;
    }
    let fs_f = f64::from(fs);
    let n = (duration_s * fs_f).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq_scale = 1.0 + symmetric(&mut rng, jitter.freq_frac);
    let amp_scale = 1.0 + symmetric(&mut rng, jitter.amp_frac);
    let onset_s = (0.1 + symmetric(&mut rng, jitter.onset_s)).max(0.0);
    let onset = ((onset_s * fs_f) as usize).min(n - 1);
    let mut out = vec![0.0f64; n];

    match kind {
        InteractionKind::Blank => {}
        InteractionKind::Tap => {
            add_impact(&mut out, &mut rng, profile, fs_f, onset, 0.15 * amp_scale, 3.0, freq_scale);
            // The finger's brief contact: a few milliseconds of band noise.
            let click_len = ((0.004 * fs_f) as usize).min(n - onset);
            let click = band_noise(&mut rng, profile.noise_band_hz, fs_f, click_len);
            for (i, c) in click.iter().enumerate() {
                let env = 1.0 - i as f64 / click_len as f64;
                out[onset + i] += 0.05 * amp_scale * env * c;
            }
        }
        InteractionKind::Knock => {
            add_impact(&mut out, &mut rng, profile, fs_f, onset, 0.6 * amp_scale, 1.0, freq_scale);
        }
        InteractionKind::Slow => {
            add_modes(&mut out, &mut rng, profile, fs_f, onset, 0.05 * amp_scale, 1.5, freq_scale);
            let noise = band_noise(&mut rng, profile.noise_band_hz, fs_f, n - onset);
            let ramp = 0.3 * fs_f;
            for (i, v) in noise.iter().enumerate() {
                let env = (i as f64 / ramp).min(1.0);
                out[onset + i] += 0.03 * amp_scale * env * v;
            }
        }
        InteractionKind::Drag => {
            let noise = band_noise(&mut rng, profile.noise_band_hz, fs_f, n - onset);
            let flutter_hz = rng.gen_range(3.0..8.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let attack = 0.02 * fs_f;
            for (i, v) in noise.iter().enumerate() {
                let t = i as f64 / fs_f;
                let env = (i as f64 / attack).min(1.0) * (1.0 + 0.5 * (2.0 * PI * flutter_hz * t + phase).sin());
                out[onset + i] += 0.12 * amp_scale * env * v;
            }
        }
    }

    let normal = Normal::new(0.0, NOISE_FLOOR).unwrap();
    out.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > PEAK_LIMIT { PEAK_LIMIT / peak } else { 1.0 };
    let samples = out.iter().map(|&v| (v * gain) as f32).collect();
    Ok(AudioClip::new(samples, fs)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the corpus root.
    pub path: String,
    pub class: String,
    pub interaction: String,
    pub seed: u64,
}

/// Writes `out_dir/<class>/<class>_<interaction>_<index>.wav` for every
/// cell and blank clip, plus `manifest.csv`.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let blank_profile = MaterialProfile::new(BLANK_CLASS, &[1.0, 2.0], &[1.0, 1.0], (1.0, 2.0), 0.0);
    let mut jobs: Vec<(&MaterialProfile, InteractionKind, usize)> = Vec::with_capacity(spec.n_clips());
    for p in &spec.profiles {
        for (k, &kind) in spec.interactions.iter().enumerate() {
            for i in 0..spec.clips_per_cell {
                jobs.push((p, kind, k * spec.clips_per_cell + i));
            }
        }
    }
    jobs.extend((0..spec.blank_clips).map(|i| (&blank_profile, InteractionKind::Blank, i)));

    let mut manifest = Vec::with_capacity(jobs.len());
    for (profile, kind, index) in jobs {
        let class = profile.name.as_str();
        let seed = clip_seed(spec.master_seed, class, index);
        let clip = synth_clip_with(profile, kind, spec.clip_duration_s, spec.fs, seed, &spec.jitter)?;
        let rel: PathBuf = [class, &format!("{class}_{}_{index:04}.wav", kind.name())].iter().collect();
        let path = out_dir.join(&rel);
        fs::create_dir_all(path.parent().unwrap())?;
        write_wav(&clip, &path)?;
        manifest.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            class: class.to_string(),
            interaction: kind.name().to_string(),
            seed,
        });
    }
    let mut writer = csv::Writer::from_path(out_dir.join("manifest.csv"))?;
    for entry in &manifest {
        writer.serialize(entry)?;
    }
    writer.flush()?;
    Ok(manifest)
}
