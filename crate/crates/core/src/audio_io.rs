//! Mono PCM16 WAV ingestion and egress.
//!
//! Decoding divides by 32768 so that the int16 range maps onto `[-1, 1)`.
//! Encoding multiplies by 32768 and saturates, which makes
//! `write_wav(read_wav(f))` reproduce the original data chunk exactly while a
//! full-scale `1.0` still lands on `32767`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Canonical recording rate of the contact microphone.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 48_000;
pub const BITS_PER_SAMPLE: u16 = 16;

const PCM_DIVISOR: f32 = 32768.0;
const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("not a RIFF/WAVE file: {0}")]
    NotWav(String),
    #[error("unsupported encoding: format tag {format_tag}, {bits_per_sample} bits per sample (need PCM16)")]
    UnsupportedEncoding { format_tag: u16, bits_per_sample: u16 },
    #[error("expected mono audio, found {0} channels")]
    MultiChannel(u16),
    #[error("truncated data: header declares {declared} bytes, found {found}")]
    TruncatedData { declared: u64, found: u64 },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// Mono audio as normalized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_id: Option<String>,
}

impl AudioClip {
    /// Builds a clip, clamping samples into `[-1, 1]` and mapping NaN to 0.
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        let samples = samples
            .into_iter()
            .map(|s| if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) })
            .collect();
        Ok(Self { samples, sample_rate_hz, source_id: None })
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Header fields of a PCM16 mono WAV, positioned at the start of the data chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavHeader {
    pub sample_rate_hz: u32,
    /// Declared size of the data chunk in bytes.
    pub data_len: u32,
}

fn read_array<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => AudioError::NotWav(format!("unexpected end of file in {what}")),
        _ => AudioError::Io(e),
    })?;
    Ok(buf)
}

fn skip<R: Read>(r: &mut R, n: u64) -> Result<()> {
    let copied = io::copy(&mut r.by_ref().take(n), &mut io::sink())?;
    if copied != n {
        return Err(AudioError::NotWav("unexpected end of file while skipping chunk".into()));
    }
    Ok(())
}

impl WavHeader {
    /// Consumes the RIFF header and every chunk up to (not including) the
    /// payload of the `data` chunk.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let riff = read_array::<12, _>(r, "RIFF header")?;
        if &riff[0..4] != b"RIFF" || &riff[8..12] != b"WAVE" {
            return Err(AudioError::NotWav("bad RIFF/WAVE magic".into()));
        }
        let mut sample_rate_hz = None;
        loop {
            let head = read_array::<8, _>(r, "chunk header")?;
            let size = u32::from_le_bytes([head[4], head[5], head[6], head[7]]);
            match &head[0..4] {
                b"fmt " => {
                    if size < 16 {
                        return Err(AudioError::NotWav(format!("fmt chunk too short ({size} bytes)")));
                    }
                    let fmt = read_array::<16, _>(r, "fmt chunk")?;
                    let mut format_tag = u16::from_le_bytes([fmt[0], fmt[1]]);
                    let channels = u16::from_le_bytes([fmt[2], fmt[3]]);
                    let rate = u32::from_le_bytes([fmt[4], fmt[5], fmt[6], fmt[7]]);
                    let bits = u16::from_le_bytes([fmt[14], fmt[15]]);
                    let mut rest = u64::from(size) - 16;
                    if format_tag == WAVE_FORMAT_EXTENSIBLE && rest >= 10 {
                        // cbSize, valid bits, channel mask, then the sub-format GUID.
                        let ext = read_array::<10, _>(r, "fmt extension")?;
                        format_tag = u16::from_le_bytes([ext[8], ext[9]]);
                        rest -= 10;
                    }
                    skip(r, rest + u64::from(size & 1))?;
                    if format_tag != WAVE_FORMAT_PCM || bits != BITS_PER_SAMPLE {
                        return Err(AudioError::UnsupportedEncoding { format_tag, bits_per_sample: bits });
                    }
                    if channels != 1 {
                        return Err(AudioError::MultiChannel(channels));
                    }
                    if rate == 0 {
                        return Err(AudioError::NotWav("sample rate of 0".into()));
                    }
                    sample_rate_hz = Some(rate);
                }
                b"data" => {
                    let sample_rate_hz = sample_rate_hz
                        .ok_or_else(|| AudioError::NotWav("data chunk before fmt chunk".into()))?;
                    if size % 2 != 0 {
                        return Err(AudioError::TruncatedData {
                            declared: u64::from(size),
                            found: u64::from(size - 1),
                        });
                    }
                    return Ok(Self { sample_rate_hz, data_len: size });
                }
                _ => skip(r, u64::from(size) + u64::from(size & 1))?,
            }
        }
    }

    /// The canonical 44-byte header for `n_samples` of PCM16 mono audio.
    pub fn to_bytes(sample_rate_hz: u32, n_samples: usize) -> [u8; 44] {
        let data_len = (n_samples * 2) as u32;
        let mut h = [0u8; 44];
        h[0..4].copy_from_slice(b"RIFF");
        h[4..8].copy_from_slice(&(36 + data_len).to_le_bytes());
        h[8..12].copy_from_slice(b"WAVE");
        h[12..16].copy_from_slice(b"fmt ");
        h[16..20].copy_from_slice(&16u32.to_le_bytes());
        h[20..22].copy_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
        h[22..24].copy_from_slice(&1u16.to_le_bytes());
        h[24..28].copy_from_slice(&sample_rate_hz.to_le_bytes());
        h[28..32].copy_from_slice(&(sample_rate_hz * 2).to_le_bytes());
        h[32..34].copy_from_slice(&2u16.to_le_bytes());
        h[34..36].copy_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
        h[36..40].copy_from_slice(b"data");
        h[40..44].copy_from_slice(&data_len.to_le_bytes());
        h
    }
}

#[inline]
pub fn decode_sample(v: i16) -> f32 {
    f32::from(v) / PCM_DIVISOR
}

/// Quantizes a normalized sample, rounding half away from zero and saturating.
#[inline]
pub fn encode_sample(s: f32) -> i16 {
    let scaled = (f64::from(s) * f64::from(PCM_DIVISOR)).round();
    scaled.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Decodes a complete WAV stream.
pub fn read_wav_from<R: Read>(mut r: R) -> Result<AudioClip> {
    let header = WavHeader::read_from(&mut r)?;
    let declared = u64::from(header.data_len);
    let mut data = Vec::with_capacity(header.data_len as usize);
    r.by_ref().take(declared).read_to_end(&mut data)?;
    if (data.len() as u64) < declared {
        return Err(AudioError::TruncatedData { declared, found: data.len() as u64 });
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| decode_sample(i16::from_le_bytes([b[0], b[1]])))
        .collect();
    Ok(AudioClip { samples, sample_rate_hz: header.sample_rate_hz, source_id: None })
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let clip = read_wav_from(BufReader::new(File::open(path)?))?;
    Ok(clip.with_source_id(path.display().to_string()))
}

pub fn write_wav_to<W: Write>(clip: &AudioClip, mut w: W) -> Result<()> {
    w.write_all(&WavHeader::to_bytes(clip.sample_rate_hz, clip.samples.len()))?;
    let mut data = Vec::with_capacity(clip.samples.len() * 2);
    for &s in &clip.samples {
        data.extend_from_slice(&encode_sample(s).to_le_bytes());
    }
    w.write_all(&data)?;
    w.flush()?;
    Ok(())
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    write_wav_to(clip, BufWriter::new(File::create(path)?))
}
