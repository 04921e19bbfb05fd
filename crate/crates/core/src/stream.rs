//! Real-time featurization of a PCM byte stream.
//!
//! An ingest thread decodes int16 samples into a ring buffer holding one
//! window and, every hop, hands a copy of the window to the compute stage
//! over a bounded queue. The compute stage featurizes, optionally
//! classifies, and writes one JSON line per frame. Time is counted in
//! samples, never read from a clock, so replays are exact.

use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{decode_sample, AudioError, WavHeader};
use crate::classify::{Classifier, ClassifyError, FeatureSetup};
use crate::features::{FeatureError, Featurizer};
use crate::framing::FramingError;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("stream ended before any audio")]
    SourceEnded,
    #[error("checkpoint featurization {checkpoint} does not match stream featurization {stream}")]
    DigestMismatch { checkpoint: String, stream: String },
    #[error("odd number of PCM bytes ({0}) at end of stream")]
    MalformedPcm(u64),
    #[error("invalid stream configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = StreamError> = std::result::Result<T, E>;

/// What to do when the compute stage falls behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    /// Discard the oldest queued frame to make room.
    #[default]
    DropOldest,
    /// Stall ingest until there is room.
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Headerless little-endian int16 mono.
    Raw { sample_rate_hz: u32 },
    /// A WAV header followed by PCM16 mono data.
    Wav,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub setup: FeatureSetup,
    pub queue_capacity: usize,
    pub drop_policy: DropPolicy,
    /// Also emit the frame's full mel matrix.
    pub full_matrix: bool,
    /// Blank-rejection threshold used when a model is loaded.
    pub tau: f64,
}

impl Default for StreamConfig {
    /// 0.2 s frames every 0.04 s, 32 bands with emphasis, a 64-frame queue.
    fn default() -> Self {
        Self { setup: FeatureSetup::streaming(), queue_capacity: 64, drop_policy: DropPolicy::DropOldest, full_matrix: false, tau: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPrediction {
    pub class_name: String,
    pub probs: Vec<f64>,
    pub is_contact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEvent {
    pub seq: u64,
    /// Frame end time in seconds of stream time.
    pub t_s: f64,
    /// Time-averaged log-mel vector.
    pub mel: Vec<f64>,
    pub prediction: Option<EventPrediction>,
    /// `n_mels` rows of `n_frames` values, if requested.
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub frames_emitted: u64,
    pub frames_dropped: u64,
    pub samples_read: u64,
}

/// Rounds to 6 significant digits.
pub fn round_sig6(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().expect("formatted float")
}

#[derive(Serialize)]
struct EventLine<'a> {
    seq: u64,
    t_s: f64,
    mel: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
}

/// One JSON object per line with keys `seq, t_s, mel` and, when the event
/// carries a prediction, `class, probs, contact`.
pub fn write_event<W: Write>(ev: &FrameEvent, sink: &mut W) -> io::Result<()> {
    let round = |v: &[f64]| v.iter().copied().map(round_sig6).collect::<Vec<_>>();
    let p = ev.prediction.as_ref();
    let line = EventLine {
        seq: ev.seq,
        t_s: round_sig6(ev.t_s),
        mel: round(&ev.mel),
        class: p.map(|p| p.class_name.as_str()),
        probs: p.map(|p| round(&p.probs)),
        contact: p.map(|p| p.is_contact),
        matrix: ev.matrix.as_ref().map(|m| m.iter().map(|r| round(r)).collect()),
    };
    serde_json::to_writer(&mut *sink, &line)?;
    sink.write_all(b"\n")
}

/// A window snapshot, numbered by production order.
struct RawFrame {
    index: u64,
    samples: Vec<f32>,
}

struct Ingest {
    samples_read: u64,
    frames_produced: u64,
    frames_dropped: u64,
}

/// `drain` lets the ingest side discard the oldest queued frame; it is only
/// present under `DropOldest`. `stop` is raised when the consumer gives up.
fn ingest<R: Read>(
    mut source: R,
    window: usize,
    hop: usize,
    tx: Sender<RawFrame>,
    drain: Option<Receiver<RawFrame>>,
    stop: &AtomicBool,
) -> Result<Ingest> {
    let mut ring: VecDeque<f32> = VecDeque::with_capacity(window);
    let mut stats = Ingest { samples_read: 0, frames_produced: 0, frames_dropped: 0 };
    let mut buf = vec![0u8; 16 * 1024];
    let mut carry: Option<u8> = None;
    let mut since_emit = 0usize;
    loop {
        let n = match source.read(&mut buf[..]) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        let mut bytes = &buf[..n];
        let mut pairs: Vec<[u8; 2]> = Vec::with_capacity(n / 2 + 1);
        if let Some(lo) = carry.take() {
            pairs.push([lo, bytes[0]]);
            bytes = &bytes[1..];
        }
        let mut chunks = bytes.chunks_exact(2);
        pairs.extend(chunks.by_ref().map(|c| [c[0], c[1]]));
        carry = chunks.remainder().first().copied();

        for pair in pairs {
            if ring.len() == window {
                ring.pop_front();
            }
            ring.push_back(decode_sample(i16::from_le_bytes(pair)));
            stats.samples_read += 1;
            since_emit += 1;
            let due = if stats.frames_produced == 0 { ring.len() == window } else { since_emit == hop };
            if !due {
                continue;
            }
            since_emit = 0;
            let mut frame = RawFrame { index: stats.frames_produced, samples: ring.iter().copied().collect() };
            stats.frames_produced += 1;
            if stop.load(Ordering::Relaxed) {
                return Ok(stats);
            }
            match &drain {
                None => {
                    if tx.send(frame).is_err() {
                        return Ok(stats);
                    }
                }
                Some(rx) => loop {
                    match tx.try_send(frame) {
                        Ok(()) => break,
                        Err(TrySendError::Disconnected(_)) => return Ok(stats),
                        Err(TrySendError::Full(f)) => {
                            frame = f;
                            if rx.try_recv().is_ok() {
                                stats.frames_dropped += 1;
                            }
                        }
                    }
                },
            }
        }
    }
    if carry.is_some() {
        return Err(StreamError::MalformedPcm(2 * stats.samples_read + 1));
    }
    Ok(stats)
}

/// Streams `source` through the featurizer (and `classifier`, if any),
/// writing one event per produced frame to `sink`.
pub fn run_stream<R: Read + Send, W: Write>(
    source: R,
    format: InputFormat,
    cfg: &StreamConfig,
    classifier: Option<&Classifier>,
    sink: &mut W,
) -> Result<StreamStats> {
    run_stream_with(source, format, cfg, classifier, |ev| write_event(ev, sink).map_err(StreamError::from))
}

/// Like [`run_stream`], handing each event to `on_event` instead of a writer.
pub fn run_stream_with<R: Read + Send>(
    source: R,
    format: InputFormat,
    cfg: &StreamConfig,
    classifier: Option<&Classifier>,
    mut on_event: impl FnMut(&FrameEvent) -> Result<()>,
) -> Result<StreamStats> {
    if cfg.queue_capacity == 0 {
        return Err(StreamError::InvalidConfig("queue capacity must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.tau) {
        return Err(StreamError::InvalidConfig(format!("tau {} outside [0, 1]", cfg.tau)));
    }
    let mut reader = BufReader::new(source);
    let (fs, data_len) = match format {
        InputFormat::Raw { sample_rate_hz } => (sample_rate_hz, None),
        InputFormat::Wav => {
            if reader.fill_buf()?.is_empty() {
                return Err(StreamError::SourceEnded);
            }
            let header = WavHeader::read_from(&mut reader)?;
            (header.sample_rate_hz, Some(u64::from(header.data_len)))
        }
    };
    if fs == 0 {
        return Err(StreamError::InvalidConfig("sample rate must be positive".into()));
    }
    let featurizer = Featurizer::new(cfg.setup.features, fs)?;
    if let Some(c) = classifier {
        if c.featurizer.digest() != featurizer.digest() {
            return Err(StreamError::DigestMismatch { checkpoint: c.featurizer.digest().to_string(), stream: featurizer.digest().to_string() });
        }
    }
    cfg.setup.framing.validate()?;
    let framing = cfg.setup.framing.in_samples(fs)?;
    let (window, hop) = (framing.window, framing.hop);
    let source: Box<dyn Read + Send> = match data_len {
        Some(n) => Box::new(reader.take(n)),
        None => Box::new(reader),
    };

    let (tx, rx) = bounded::<RawFrame>(cfg.queue_capacity);
    let drain = (cfg.drop_policy == DropPolicy::DropOldest).then(|| rx.clone());
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        let stop = &stop;
        let producer = scope.spawn(move || ingest(source, window, hop, tx, drain, stop));
        let mut emitted = 0u64;
        let mut consume = || -> Result<()> {
            for frame in rx.iter() {
                let spec = featurizer.featurize(&frame.samples)?;
                let prediction = match classifier {
                    None => None,
                    Some(c) => {
                        let p = c.predict(&spec, cfg.tau)?;
                        Some(EventPrediction { class_name: c.class_names[p.class_id].clone(), probs: p.probs, is_contact: p.is_contact })
                    }
                };
                let matrix = cfg.full_matrix.then(|| spec.data.chunks(spec.n_frames).map(<[f64]>::to_vec).collect());
                let ev = FrameEvent {
                    seq: frame.index,
                    t_s: (window as f64 + frame.index as f64 * hop as f64) / f64::from(fs),
                    mel: spec.time_average(),
                    prediction,
                    matrix,
                };
                on_event(&ev)?;
                emitted += 1;
            }
            Ok(())
        };
        let consumed = consume();
        // Unblock a producer stuck on a full queue if the consumer bailed out.
        stop.store(true, Ordering::Relaxed);
        drop(rx);
        let ingest = producer.join().expect("ingest thread panicked");
        consumed?;
        let ingest = ingest?;
        Ok(StreamStats { frames_emitted: emitted, frames_dropped: ingest.frames_dropped, samples_read: ingest.samples_read })
    })
}

/// Parses raw little-endian int16 bytes as samples.
pub fn decode_pcm(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 2 != 0 {
        return Err(StreamError::MalformedPcm(bytes.len() as u64));
    }
    Ok(bytes.chunks_exact(2).map(|c| decode_sample(i16::from_le_bytes([c[0], c[1]]))).collect())
}
