//! Reference implementations used as test oracles. Nothing here calls into
//! the library: every number is recomputed from first principles with plain
//! loops, so agreement means two independent derivations match.
#![allow(dead_code)]

use std::f64::consts::PI;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Naive `O(N²)` DFT power of one real frame, bins `0..=N/2`.
pub fn naive_dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let table: Vec<(f64, f64)> = (0..n).map(|j| {
        let a = 2.0 * PI * j as f64 / n as f64;
        (a.cos(), a.sin())
    }).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let (c, s) = table[(k * t) % n];
                re += x * c;
                im -= x * s;
            }
            re * re + im * im
        })
        .collect()
}

/// Triangle weight of FFT bin frequency `f` in the band `(l, c, r)`.
pub fn triangle(f: f64, l: f64, c: f64, r: f64) -> f64 {
    if f <= l || f >= r {
        0.0
    } else if f <= c {
        (f - l) / (c - l)
    } else {
        (r - f) / (r - c)
    }
}

pub struct MelParams {
    pub fs: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// `(fraction of Nyquist, amplitude gain)`.
    pub emphasis: Option<(f64, f64)>,
    pub eps: f64,
}

/// Log-mel matrix (`n_mels × n_frames`, row-major) by naive DFT and scalar
/// triangle sums. Frames start at multiples of `hop` with no padding.
pub fn naive_log_mel(samples: &[f32], p: &MelParams) -> (usize, Vec<f64>) {
    let n = p.n_fft;
    let n_frames = if samples.len() < n { 0 } else { (samples.len() - n) / p.hop + 1 };
    let hann: Vec<f64> = (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())).collect();
    let lo = hz_to_mel(p.f_min);
    let hi = hz_to_mel(p.f_max);
    let mut edges: Vec<f64> = (0..p.n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (p.n_mels + 1) as f64)).collect();
    edges[0] = p.f_min;
    edges[p.n_mels + 1] = p.f_max;
    let bin_hz = f64::from(p.fs) / n as f64;
    let nyquist = f64::from(p.fs) / 2.0;

    let mut out = vec![0.0; p.n_mels * n_frames];
    for t in 0..n_frames {
        let frame: Vec<f64> = (0..n).map(|i| f64::from(samples[t * p.hop + i]) * hann[i]).collect();
        let power = naive_dft_power(&frame);
        for m in 0..p.n_mels {
            let mut acc = 0.0;
            for (k, &pw) in power.iter().enumerate() {
                let f = k as f64 * bin_hz;
                let mut w = triangle(f, edges[m], edges[m + 1], edges[m + 2]);
                if let Some((frac, gain)) = p.emphasis {
                    if f > frac * nyquist {
                        w *= gain * gain;
                    }
                }
                acc += w * pw;
            }
            out[m * n_frames + t] = acc.max(p.eps).ln();
        }
    }
    (n_frames, out)
}

/// Window count by walking the start positions one hop at a time.
pub fn count_windows(len: usize, window: usize, hop: usize) -> usize {
    let mut count = 0;
    let mut start = 0;
    while start + window <= len {
        count += 1;
        start += hop;
    }
    count
}

/// Central differences of a scalar function.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Gradients smaller than this are indistinguishable from round-off in a
/// central difference of an O(1) objective.
pub const GRAD_FLOOR: f64 = 1e-8;

/// `max|a − n| / max(max|a|, max|n|, GRAD_FLOOR)`.
///
/// The floor matters for parameters whose true gradient is zero, such as a
/// convolution bias feeding batch norm in training mode.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(GRAD_FLOOR, f64::max);
    diff / scale
}

/// Textbook Adam, one scalar at a time.
pub struct ScalarAdam {
    pub lr: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ScalarAdam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, b1: 0.9, b2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        for i in 0..params.len() {
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * grads[i];
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * grads[i] * grads[i];
            let m_hat = self.m[i] / (1.0 - self.b1.powi(self.t));
            let v_hat = self.v[i] / (1.0 - self.b2.powi(self.t));
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Training share of a class of `n` items: `ratio·n` rounded half up, kept
/// inside `[1, n − 1]`.
pub fn expected_train_count(n: usize, ratio: f64) -> usize {
    let mut k = 0usize;
    // Count up instead of rounding: the smallest k with k + 0.5 > ratio·n.
    while (k as f64) + 0.5 <= ratio * n as f64 {
        k += 1;
    }
    k.clamp(1, n - 1)
}

/// Minimal 44-byte PCM16 mono WAV header, written field by field.
pub fn wav_header(sample_rate: u32, n_samples: usize) -> Vec<u8> {
    let data_len = (2 * n_samples) as u32;
    let mut h = Vec::with_capacity(44);
    h.extend_from_slice(b"RIFF");
    h.extend_from_slice(&(36 + data_len).to_le_bytes());
    h.extend_from_slice(b"WAVE");
    h.extend_from_slice(b"fmt ");
    h.extend_from_slice(&16u32.to_le_bytes());
    h.extend_from_slice(&1u16.to_le_bytes());
    h.extend_from_slice(&1u16.to_le_bytes());
    h.extend_from_slice(&sample_rate.to_le_bytes());
    h.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    h.extend_from_slice(&2u16.to_le_bytes());
    h.extend_from_slice(&16u16.to_le_bytes());
    h.extend_from_slice(b"data");
    h.extend_from_slice(&data_len.to_le_bytes());
    h
}

/// Indices of local maxima of `power` that exceed `floor_ratio` × the
/// global maximum, strongest first.
pub fn spectral_peaks(power: &[f64], floor_ratio: f64) -> Vec<usize> {
    let max = power.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<usize> = (1..power.len().saturating_sub(1))
        .filter(|&k| power[k] > power[k - 1] && power[k] >= power[k + 1] && power[k] > floor_ratio * max)
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    peaks
}
