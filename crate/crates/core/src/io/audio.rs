//! Mono 16-bit WAV ingestion and log-mel filterbank features.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::bn::AcousticFrames;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const LOG_FLOOR: f64 = 1e-10;
pub const FRAME_MS: f64 = 25.0;
pub const HOP_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveformRecord {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl WaveformRecord {
    /// Samples scaled to [-1, 1).
    pub fn normalized(&self) -> Vec<f64> {
        self.samples.iter().map(|s| *s as f64 / 32768.0).collect()
    }
}

fn hound_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Unsupported(format!("WAV: {other}")),
    }
}

pub fn read_wav(path: &Path) -> Result<WaveformRecord> {
    let reader = hound::WavReader::open(path).map_err(hound_error)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Unsupported(format!(
            "WAV with {} channels; only mono is supported",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Unsupported(format!(
            "WAV with {}-bit {:?} samples; only 16-bit integer PCM is supported",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(hound_error)?;
    Ok(WaveformRecord {
        samples,
        sample_rate: spec.sample_rate,
    })
}

pub fn write_wav(path: &Path, wave: &WaveformRecord) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(hound_error)?;
    for s in &wave.samples {
        writer.write_sample(*s).map_err(hound_error)?;
    }
    writer.finalize().map_err(hound_error)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of `n_mels` triangular filters spanning 0 to Nyquist.
pub fn mel_centres(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    mel_edges(n_mels, sample_rate)[1..=n_mels].to_vec()
}

fn mel_edges(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Frame and hop lengths in samples.
pub fn framing(sample_rate: u32) -> (usize, usize) {
    let sr = sample_rate as f64;
    (
        (sr * FRAME_MS / 1000.0).round() as usize,
        (sr * HOP_MS / 1000.0).round() as usize,
    )
}

/// Hann-windowed power spectra pooled by a triangular mel filterbank, log
/// with a floor of 1e-10; one row per 10 ms hop.
pub fn logmel_features(wave: &WaveformRecord, n_mels: usize) -> Result<AcousticFrames> {
    if wave.sample_rate < 8000 {
        return Err(Error::InvalidArgument(format!(
            "sample rate must be at least 8 kHz, got {}",
            wave.sample_rate
        )));
    }
    if n_mels == 0 {
        return Err(Error::InvalidArgument("need at least one mel band".into()));
    }
    let (frame, hop) = framing(wave.sample_rate);
    if wave.samples.len() < frame {
        return Err(Error::InvalidArgument(format!(
            "waveform of {} samples is shorter than one {frame}-sample frame",
            wave.samples.len()
        )));
    }
    let n_fft = frame.next_power_of_two();
    let bins = n_fft / 2 + 1;
    let bin_hz = wave.sample_rate as f64 / n_fft as f64;
    let edges = mel_edges(n_mels, wave.sample_rate);
    let filters: Vec<Vec<f64>> = (0..n_mels)
        .map(|m| {
            let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= centre {
                        (f - lo) / (centre - lo)
                    } else {
                        (hi - f) / (hi - centre)
                    }
                })
                .collect()
        })
        .collect();
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / frame as f64).cos())
        .collect();

    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let samples = wave.normalized();
    let frames = (samples.len() - frame) / hop + 1;
    let mut out = Matrix::zeros(frames, n_mels);
    let mut buffer = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        let start = t * hop;
        for (i, slot) in buffer.iter_mut().enumerate() {
            let v = if i < frame { samples[start + i] * window[i] } else { 0.0 };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buffer);
        let power: Vec<f64> = buffer[..bins].iter().map(|c| c.norm_sqr()).collect();
        for (m, filter) in filters.iter().enumerate() {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.set(t, m, energy.max(LOG_FLOOR).ln());
        }
    }
    AcousticFrames::new(out)
}
