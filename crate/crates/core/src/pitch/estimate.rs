//! Normalized-autocorrelation F0 tracker.
//!
//! A lightweight stand-in for a full pitch tracker. Each 10 ms frame is
//! analysed over a window of two periods of the lowest admissible F0; the
//! first lag whose normalized cross-correlation is close to the global best
//! wins, which suppresses the sub-harmonic choices a plain argmax makes.

use super::sequence::{PitchSequence, FRAME_PERIOD_MS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchTrackerConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Frames whose best normalized correlation falls below this are unvoiced.
    pub voicing_threshold: f64,
    /// Frames whose RMS falls below this (full scale = 1.0) are silent.
    pub energy_floor: f64,
}

impl Default for PitchTrackerConfig {
    fn default() -> Self {
        Self {
            f0_min: 60.0,
            f0_max: 400.0,
            voicing_threshold: 0.5,
            energy_floor: 1e-3,
        }
    }
}

pub fn estimate_pitch(
    samples: &[f64],
    sample_rate: u32,
    config: &PitchTrackerConfig,
) -> Result<PitchSequence> {
    if samples.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    let sr = sample_rate as f64;
    if sample_rate < 8000 {
        return Err(Error::InvalidArgument(format!(
            "sample rate must be at least 8 kHz, got {sample_rate}"
        )));
    }
    if !(config.f0_min > 0.0 && config.f0_min < config.f0_max && config.f0_max < sr / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "F0 range [{}, {}] must be increasing and below Nyquist",
            config.f0_min, config.f0_max
        )));
    }

    let hop = (sr * FRAME_PERIOD_MS / 1000.0).round() as usize;
    let min_lag = (sr / config.f0_max).floor().max(1.0) as usize;
    let max_lag = (sr / config.f0_min).ceil() as usize;
    let window = max_lag;
    let frames = samples.len() / hop;

    let mut segment = vec![0.0; window + max_lag + 1];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * hop;
        for (i, s) in segment.iter_mut().enumerate() {
            *s = samples.get(start + i).copied().unwrap_or(0.0);
        }
        out.push(frame_f0(&segment, window, min_lag, max_lag, sr, config));
    }
    PitchSequence::new(out)
}

fn frame_f0(
    segment: &[f64],
    window: usize,
    min_lag: usize,
    max_lag: usize,
    sr: f64,
    config: &PitchTrackerConfig,
) -> f64 {
    let head = &segment[..window];
    let energy: f64 = head.iter().map(|x| x * x).sum();
    if (energy / window as f64).sqrt() < config.energy_floor {
        return 0.0;
    }

    // nccf[lag - (min_lag - 1)] for lags min_lag-1 ..= max_lag+1 so every
    // candidate has neighbours for interpolation.
    let lo = min_lag - 1;
    let nccf: Vec<f64> = (lo..=max_lag + 1)
        .map(|lag| {
            let tail = &segment[lag..lag + window];
            let cross: f64 = head.iter().zip(tail).map(|(a, b)| a * b).sum();
            let tail_energy: f64 = tail.iter().map(|x| x * x).sum();
            let denom = (energy * tail_energy).sqrt();
            if denom > 0.0 {
                cross / denom
            } else {
                0.0
            }
        })
        .collect();

    let candidates = 1..nccf.len() - 1;
    let best = candidates
        .clone()
        .map(|i| nccf[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if best < config.voicing_threshold {
        return 0.0;
    }
    let Some(i) = candidates
        .filter(|&i| nccf[i] >= 0.9 * best && nccf[i] >= nccf[i - 1] && nccf[i] >= nccf[i + 1])
        .next()
    else {
        return 0.0;
    };

    let (a, b, c) = (nccf[i - 1], nccf[i], nccf[i + 1]);
    let curvature = a - 2.0 * b + c;
    let shift = if curvature < 0.0 {
        (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let lag = (lo + i) as f64 + shift;
    sr / lag
}
