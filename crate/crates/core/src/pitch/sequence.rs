use rand::Rng;

use crate::dp::{check_epsilon, LaplaceNoise};
use crate::error::{Error, Result};

/// Frame period of every pitch track, in milliseconds.
pub const FRAME_PERIOD_MS: f64 = 10.0;

/// Standard deviations below this (in Hz, or normalized units) count as constant.
pub const MIN_STD: f64 = 1e-6;

/// Clipping range of the input-perturbation baseline, in normalized units.
pub const NAIVE_CLIP: f64 = 4.0;

/// Per-frame fundamental frequency in Hz; `0.0` marks unvoiced or silent frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PitchSequence {
    values: Vec<f64>,
}

impl PitchSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "pitch frame {i} is {v}; frequencies must be finite and non-negative"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Voiced frames of a track with the positions of the removed zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct VoicedView {
    pub voiced: Vec<f64>,
    pub zero_positions: Vec<usize>,
}

impl VoicedView {
    /// Frame count of the original track.
    pub fn total_len(&self) -> usize {
        self.voiced.len() + self.zero_positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchStats {
    pub mean: f64,
    pub std: f64,
}

impl PitchStats {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pitch statistics need finite mean and non-negative std, got ({mean}, {std})"
            )));
        }
        Ok(Self { mean, std })
    }

    /// Population mean and standard deviation of `values`.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("pitch values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self::new(mean, var.sqrt())
    }
}

/// Splits a track into its voiced values and the indices of its zero frames.
pub fn remove_zeros(pitch: &PitchSequence) -> Result<VoicedView> {
    let mut voiced = Vec::with_capacity(pitch.len());
    let mut zero_positions = Vec::new();
    for (i, &v) in pitch.values().iter().enumerate() {
        if v == 0.0 {
            zero_positions.push(i);
        } else {
            voiced.push(v);
        }
    }
    if voiced.is_empty() {
        return Err(Error::Degenerate(
            "pitch track has no voiced frames; pass the utterance through unchanged".into(),
        ));
    }
    Ok(VoicedView {
        voiced,
        zero_positions,
    })
}

/// Inverse of [`remove_zeros`]: interleaves `view.voiced` with zeros at `view.zero_positions`.
pub fn reinsert_zeros(view: &VoicedView) -> Result<PitchSequence> {
    let total = view.total_len();
    let mut out = Vec::with_capacity(total);
    let mut zeros = view.zero_positions.iter().peekable();
    let mut voiced = view.voiced.iter();
    for i in 0..total {
        if zeros.peek() == Some(&&i) {
            zeros.next();
            out.push(0.0);
        } else {
            match voiced.next() {
                Some(&v) => out.push(v),
                None => {
                    return Err(Error::shape(
                        format!("{} voiced values", total - view.zero_positions.len()),
                        "fewer",
                    ))
                }
            }
        }
    }
    if zeros.next().is_some() {
        return Err(Error::InvalidArgument(format!(
            "zero positions must be sorted, unique and below {total}"
        )));
    }
    PitchSequence::new(out)
}

/// Replaces the voiced values of `view`, checking the length is unchanged.
pub fn with_voiced(view: &VoicedView, voiced: Vec<f64>) -> Result<VoicedView> {
    if voiced.len() != view.voiced.len() {
        return Err(Error::shape(
            format!("{} voiced values", view.voiced.len()),
            voiced.len(),
        ));
    }
    Ok(VoicedView {
        voiced,
        zero_positions: view.zero_positions.clone(),
    })
}

/// Standardizes to zero mean and unit population standard deviation.
pub fn normalize(values: &[f64]) -> Result<(Vec<f64>, PitchStats)> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "normalization needs at least 2 values, got {}",
            values.len()
        )));
    }
    let stats = PitchStats::of(values)?;
    if stats.std < MIN_STD {
        return Err(Error::Degenerate(format!(
            "constant sequence (std {:e}) cannot be normalized",
            stats.std
        )));
    }
    let z = values.iter().map(|v| (v - stats.mean) / stats.std).collect();
    Ok((z, stats))
}

/// Affine map of a normalized sequence onto `target` mean and standard deviation.
pub fn pitch_convert(normalized: &[f64], target: PitchStats) -> Result<Vec<f64>> {
    if !(target.std > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target std must be positive, got {}",
            target.std
        )));
    }
    Ok(normalized
        .iter()
        .map(|z| z * target.std + target.mean)
        .collect())
}

/// Input-perturbation baseline: clip normalized pitch to `[-4, 4]`, then add
/// `Laplace(8 / epsilon)` to every entry. `epsilon` is the per-entry budget.
pub fn naive_dp_pitch<R: Rng + ?Sized>(
    normalized: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let noise = LaplaceNoise::calibrated(2.0 * NAIVE_CLIP, epsilon)?;
    Ok(normalized
        .iter()
        .map(|z| z.clamp(-NAIVE_CLIP, NAIVE_CLIP) + noise.sample(rng))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let stats = PitchStats::of(values).expect("non-empty");
        Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            avg: stats.mean,
            std: stats.std,
        }
    }
}

/// Length (frames) and voiced-fraction statistics of a corpus of tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusPitchSummary {
    pub length: Summary,
    pub nonzero_fraction: Summary,
}

pub fn corpus_pitch_stats(corpus: &[PitchSequence]) -> Result<CorpusPitchSummary> {
    if corpus.is_empty() {
        return Err(Error::Empty("pitch corpus"));
    }
    if corpus.iter().any(PitchSequence::is_empty) {
        return Err(Error::InvalidArgument("corpus contains an empty pitch track".into()));
    }
    let lengths: Vec<f64> = corpus.iter().map(|p| p.len() as f64).collect();
    let fractions: Vec<f64> = corpus
        .iter()
        .map(|p| p.voiced_count() as f64 / p.len() as f64)
        .collect();
    Ok(CorpusPitchSummary {
        length: Summary::of(&lengths),
        nonzero_fraction: Summary::of(&fractions),
    })
}
