//! Pitch tracks: estimation, voiced-frame extraction, normalization and
//! conversion to target-speaker statistics.

mod estimate;
mod sequence;

pub use estimate::{estimate_pitch, PitchTrackerConfig};
pub use sequence::{
    corpus_pitch_stats, naive_dp_pitch, normalize, pitch_convert, reinsert_zeros, remove_zeros,
    with_voiced, CorpusPitchSummary, PitchSequence, PitchStats, Summary, VoicedView,
    FRAME_PERIOD_MS, MIN_STD, NAIVE_CLIP,
};
