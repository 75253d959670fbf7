mod attack;
mod metrics;

pub use attack::{
    asi_error, linkage_scores, pooled_statistics, train_asi_attack, AttackConfig, AttackModel, LabeledFeatureCorpus,
    LabeledFeatures, Split, Trial,
};
pub use metrics::{asr_utility, edit_distance, eer, pearson_corr, unlinkability, wer, ScoreSet};
