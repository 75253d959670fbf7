//! File formats, audio front end and the synthetic corpus.

pub mod audio;
pub mod binary;
pub mod corpus;
pub mod text;

pub use audio::{logmel_features, read_wav, write_wav, WaveformRecord};
pub use binary::{
    read_bn_model, read_features, read_pitch_model, read_pool, write_bn_model, write_features, write_pitch_model,
    write_pool,
};
pub use corpus::{gen_corpus, random_speakers, read_corpus, write_corpus, GeneratorConfig, SyntheticCorpus, SyntheticSpeakerSpec};
pub use text::{read_pitch, read_scores, write_pitch, write_scores, Config, MetricReport};
