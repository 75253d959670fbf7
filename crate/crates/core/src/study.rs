//! End-to-end privacy/utility study on synthetic speakers.
//!
//! One trial generates a public corpus (used to train the extractors and to
//! supply target pitch statistics) and a disjoint evaluation corpus, releases
//! the evaluation pitch and BN features under each privacy condition, trains
//! an identification attack on the released training split and measures the
//! attack error and the utility of the release on the test split.

use rand::Rng;

use crate::autoencoder::{self, anonymize_pitch, PitchAutoencoder, TrainingConfig};
use crate::bn::{frame_accuracy, retrain_classifier, train_bn, train_bn_from, AcousticModel, BnArchitecture, LabelledUtterance};
use crate::dp::NoiseRng;
use crate::error::{Error, Result};
use crate::eval::{
    asi_error, pearson_corr, train_asi_attack, AttackConfig, LabeledFeatureCorpus, LabeledFeatures, Split,
};
use crate::io::corpus::{gen_corpus, random_speakers, GeneratorConfig, SpeakerDistribution, SyntheticCorpus};
use crate::nn::Matrix;
use crate::pitch::{naive_dp_pitch, normalize, remove_zeros, PitchSequence, PitchStats};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub public_speakers: usize,
    pub public_utterances_per_speaker: usize,
    pub generator: GeneratorConfig,
    pub speaker_distribution: SpeakerDistribution,
    pub pitch_channels: usize,
    pub pitch_training: TrainingConfig,
    pub bn_architecture: BnArchitecture,
    pub bn_training: TrainingConfig,
    /// Epochs for retraining the classifier of the naive BN baseline.
    pub naive_classifier_epochs: usize,
    /// When set, private BN models start from the trained non-private model
    /// and are fine-tuned through their noise layer for this many epochs
    /// instead of being trained from scratch.
    pub bn_finetune_epochs: Option<usize>,
    pub attack: AttackConfig,
    /// Private budgets to evaluate, per utterance for pitch and per frame for BN.
    pub epsilons: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let generator = GeneratorConfig {
            observation_noise: 1.5,
            ..GeneratorConfig::default()
        };
        Self {
            speakers: 20,
            utterances_per_speaker: 50,
            public_speakers: 20,
            public_utterances_per_speaker: 20,
            generator,
            speaker_distribution: SpeakerDistribution {
                offset_scale: 1.0,
                max_relative_jitter: 0.4,
                ..SpeakerDistribution::default()
            },
            pitch_channels: 1,
            pitch_training: TrainingConfig {
                learning_rate: 3e-3,
                epochs: 10,
                ..Default::default()
            },
            bn_architecture: BnArchitecture {
                input_dim: generator.feature_dim,
                hidden: 16,
                bn_dim: 256,
                classifier_hidden: 16,
                classes: generator.phone_classes,
                kernel_width: 5,
            },
            // The noise layer makes the loss invariant to the projection's
            // scale, so weight decay would shrink it toward zero.
            bn_training: TrainingConfig {
                learning_rate: 3e-3,
                weight_decay: 0.0,
                epochs: 10,
                ..Default::default()
            },
            naive_classifier_epochs: 5,
            bn_finetune_epochs: Some(20),
            attack: AttackConfig::default(),
            epsilons: vec![100.0, 10.0, 1.0],
        }
    }
}

/// How a feature stream is released.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// Original features, no noise.
    Original,
    /// The extractor trained and run without its noise layer.
    NoiseFree,
    /// The DP extractor at the given budget.
    Private(f64),
    /// Input perturbation at the given budget.
    Naive(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionResult {
    pub condition: Condition,
    /// Identification error on the test split, percent.
    pub asi_error: Option<f64>,
    /// Mean test-split pitch correlation or BN frame accuracy.
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub pitch: Vec<ConditionResult>,
    pub bn: Vec<ConditionResult>,
}

impl TrialOutcome {
    fn find(list: &[ConditionResult], condition: Condition) -> Option<&ConditionResult> {
        list.iter().find(|r| r.condition == condition)
    }

    pub fn pitch_result(&self, condition: Condition) -> Option<&ConditionResult> {
        Self::find(&self.pitch, condition)
    }

    pub fn bn_result(&self, condition: Condition) -> Option<&ConditionResult> {
        Self::find(&self.bn, condition)
    }
}

/// Normalized voiced pitch of every utterance with at least `min_len` voiced frames.
fn voiced_normalized(corpus: &SyntheticCorpus, min_len: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for u in &corpus.utterances {
        let view = remove_zeros(&u.pitch)?;
        if view.voiced.len() >= min_len {
            out.push(normalize(&view.voiced)?.0);
        }
    }
    Ok(out)
}

/// Pitch statistics of every public speaker, pooled over their voiced frames.
pub fn speaker_pitch_stats(corpus: &SyntheticCorpus) -> Result<Vec<PitchStats>> {
    (0..corpus.speakers)
        .map(|s| {
            let voiced: Vec<f64> = corpus
                .utterances
                .iter()
                .filter(|u| u.speaker == s)
                .flat_map(|u| u.pitch.values().iter().copied().filter(|v| *v > 0.0))
                .collect();
            PitchStats::of(&voiced)
        })
        .collect()
}

/// Frame features an attacker extracts from a released pitch track: pitch
/// in hundreds of Hz plus first and second differences of the standardized
/// voiced contour.
pub fn pitch_attack_features(pitch: &PitchSequence) -> Result<Matrix> {
    let view = remove_zeros(pitch)?;
    let v = &view.voiced;
    let z = match normalize(v) {
        Ok((z, _)) => z,
        Err(Error::Degenerate(_) | Error::InvalidArgument(_)) => vec![0.0; v.len()],
        Err(e) => return Err(e),
    };
    let delta: Vec<f64> = (0..z.len()).map(|t| if t == 0 { 0.0 } else { z[t] - z[t - 1] }).collect();
    Ok(Matrix::from_fn(v.len(), 3, |t, c| match c {
        0 => v[t] / 100.0,
        1 => delta[t],
        _ => {
            if t == 0 {
                0.0
            } else {
                delta[t] - delta[t - 1]
            }
        }
    }))
}

fn attack_error(corpus: &SyntheticCorpus, released: Vec<Matrix>, attack: &AttackConfig) -> Result<f64> {
    let items = corpus
        .utterances
        .iter()
        .zip(released)
        .map(|(u, features)| LabeledFeatures {
            features,
            speaker: u.speaker,
            split: u.split,
        })
        .collect();
    let labeled = LabeledFeatureCorpus::new(items)?;
    let model = train_asi_attack(&labeled, attack)?;
    asi_error(&model, &labeled.split(Split::Test))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Correlation between an original and a released voiced contour.
fn voiced_correlation(original: &PitchSequence, released: &PitchSequence) -> Result<f64> {
    let a = remove_zeros(original)?.voiced;
    let b = remove_zeros(released)?.voiced;
    pearson_corr(&a, &b)
}

struct Corpora {
    public: SyntheticCorpus,
    eval: SyntheticCorpus,
}

fn corpora(config: &StudyConfig, seed: u64) -> Result<Corpora> {
    let g = &config.generator;
    let d = &config.speaker_distribution;
    let public_specs = random_speakers(config.public_speakers, g, d, &mut NoiseRng::stream(seed, 10))?;
    let eval_specs = random_speakers(config.speakers, g, d, &mut NoiseRng::stream(seed, 11))?;
    Ok(Corpora {
        public: gen_corpus(&public_specs, config.public_utterances_per_speaker, g, &mut NoiseRng::stream(seed, 12))?,
        eval: gen_corpus(&eval_specs, config.utterances_per_speaker, g, &mut NoiseRng::stream(seed, 13))?,
    })
}

fn training(base: &TrainingConfig, seed: u64, salt: u64) -> TrainingConfig {
    TrainingConfig {
        seed: seed.wrapping_mul(1000).wrapping_add(salt),
        ..base.clone()
    }
}

/// Pitch half of a trial.
pub fn pitch_study(config: &StudyConfig, seed: u64) -> Result<Vec<ConditionResult>> {
    let Corpora { public, eval } = corpora(config, seed)?;
    pitch_conditions(config, seed, &public, &eval)
}

fn pitch_conditions(
    config: &StudyConfig,
    seed: u64,
    public: &SyntheticCorpus,
    eval: &SyntheticCorpus,
) -> Result<Vec<ConditionResult>> {
    let width = crate::autoencoder::DEFAULT_KERNEL_WIDTH;
    let train_set = voiced_normalized(public, width)?;
    let targets = speaker_pitch_stats(public)?;
    let attack = AttackConfig {
        seed,
        ..config.attack
    };
    let mut results = Vec::new();

    let original: Vec<Matrix> = eval.utterances.iter().map(|u| pitch_attack_features(&u.pitch)).collect::<Result<_>>()?;
    results.push(ConditionResult {
        condition: Condition::Original,
        asi_error: Some(attack_error(eval, original, &attack)?),
        utility: Some(1.0),
    });

    let mut budgets = vec![f64::INFINITY];
    budgets.extend(&config.epsilons);
    for (i, &eps) in budgets.iter().enumerate() {
        let cfg = training(&config.pitch_training, seed, i as u64);
        let (model, _) = autoencoder::train(&train_set, &cfg, config.pitch_channels, eps)?;
        let (released, utility) = release_pitch(&model, eval, &targets, &mut NoiseRng::stream(seed, 20 + i as u64))?;
        let features = released.iter().map(pitch_attack_features).collect::<Result<_>>()?;
        results.push(ConditionResult {
            condition: if eps.is_finite() { Condition::Private(eps) } else { Condition::NoiseFree },
            asi_error: Some(attack_error(eval, features, &attack)?),
            utility: Some(utility),
        });
    }

    let mut naive_rng = NoiseRng::stream(seed, 30);
    for &eps in &config.epsilons {
        let mut corr = Vec::new();
        for u in eval.split(Split::Test) {
            let (z, _) = normalize(&remove_zeros(&u.pitch)?.voiced)?;
            // Equal utterance-level budget: every voiced entry gets eps / K.
            let noisy = naive_dp_pitch(&z, eps / z.len() as f64, &mut naive_rng)?;
            corr.push(pearson_corr(&z, &noisy)?);
        }
        results.push(ConditionResult {
            condition: Condition::Naive(eps),
            asi_error: None,
            utility: Some(mean(&corr)),
        });
    }
    Ok(results)
}

/// Anonymizes every evaluation utterance toward a randomly drawn public
/// speaker's statistics; returns the releases and the mean test correlation.
fn release_pitch<R: Rng + ?Sized>(
    model: &PitchAutoencoder,
    eval: &SyntheticCorpus,
    targets: &[PitchStats],
    rng: &mut R,
) -> Result<(Vec<PitchSequence>, f64)> {
    let mut released = Vec::with_capacity(eval.utterances.len());
    let mut corr = Vec::new();
    for u in &eval.utterances {
        let target = targets[rng.gen_range(0..targets.len())];
        let out = anonymize_pitch(model, &u.pitch, target, rng)?;
        if u.split == Split::Test {
            corr.push(voiced_correlation(&u.pitch, &out)?);
        }
        released.push(out);
    }
    Ok((released, mean(&corr)))
}

/// BN half of a trial.
pub fn bn_study(config: &StudyConfig, seed: u64) -> Result<Vec<ConditionResult>> {
    let Corpora { public, eval } = corpora(config, seed)?;
    bn_conditions(config, seed, &public, &eval)
}

fn bn_conditions(
    config: &StudyConfig,
    seed: u64,
    public: &SyntheticCorpus,
    eval: &SyntheticCorpus,
) -> Result<Vec<ConditionResult>> {
    let public_set: Vec<LabelledUtterance> = public.utterances.iter().map(|u| u.labelled()).collect();
    let test_set: Vec<LabelledUtterance> = eval.split(Split::Test).map(|u| u.labelled()).collect();
    let attack = AttackConfig {
        seed,
        ..config.attack
    };
    let arch = config.bn_architecture;
    let mut results = Vec::new();

    let (pretrained, _) = train_bn(&public_set, &training(&config.bn_training, seed, 100), arch, f64::INFINITY)?;
    // Every model gets the same number of epochs; the non-private one
    // continues without noise.
    let finetune = |start: AcousticModel, salt: u64| -> Result<AcousticModel> {
        match config.bn_finetune_epochs {
            Some(epochs) => {
                let cfg = TrainingConfig {
                    epochs,
                    ..training(&config.bn_training, seed, salt)
                };
                Ok(train_bn_from(start, &public_set, &cfg)?.0)
            }
            None => Ok(start),
        }
    };
    let plain = finetune(pretrained.clone(), 110)?;
    let released = release_bn(&plain, eval, &mut NoiseRng::stream(seed, 40))?;
    results.push(ConditionResult {
        condition: Condition::Original,
        asi_error: Some(attack_error(eval, released, &attack)?),
        utility: Some(frame_accuracy(&plain, &test_set, &mut NoiseRng::stream(seed, 41))?),
    });

    for (i, &eps) in config.epsilons.iter().enumerate() {
        let i = i as u64;
        let model = match config.bn_finetune_epochs {
            Some(_) => finetune(pretrained.with_epsilon(eps)?, 111 + i)?,
            None => train_bn(&public_set, &training(&config.bn_training, seed, 101 + i), arch, eps)?.0,
        };
        let released = release_bn(&model, eval, &mut NoiseRng::stream(seed, 50 + i))?;
        results.push(ConditionResult {
            condition: Condition::Private(eps),
            asi_error: Some(attack_error(eval, released, &attack)?),
            utility: Some(frame_accuracy(&model, &test_set, &mut NoiseRng::stream(seed, 60 + i))?),
        });

        let naive_cfg = TrainingConfig {
            epochs: config.naive_classifier_epochs,
            ..training(&config.bn_training, seed, 201 + i)
        };
        let (naive, _) = retrain_classifier(&plain.with_epsilon(eps)?, &public_set, &naive_cfg)?;
        results.push(ConditionResult {
            condition: Condition::Naive(eps),
            asi_error: None,
            utility: Some(frame_accuracy(&naive, &test_set, &mut NoiseRng::stream(seed, 70 + i))?),
        });
    }
    Ok(results)
}

fn release_bn<R: Rng + ?Sized>(model: &AcousticModel, eval: &SyntheticCorpus, rng: &mut R) -> Result<Vec<Matrix>> {
    eval.utterances.iter().map(|u| model.anonymize(&u.features, rng)).collect()
}

/// Both halves of a trial on one pair of corpora.
pub fn run_trial(config: &StudyConfig, seed: u64) -> Result<TrialOutcome> {
    let Corpora { public, eval } = corpora(config, seed)?;
    Ok(TrialOutcome {
        seed,
        pitch: pitch_conditions(config, seed, &public, &eval)?,
        bn: bn_conditions(config, seed, &public, &eval)?,
    })
}
