//! Desk-scale speaker attacks on released features.
//!
//! Identification: mean and standard-deviation pooling over frames, one
//! hidden tanh layer, softmax over speakers. Verification: cosine similarity
//! between pooled utterance embeddings and enrolled speaker means.

use rand::seq::SliceRandom;
use rand::Rng;

use super::metrics::ScoreSet;
use crate::anonymizer::cosine_similarity;
use crate::dp::NoiseRng;
use crate::error::{Error, Result};
use crate::nn::{Adam, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    /// 80/10/10 assignment of the `index`-th of `count` utterances of one
    /// speaker: the last tenth is test, the tenth before it validation.
    pub fn for_position(index: usize, count: usize) -> Split {
        let tenth = count / 10;
        if index >= count - tenth {
            Split::Test
        } else if index >= count - 2 * tenth {
            Split::Validation
        } else {
            Split::Train
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Split> {
        match name {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One utterance's frame features (`frames x dims`) with its speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: Matrix,
    pub speaker: usize,
    pub split: Split,
}

/// Utterances of several speakers split into train, validation and test.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureCorpus {
    items: Vec<LabeledFeatures>,
    speakers: usize,
    dims: usize,
}

impl LabeledFeatureCorpus {
    pub fn new(items: Vec<LabeledFeatures>) -> Result<Self> {
        let first = items.first().ok_or(Error::Empty("feature corpus"))?;
        let dims = first.features.cols();
        if dims == 0 {
            return Err(Error::Empty("feature dimension"));
        }
        let speakers = items.iter().map(|u| u.speaker).max().unwrap_or(0) + 1;
        let mut in_train = vec![false; speakers];
        for (i, item) in items.iter().enumerate() {
            if item.features.cols() != dims {
                return Err(Error::shape(format!("{dims} feature dims"), format!("{} in item {i}", item.features.cols())));
            }
            if item.features.rows() == 0 {
                return Err(Error::InvalidArgument(format!("item {i} has no frames")));
            }
            if !item.features.is_finite() {
                return Err(Error::InvalidArgument(format!("item {i} has non-finite features")));
            }
            in_train[item.speaker] |= item.split == Split::Train;
        }
        if let Some(missing) = in_train.iter().position(|t| !t) {
            return Err(Error::InvalidArgument(format!("speaker {missing} has no training utterance")));
        }
        Ok(Self { items, speakers, dims })
    }

    pub fn items(&self) -> &[LabeledFeatures] {
        &self.items
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn split(&self, split: Split) -> Vec<&LabeledFeatures> {
        self.items.iter().filter(|u| u.split == split).collect()
    }
}

/// Per-dimension mean followed by per-dimension population std over frames.
pub fn pooled_statistics(features: &Matrix) -> Result<Vec<f64>> {
    let (k, d) = features.shape();
    if k == 0 {
        return Err(Error::Empty("frame sequence"));
    }
    let mut out = vec![0.0; 2 * d];
    for r in 0..k {
        for (c, v) in features.row(r).iter().enumerate() {
            out[c] += v;
        }
    }
    for c in 0..d {
        out[c] /= k as f64;
    }
    for r in 0..k {
        for (c, v) in features.row(r).iter().enumerate() {
            out[d + c] += (v - out[c]).powi(2);
        }
    }
    for c in 0..d {
        out[d + c] = (out[d + c] / k as f64).sqrt();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before training stops.
    pub patience: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            batch_size: 16,
            max_epochs: 200,
            patience: 20,
            seed: 0,
        }
    }
}

/// Pooled-statistics speaker classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    hidden: usize,
    speakers: usize,
    /// `w1 (hidden x input) | b1 | w2 (speakers x hidden) | b2`.
    params: Vec<f64>,
}

impl AttackModel {
    pub fn input_width(&self) -> usize {
        self.input_mean.len()
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    fn standardize(&self, pooled: &[f64]) -> Vec<f64> {
        pooled
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let (h, s) = (self.hidden, self.speakers);
        let p = &self.params;
        let (w1, rest) = p.split_at(h * n);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(s * h);
        let hidden: Vec<f64> = (0..h)
            .map(|j| (b1[j] + w1[j * n..(j + 1) * n].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh())
            .collect();
        let logits: Vec<f64> = (0..s)
            .map(|c| b2[c] + w2[c * h..(c + 1) * h].iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let probs = logits.iter().map(|l| (l - max).exp() / z).collect();
        (hidden, probs)
    }

    /// Adds the CE gradient for one example into `grad`; returns its loss.
    fn accumulate(&self, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let n = x.len();
        let (h, s) = (self.hidden, self.speakers);
        let (hidden, probs) = self.forward(x);
        let w2 = &self.params[h * n + h..h * n + h + s * h];
        let (gw1, rest) = grad.split_at_mut(h * n);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(s * h);
        let mut g_hidden = vec![0.0; h];
        for c in 0..s {
            let g = probs[c] - f64::from(u8::from(c == label));
            gb2[c] += g;
            for j in 0..h {
                gw2[c * h + j] += g * hidden[j];
                g_hidden[j] += g * w2[c * h + j];
            }
        }
        for j in 0..h {
            let g = g_hidden[j] * (1.0 - hidden[j] * hidden[j]);
            gb1[j] += g;
            for (gw, v) in gw1[j * n..(j + 1) * n].iter_mut().zip(x) {
                *gw += g * v;
            }
        }
        -probs[label].max(f64::MIN_POSITIVE).ln()
    }

    /// Speaker posteriors for one utterance.
    pub fn posteriors(&self, features: &Matrix) -> Result<Vec<f64>> {
        let pooled = pooled_statistics(features)?;
        if pooled.len() != self.input_width() {
            return Err(Error::shape(self.input_width() / 2, features.cols()));
        }
        Ok(self.forward(&self.standardize(&pooled)).1)
    }

    pub fn predict(&self, features: &Matrix) -> Result<usize> {
        let probs = self.posteriors(features)?;
        Ok((0..probs.len())
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
            .expect("at least 2 speakers"))
    }

    /// Top-1 accuracy in [0, 1].
    pub fn accuracy(&self, items: &[&LabeledFeatures]) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::Empty("evaluation split"));
        }
        let mut correct = 0usize;
        for item in items {
            correct += usize::from(self.predict(&item.features)? == item.speaker);
        }
        Ok(correct as f64 / items.len() as f64)
    }
}

pub fn train_asi_attack(corpus: &LabeledFeatureCorpus, config: &AttackConfig) -> Result<AttackModel> {
    if corpus.speakers() < 2 {
        return Err(Error::InvalidArgument("an identification attack needs at least 2 speakers".into()));
    }
    if config.hidden == 0 || config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::InvalidArgument("hidden width, batch size and epochs must be positive".into()));
    }
    let train: Vec<(Vec<f64>, usize)> = corpus
        .split(Split::Train)
        .into_iter()
        .map(|u| Ok((pooled_statistics(&u.features)?, u.speaker)))
        .collect::<Result<_>>()?;
    let validation = corpus.split(Split::Validation);

    let width = 2 * corpus.dims();
    let count = train.len() as f64;
    let input_mean: Vec<f64> = (0..width).map(|c| train.iter().map(|(x, _)| x[c]).sum::<f64>() / count).collect();
    let input_scale: Vec<f64> = (0..width)
        .map(|c| {
            let var = train.iter().map(|(x, _)| (x[c] - input_mean[c]).powi(2)).sum::<f64>() / count;
            var.sqrt().max(1e-8)
        })
        .collect();

    let (h, s) = (config.hidden, corpus.speakers());
    let mut rng = NoiseRng::stream(config.seed, 0);
    let bound1 = (1.0 / width as f64).sqrt();
    let bound2 = (1.0 / h as f64).sqrt();
    let mut params = Vec::with_capacity(h * width + h + s * h + s);
    params.extend((0..h * width).map(|_| rng.gen_range(-bound1..bound1)));
    params.extend(std::iter::repeat(0.0).take(h));
    params.extend((0..s * h).map(|_| rng.gen_range(-bound2..bound2)));
    params.extend(std::iter::repeat(0.0).take(s));

    let mut model = AttackModel {
        input_mean,
        input_scale,
        hidden: h,
        speakers: s,
        params,
    };
    let inputs: Vec<(Vec<f64>, usize)> = train.iter().map(|(x, y)| (model.standardize(x), *y)).collect();
    let mut adam = Adam::new(model.params.len(), config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut best = (f64::NEG_INFINITY, model.params.clone());
    let mut since_best = 0;
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = vec![0.0; model.params.len()];
            for &i in batch {
                model.accumulate(&inputs[i].0, inputs[i].1, &mut grad);
            }
            grad.iter_mut().for_each(|g| *g /= batch.len() as f64);
            let mut params = std::mem::take(&mut model.params);
            adam.step(&mut params, &grad);
            model.params = params;
        }
        if validation.is_empty() {
            best.1.clone_from(&model.params);
            continue;
        }
        let acc = model.accuracy(&validation)?;
        if acc > best.0 {
            best = (acc, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(model)
}

/// Identification error in percent, `100 * (1 - top-1 accuracy)`.
pub fn asi_error(model: &AttackModel, test: &[&LabeledFeatures]) -> Result<f64> {
    Ok(100.0 * (1.0 - model.accuracy(test)?))
}

/// A verification trial: an utterance claiming to be `claim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub features: Matrix,
    pub speaker: usize,
    pub claim: usize,
}

/// Cosine scores between each trial's pooled embedding and the mean pooled
/// embedding of the claimed speaker's enrollment utterances.
pub fn linkage_scores(enroll: &[(usize, Vec<Matrix>)], trials: &[Trial]) -> Result<ScoreSet> {
    let mut centroids = std::collections::HashMap::new();
    for (speaker, utterances) in enroll {
        if utterances.is_empty() {
            return Err(Error::InvalidArgument(format!("speaker {speaker} has no enrollment utterances")));
        }
        let embeddings: Vec<Vec<f64>> = utterances.iter().map(pooled_statistics).collect::<Result<_>>()?;
        let mut mean = vec![0.0; embeddings[0].len()];
        for e in &embeddings {
            if e.len() != mean.len() {
                return Err(Error::shape(mean.len() / 2, e.len() / 2));
            }
            mean.iter_mut().zip(e).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= embeddings.len() as f64);
        centroids.insert(*speaker, mean);
    }
    let mut scores = ScoreSet::default();
    for (i, trial) in trials.iter().enumerate() {
        let centroid = centroids
            .get(&trial.claim)
            .ok_or_else(|| Error::InvalidArgument(format!("trial {i} claims unenrolled speaker {}", trial.claim)))?;
        let embedding = pooled_statistics(&trial.features)?;
        if embedding.len() != centroid.len() {
            return Err(Error::shape(centroid.len() / 2, embedding.len() / 2));
        }
        let score = cosine_similarity(&embedding, centroid);
        if trial.speaker == trial.claim {
            scores.mated.push(score);
        } else {
            scores.nonmated.push(score);
        }
    }
    Ok(scores)
}
