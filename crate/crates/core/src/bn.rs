//! Differentially private bottleneck (BN) feature extractor.
//!
//! A frame-level acoustic model in three parts: a convolutional BN
//! extractor, the per-frame noise layer, and a frame classifier. The noise
//! layer maps every BN frame `b` to
//!
//! ```text
//! norm1(norm1(b) + Lap(2 / eps)),   norm1(c) = c / ||c||_1
//! ```
//!
//! Two unit-l1 vectors differ by at most 2 in l1 norm, so each released
//! frame is eps-DP and a K-frame utterance is K*eps-DP by composition.
//! The model is trained end to end with frame-level cross-entropy; gradients
//! pass through the noise unchanged and through both normalizations exactly.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autoencoder::{TrainingConfig, TrainingReport};
use crate::dp::{check_epsilon, LaplaceNoise, NoiseRng};
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, log_softmax_rows, Activation, Adam, Conv1d, Matrix};

/// l1 norms at or below this are degenerate for normalization.
pub const MIN_L1: f64 = 1e-12;

/// l1-sensitivity of a unit-l1 frame.
pub const FRAME_SENSITIVITY: f64 = 2.0;

/// Per-frame acoustic features, one row per 10 ms frame (`frames x dims`).
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFrames(Matrix);

impl AcousticFrames {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() == 0 {
            return Err(Error::Empty("acoustic frame sequence"));
        }
        if !m.is_finite() {
            return Err(Error::InvalidArgument("acoustic features must be finite".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn dims(&self) -> usize {
        self.0.cols()
    }
}

/// BN features before the noise layer (`frames x bn_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct BnFeatures(Matrix);

impl BnFeatures {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidArgument("BN features must be finite".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }
}

/// Released BN features: every row has unit l1 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyBnFeatures(Matrix);

impl NoisyBnFeatures {
    pub fn new(m: Matrix) -> Result<Self> {
        for r in 0..m.rows() {
            let norm: f64 = m.row(r).iter().map(|v| v.abs()).sum();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "row {r} has l1 norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BnArchitecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub bn_dim: usize,
    pub classifier_hidden: usize,
    pub classes: usize,
    pub kernel_width: usize,
}

impl Default for BnArchitecture {
    fn default() -> Self {
        Self {
            input_dim: 20,
            hidden: 32,
            bn_dim: 16,
            classifier_hidden: 32,
            classes: 10,
            kernel_width: 5,
        }
    }
}

/// Extractor (3 ReLU convolutions and a linear projection) followed by a
/// two-layer per-frame classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    arch: BnArchitecture,
    /// Per-frame budget of the noise layer; with `f64::INFINITY` the layer only l1-normalizes.
    epsilon: f64,
    extractor: [Conv1d; 4],
    classifier: [Conv1d; 2],
}

impl AcousticModel {
    pub fn new<R: Rng + ?Sized>(arch: BnArchitecture, epsilon: f64, rng: &mut R) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        use Activation::{Linear, Relu};
        let a = arch;
        Ok(Self {
            arch,
            epsilon,
            extractor: [
                Conv1d::uniform(a.input_dim, a.hidden, a.kernel_width, Relu, rng)?,
                Conv1d::uniform(a.hidden, a.hidden, a.kernel_width, Relu, rng)?,
                Conv1d::uniform(a.hidden, a.hidden, a.kernel_width, Relu, rng)?,
                Conv1d::uniform(a.hidden, a.bn_dim, 1, Linear, rng)?,
            ],
            classifier: [
                Conv1d::uniform(a.bn_dim, a.classifier_hidden, 1, Relu, rng)?,
                Conv1d::uniform(a.classifier_hidden, a.classes, 1, Linear, rng)?,
            ],
        })
    }

    pub fn zeros(arch: BnArchitecture, epsilon: f64) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        use Activation::{Linear, Relu};
        let a = arch;
        Ok(Self {
            arch,
            epsilon,
            extractor: [
                Conv1d::zeros(a.input_dim, a.hidden, a.kernel_width, Relu)?,
                Conv1d::zeros(a.hidden, a.hidden, a.kernel_width, Relu)?,
                Conv1d::zeros(a.hidden, a.hidden, a.kernel_width, Relu)?,
                Conv1d::zeros(a.hidden, a.bn_dim, 1, Linear)?,
            ],
            classifier: [
                Conv1d::zeros(a.bn_dim, a.classifier_hidden, 1, Relu)?,
                Conv1d::zeros(a.classifier_hidden, a.classes, 1, Linear)?,
            ],
        })
    }

    /// Rebuilds a model from its six layers, checking that the shapes chain.
    pub fn from_layers(epsilon: f64, layers: Vec<Conv1d>) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        let [e1, e2, e3, proj, c1, c2]: [Conv1d; 6] = layers
            .try_into()
            .map_err(|l: Vec<Conv1d>| Error::shape("6 layers", l.len()))?;
        let arch = BnArchitecture {
            input_dim: e1.in_channels(),
            hidden: e1.out_channels(),
            bn_dim: proj.out_channels(),
            classifier_hidden: c1.out_channels(),
            classes: c2.out_channels(),
            kernel_width: e1.width(),
        };
        let reference = Self::zeros(arch, epsilon)?;
        for (got, want) in [&e1, &e2, &e3, &proj, &c1, &c2].iter().zip(reference.layers()) {
            if got.in_channels() != want.in_channels()
                || got.out_channels() != want.out_channels()
                || got.width() != want.width()
                || got.activation() != want.activation()
            {
                return Err(Error::shape(
                    format!(
                        "{}->{} width {} {:?}",
                        want.in_channels(),
                        want.out_channels(),
                        want.width(),
                        want.activation()
                    ),
                    format!(
                        "{}->{} width {} {:?}",
                        got.in_channels(),
                        got.out_channels(),
                        got.width(),
                        got.activation()
                    ),
                ));
            }
        }
        Ok(Self {
            arch,
            epsilon,
            extractor: [e1, e2, e3, proj],
            classifier: [c1, c2],
        })
    }

    pub fn architecture(&self) -> BnArchitecture {
        self.arch
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }

    /// Same weights, different noise-layer budget.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    /// Extractor layers then classifier layers.
    pub fn layers(&self) -> impl Iterator<Item = &Conv1d> {
        self.extractor.iter().chain(self.classifier.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Conv1d> {
        self.extractor.iter_mut().chain(self.classifier.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Conv1d::param_count).sum()
    }

    fn extractor_param_count(&self) -> usize {
        self.extractor.iter().map(Conv1d::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.layers().for_each(|l| l.extend_params(&mut out));
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(self.param_count(), params.len()));
        }
        let mut offset = 0;
        for layer in self.layers_mut() {
            offset += layer.load_params(&params[offset..]);
        }
        Ok(())
    }

    fn channel_major_input(&self, frames: &AcousticFrames) -> Result<Matrix> {
        if frames.dims() != self.arch.input_dim {
            return Err(Error::shape(
                format!("{} acoustic dims", self.arch.input_dim),
                frames.dims(),
            ));
        }
        Ok(frames.matrix().transpose())
    }

    pub fn extract_bn(&self, frames: &AcousticFrames) -> Result<BnFeatures> {
        let mut x = self.channel_major_input(frames)?;
        for layer in &self.extractor {
            x = layer.forward(&x)?;
        }
        BnFeatures::new(x.transpose())
    }

    /// Log-posteriors, `frames x classes`. Input rows must be `bn_dim` wide.
    pub fn classify_frames(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.arch.bn_dim {
            return Err(Error::shape(format!("{} BN dims", self.arch.bn_dim), features.cols()));
        }
        let mut x = features.transpose();
        for layer in &self.classifier {
            x = layer.forward(&x)?;
        }
        Ok(log_softmax_rows(&x.transpose()))
    }

    /// Extract and apply the noise layer; a non-private model only l1-normalizes.
    pub fn anonymize<R: Rng + ?Sized>(&self, frames: &AcousticFrames, rng: &mut R) -> Result<Matrix> {
        let bn = self.extract_bn(frames)?;
        if self.is_private() {
            return Ok(noise_layer(&bn, self.epsilon, rng)?.into_matrix());
        }
        let m = bn.matrix();
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&norm1(m.row(r))?);
        }
        Ok(out)
    }

    /// Draws per-frame noise for `frames` frames (`frames x bn_dim`).
    pub fn draw_noise<R: Rng + ?Sized>(&self, frames: usize, rng: &mut R) -> Result<Matrix> {
        if !self.is_private() {
            return Ok(Matrix::zeros(frames, self.arch.bn_dim));
        }
        let noise = LaplaceNoise::calibrated(FRAME_SENSITIVITY, self.epsilon)?;
        Ok(Matrix::from_fn(frames, self.arch.bn_dim, |_, _| noise.sample(rng)))
    }

    fn forward_trace(
        &self,
        frames: &AcousticFrames,
        noise: &Matrix,
        masks: &[Option<Matrix>],
        frozen_extractor: bool,
    ) -> Result<(Matrix, BnTrace)> {
        let x0 = self.channel_major_input(frames)?;
        let k = frames.frames();
        if noise.shape() != (k, self.arch.bn_dim) {
            return Err(Error::shape(
                format!("{}x{} noise", k, self.arch.bn_dim),
                format!("{}x{}", noise.rows(), noise.cols()),
            ));
        }
        let mut inputs = Vec::with_capacity(6);
        let mut outputs = Vec::with_capacity(6);
        let mut x = x0;
        for (idx, layer) in self.extractor.iter().enumerate() {
            let y = layer.forward(&x)?;
            inputs.push(x);
            x = match &masks[idx] {
                Some(m) => y.zip_map(m, |a, b| a * b),
                None => y.clone(),
            };
            outputs.push(y);
        }
        // x: bn_dim x frames
        let bn = x;
        let mut released = bn.clone();
        // Without a budget the noise rows are zero and the layer reduces to l1 normalization.
        let mut norms = Vec::with_capacity(k);
        for t in 0..k {
            let b: Vec<f64> = (0..self.arch.bn_dim).map(|m| bn.get(m, t)).collect();
            let s1 = l1(&b);
            if s1 <= MIN_L1 {
                return Err(Error::Degenerate(format!("BN frame {t} has zero l1 norm")));
            }
            let c: Vec<f64> = b.iter().zip(noise.row(t)).map(|(v, e)| v / s1 + e).collect();
            let s2 = l1(&c);
            if s2 <= MIN_L1 {
                return Err(Error::Degenerate(format!("noisy BN frame {t} has zero l1 norm")));
            }
            for (m, cv) in c.iter().enumerate() {
                released.set(m, t, cv / s2);
            }
            norms.push((s1, c, s2));
        }
        let mut x = released.clone();
        for (j, layer) in self.classifier.iter().enumerate() {
            let y = layer.forward(&x)?;
            inputs.push(x);
            x = match &masks[4 + j] {
                Some(m) => y.zip_map(m, |a, b| a * b),
                None => y.clone(),
            };
            outputs.push(y);
        }
        let logprobs = log_softmax_rows(&x.transpose());
        Ok((
            logprobs,
            BnTrace {
                inputs,
                outputs,
                masks: masks.to_vec(),
                bn,
                norms,
                frozen_extractor,
            },
        ))
    }

    /// Gradient of the mean per-frame cross-entropy given `grad_logits` (`frames x classes`).
    fn backward(&self, trace: &BnTrace, grad_logits: Matrix) -> Vec<f64> {
        let sizes: Vec<usize> = self.layers().map(Conv1d::param_count).collect();
        let mut offsets = vec![0; 6];
        for i in 1..6 {
            offsets[i] = offsets[i - 1] + sizes[i - 1];
        }
        let mut grad = vec![0.0; self.param_count()];
        let layers: Vec<&Conv1d> = self.layers().collect();
        let mut g = grad_logits.transpose();
        for idx in (0..6).rev() {
            if idx == 3 {
                if trace.frozen_extractor {
                    break;
                }
                g = self.noise_layer_backward(trace, &g);
            }
            if let Some(m) = &trace.masks[idx] {
                g = g.zip_map(m, |a, b| a * b);
            }
            let slot = &mut grad[offsets[idx]..offsets[idx] + sizes[idx]];
            g = layers[idx].backward(&trace.inputs[idx], &trace.outputs[idx], &g, slot);
        }
        grad
    }

    /// Backpropagates through `norm1(norm1(b) + noise)` frame by frame.
    fn noise_layer_backward(&self, trace: &BnTrace, grad_out: &Matrix) -> Matrix {
        let dims = self.arch.bn_dim;
        let mut grad_bn = Matrix::zeros(dims, grad_out.cols());
        for (t, (s1, c, s2)) in trace.norms.iter().enumerate() {
            let g_out: Vec<f64> = (0..dims).map(|m| grad_out.get(m, t)).collect();
            let g_c = norm1_backward(c, *s2, &g_out);
            let b: Vec<f64> = (0..dims).map(|m| trace.bn.get(m, t)).collect();
            let g_b = norm1_backward(&b, *s1, &g_c);
            for (m, v) in g_b.into_iter().enumerate() {
                grad_bn.set(m, t, v);
            }
        }
        grad_bn
    }
}

struct BnTrace {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
    /// Extractor output, `bn_dim x frames`.
    bn: Matrix,
    /// Per frame: first norm, noisy unnormalized vector, second norm.
    norms: Vec<(f64, Vec<f64>, f64)>,
    frozen_extractor: bool,
}

fn check_model_epsilon(epsilon: f64) -> Result<()> {
    if epsilon == f64::INFINITY {
        Ok(())
    } else {
        check_epsilon(epsilon)
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Vector-Jacobian product of `y = c / ||c||_1`.
fn norm1_backward(c: &[f64], s: f64, g: &[f64]) -> Vec<f64> {
    let dot: f64 = g.iter().zip(c).map(|(a, b)| a * b).sum();
    c.iter()
        .zip(g)
        .map(|(cj, gj)| gj / s - cj.signum() * dot / (s * s))
        .collect()
}

fn norm1(v: &[f64]) -> Result<Vec<f64>> {
    let s = l1(v);
    if s <= MIN_L1 {
        return Err(Error::Degenerate(format!("l1 norm {s:e} too small to normalize")));
    }
    Ok(v.iter().map(|x| x / s).collect())
}

/// `norm1(norm1(b) + Laplace(2 / epsilon))` for one frame. A noisy vector
/// with vanishing l1 norm is redrawn once.
pub fn frame_noise<R: Rng + ?Sized>(b: &[f64], epsilon: f64, rng: &mut R) -> Result<Vec<f64>> {
    let noise = LaplaceNoise::calibrated(FRAME_SENSITIVITY, epsilon)?;
    let unit = norm1(b)?;
    for _ in 0..2 {
        let noisy: Vec<f64> = unit.iter().map(|v| v + noise.sample(rng)).collect();
        if l1(&noisy) > MIN_L1 {
            return norm1(&noisy);
        }
    }
    Err(Error::Degenerate("noisy BN frame summed to zero twice".into()))
}

/// [`frame_noise`] applied independently to every frame.
pub fn noise_layer<R: Rng + ?Sized>(
    features: &BnFeatures,
    epsilon: f64,
    rng: &mut R,
) -> Result<NoisyBnFeatures> {
    check_epsilon(epsilon)?;
    let m = features.matrix();
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = frame_noise(m.row(r), epsilon, rng)?;
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok(NoisyBnFeatures(out))
}

/// Input-perturbation baseline: the noise layer applied to features of a
/// model that was trained without it.
pub fn naive_dp_bn<R: Rng + ?Sized>(
    features: &BnFeatures,
    epsilon: f64,
    rng: &mut R,
) -> Result<NoisyBnFeatures> {
    noise_layer(features, epsilon, rng)
}

/// Cross-entropy of log-posteriors against frame labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub total: f64,
    pub per_frame: f64,
}

pub fn ce_loss(logprobs: &Matrix, labels: &[usize]) -> Result<CrossEntropy> {
    if logprobs.rows() != labels.len() {
        return Err(Error::shape(format!("{} labels", logprobs.rows()), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    let mut total = 0.0;
    for (k, &label) in labels.iter().enumerate() {
        if label >= logprobs.cols() {
            return Err(Error::InvalidArgument(format!(
                "label {label} at frame {k} is outside [0, {})",
                logprobs.cols()
            )));
        }
        total -= logprobs.get(k, label);
    }
    Ok(CrossEntropy {
        total,
        per_frame: total / labels.len() as f64,
    })
}

/// Gradient of the per-frame mean CE w.r.t. the logits, `frames x classes`.
fn ce_logit_grad(logprobs: &Matrix, labels: &[usize]) -> Matrix {
    let k = labels.len() as f64;
    let mut g = logprobs.map(f64::exp);
    for (t, &label) in labels.iter().enumerate() {
        let v = g.get(t, label);
        g.set(t, label, v - 1.0);
    }
    g.map(|v| v / k)
}

fn check_labels(frames: &AcousticFrames, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != frames.frames() {
        return Err(Error::shape(format!("{} labels", frames.frames()), labels.len()));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

/// Per-frame mean cross-entropy and full parameter gradient under a fixed
/// noise realization (`frames x bn_dim`). Dropout is off.
pub fn bn_loss_gradient(
    model: &AcousticModel,
    frames: &AcousticFrames,
    labels: &[usize],
    noise: &Matrix,
) -> Result<(f64, Vec<f64>)> {
    check_labels(frames, labels, model.arch.classes)?;
    let (logprobs, trace) = model.forward_trace(frames, noise, &[None, None, None, None, None, None], false)?;
    let loss = ce_loss(&logprobs, labels)?.per_frame;
    Ok((loss, model.backward(&trace, ce_logit_grad(&logprobs, labels))))
}

/// Per-frame mean cross-entropy under a fixed noise realization.
pub fn bn_loss_at(
    model: &AcousticModel,
    frames: &AcousticFrames,
    labels: &[usize],
    noise: &Matrix,
) -> Result<f64> {
    check_labels(frames, labels, model.arch.classes)?;
    let (logprobs, _) = model.forward_trace(frames, noise, &[None, None, None, None, None, None], false)?;
    Ok(ce_loss(&logprobs, labels)?.per_frame)
}

/// One labelled training utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledUtterance {
    pub frames: AcousticFrames,
    pub labels: Vec<usize>,
}

/// Trains the whole acoustic model end to end with fresh noise per utterance per step.
pub fn train_bn(
    corpus: &[LabelledUtterance],
    config: &TrainingConfig,
    arch: BnArchitecture,
    epsilon: f64,
) -> Result<(AcousticModel, TrainingReport)> {
    let mut init_rng = NoiseRng::stream(config.seed, 0);
    let model = AcousticModel::new(arch, epsilon, &mut init_rng)?;
    fit(model, corpus, config, false)
}

/// Continues end-to-end training of `model`, keeping its noise layer.
pub fn train_bn_from(
    model: AcousticModel,
    corpus: &[LabelledUtterance],
    config: &TrainingConfig,
) -> Result<(AcousticModel, TrainingReport)> {
    fit(model, corpus, config, false)
}

/// Retrains only the classifier of `model` on top of its frozen extractor
/// (and noise layer, if private).
pub fn retrain_classifier(
    model: &AcousticModel,
    corpus: &[LabelledUtterance],
    config: &TrainingConfig,
) -> Result<(AcousticModel, TrainingReport)> {
    let mut init_rng = NoiseRng::stream(config.seed, 4);
    let fresh = AcousticModel::new(model.arch, model.epsilon, &mut init_rng)?;
    let mut start = model.clone();
    start.classifier = fresh.classifier;
    fit(start, corpus, config, true)
}

fn fit(
    mut model: AcousticModel,
    corpus: &[LabelledUtterance],
    config: &TrainingConfig,
    frozen_extractor: bool,
) -> Result<(AcousticModel, TrainingReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("BN training corpus"));
    }
    for utt in corpus {
        check_labels(&utt.frames, &utt.labels, model.arch.classes)?;
        if utt.frames.dims() != model.arch.input_dim {
            return Err(Error::shape(
                format!("{} acoustic dims", model.arch.input_dim),
                utt.frames.dims(),
            ));
        }
    }
    let mut order_rng = NoiseRng::stream(config.seed, 1);
    let mut noise_rng = NoiseRng::stream(config.seed, 2);
    let mut dropout_rng = NoiseRng::stream(config.seed, 3);
    let mut adam = Adam::new(model.param_count(), config.learning_rate, config.weight_decay);
    let mut params = model.params();
    let first_trainable = if frozen_extractor {
        model.extractor_param_count()
    } else {
        0
    };
    let mut report = TrainingReport::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let a = model.arch;

    for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let utt = &corpus[i];
            let k = utt.frames.frames();
            let noise = model.draw_noise(k, &mut noise_rng)?;
            let widths = [a.hidden, a.hidden, a.hidden, 0, a.classifier_hidden, 0];
            let masks: Vec<Option<Matrix>> = widths
                .iter()
                .enumerate()
                .map(|(idx, &w)| {
                    let trainable = !frozen_extractor || idx >= 4;
                    (config.dropout > 0.0 && w > 0 && trainable)
                        .then(|| dropout_mask(w, k, config.dropout, &mut dropout_rng))
                })
                .collect();
            let (logprobs, trace) = match model.forward_trace(&utt.frames, &noise, &masks, frozen_extractor) {
                Ok(v) => v,
                Err(Error::Degenerate(_)) => continue,
                Err(e) => return Err(e),
            };
            epoch_loss += ce_loss(&logprobs, &utt.labels)?.per_frame;
            let mut grad = model.backward(&trace, ce_logit_grad(&logprobs, &utt.labels));
            grad[..first_trainable].fill(0.0);
            let frozen: Vec<f64> = params[..first_trainable].to_vec();
            adam.step(&mut params, &grad);
            params[..first_trainable].copy_from_slice(&frozen);
            model.set_params(&params)?;
        }
        report.epoch_losses.push(epoch_loss / corpus.len() as f64);
    }
    Ok((model, report))
}

/// Fraction of frames whose argmax posterior matches the label, over `corpus`,
/// with one fresh noise draw per utterance.
pub fn frame_accuracy<R: Rng + ?Sized>(
    model: &AcousticModel,
    corpus: &[LabelledUtterance],
    rng: &mut R,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for utt in corpus {
        check_labels(&utt.frames, &utt.labels, model.arch.classes)?;
        let released = model.anonymize(&utt.frames, rng)?;
        let logprobs = model.classify_frames(&released)?;
        for (t, &label) in utt.labels.iter().enumerate() {
            let row = logprobs.row(t);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .expect("classes > 0");
            correct += usize::from(best == label);
        }
        total += utt.labels.len();
    }
    if total == 0 {
        return Err(Error::Empty("evaluation corpus"));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> BnArchitecture {
        BnArchitecture {
            input_dim: 3,
            hidden: 4,
            bn_dim: 5,
            classifier_hidden: 4,
            classes: 3,
            kernel_width: 5,
        }
    }

    fn frames(k: usize, dims: usize, rng: &mut NoiseRng) -> AcousticFrames {
        AcousticFrames::new(Matrix::from_fn(k, dims, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn extraction_preserves_length() {
        let mut rng = NoiseRng::seeded(1);
        let model = AcousticModel::new(small_arch(), 1.0, &mut rng).unwrap();
        for k in [10, 100] {
            let bn = model.extract_bn(&frames(k, 3, &mut rng)).unwrap();
            assert_eq!(bn.matrix().shape(), (k, 5));
            assert!(bn.matrix().is_finite());
        }
        assert!(model.extract_bn(&frames(10, 4, &mut rng)).is_err());
    }

    #[test]
    fn zero_model_gives_constant_rows() {
        let mut rng = NoiseRng::seeded(2);
        let model = AcousticModel::zeros(small_arch(), 1.0).unwrap();
        let bn = model.extract_bn(&frames(7, 3, &mut rng)).unwrap();
        assert!(bn.matrix().as_slice().iter().all(|v| *v == 0.0));
        let lp = model.classify_frames(&Matrix::zeros(7, 5)).unwrap();
        assert!(lp.as_slice().iter().all(|v| (v - (1.0f64 / 3.0).ln()).abs() < 1e-12));
    }

    #[test]
    fn frame_noise_unit_norm_and_scale() {
        let mut rng = NoiseRng::seeded(3);
        assert_eq!(LaplaceNoise::calibrated(FRAME_SENSITIVITY, 1.0).unwrap().scale(), 2.0);
        for _ in 0..100 {
            let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let out = frame_noise(&b, 1.0, &mut rng).unwrap();
            assert!((l1(&out) - 1.0).abs() < 1e-9);
        }
        assert!(matches!(frame_noise(&[0.0; 4], 1.0, &mut rng), Err(Error::Degenerate(_))));
        assert!(frame_noise(&[1.0; 4], 0.0, &mut rng).is_err());
    }

    #[test]
    fn noise_layer_rowwise_and_seeded() {
        let bn = BnFeatures::new(Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 - 5.5)).unwrap();
        let a = noise_layer(&bn, 2.0, &mut NoiseRng::seeded(4)).unwrap();
        let b = noise_layer(&bn, 2.0, &mut NoiseRng::seeded(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames(), 3);
        assert_ne!(a.matrix().row(0), a.matrix().row(1));
        let naive = naive_dp_bn(&bn, 2.0, &mut NoiseRng::seeded(4)).unwrap();
        assert_eq!(naive, a);
    }

    #[test]
    fn ce_examples() {
        let perfect = Matrix::from_fn(4, 3, |r, c| if c == r % 3 { 0.0 } else { -1e300 });
        assert_eq!(ce_loss(&perfect, &[0, 1, 2, 0]).unwrap().total, 0.0);
        let uniform = Matrix::from_fn(5, 10, |_, _| (0.1f64).ln());
        let ce = ce_loss(&uniform, &[0, 1, 2, 3, 9]).unwrap();
        assert!((ce.total - 5.0 * 10f64.ln()).abs() < 1e-12);
        assert!((ce.per_frame - 10f64.ln()).abs() < 1e-12);
        assert!(ce_loss(&uniform, &[0, 1, 2, 3, 10]).is_err());
        assert!(ce_loss(&uniform, &[0]).is_err());
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut rng = NoiseRng::seeded(5);
        let model = AcousticModel::new(small_arch(), 1.0, &mut rng).unwrap();
        let released = model.anonymize(&frames(12, 3, &mut rng), &mut rng).unwrap();
        let lp = model.classify_frames(&released).unwrap();
        for r in 0..lp.rows() {
            let s: f64 = lp.row(r).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = NoiseRng::seeded(7);
        for eps in [2.0, f64::INFINITY] {
            let model = AcousticModel::new(small_arch(), eps, &mut rng).unwrap();
            let x = frames(9, 3, &mut rng);
            let labels: Vec<usize> = (0..9).map(|t| t % 3).collect();
            let noise = model.draw_noise(9, &mut rng).unwrap();
            let (loss, grad) = bn_loss_gradient(&model, &x, &labels, &noise).unwrap();
            assert!((loss - bn_loss_at(&model, &x, &labels, &noise).unwrap()).abs() < 1e-12);
            let base = model.params();
            let h = 1e-6;
            for i in (0..base.len()).step_by(7) {
                let mut probe = model.clone();
                let mut p = base.clone();
                p[i] += h;
                probe.set_params(&p).unwrap();
                let up = bn_loss_at(&probe, &x, &labels, &noise).unwrap();
                p[i] -= 2.0 * h;
                probe.set_params(&p).unwrap();
                let down = bn_loss_at(&probe, &x, &labels, &noise).unwrap();
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()), "eps {eps} param {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn frozen_extractor_stays_fixed() {
        let mut rng = NoiseRng::seeded(6);
        let corpus: Vec<LabelledUtterance> = (0..4)
            .map(|i| LabelledUtterance {
                frames: frames(12, 3, &mut rng),
                labels: (0..12).map(|t| (t + i) % 3).collect(),
            })
            .collect();
        let cfg = TrainingConfig {
            epochs: 2,
            seed: 1,
            ..Default::default()
        };
        let (base, _) = train_bn(&corpus, &cfg, small_arch(), f64::INFINITY).unwrap();
        let private = base.with_epsilon(5.0).unwrap();
        let (tuned, report) = retrain_classifier(&private, &corpus, &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), 2);
        let n = base.extractor_param_count();
        assert_eq!(&tuned.params()[..n], &base.params()[..n]);
        assert_ne!(&tuned.params()[n..], &base.params()[n..]);
        assert!(train_bn(&[], &cfg, small_arch(), 1.0).is_err());
    }
}
