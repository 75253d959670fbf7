//! Differentially private pitch autoencoder.
//!
//! ```text
//! z --E--> h in [0,1]^{C x K} --(+ Lap(CK/eps))--> clip to [0,1] --D--> z_dp
//! ```
//!
//! The encoder is three sigmoid convolutions, so every latent entry lies in
//! `[0, 1]` and the l1 distance between any two latents is at most `C * K`.
//! Adding `Laplace(C * K / eps)` per entry therefore makes the latent
//! release epsilon-DP, and clipping and decoding are post-processing.
//! Training maximizes the Pearson correlation between `z` and `z_dp`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dp::{check_epsilon, sigmoid_encoder_sensitivity, LaplaceNoise, NoiseRng};
use crate::error::{Error, Result};
use crate::eval::pearson_corr;
use crate::nn::{dropout_mask, Activation, Adam, Conv1d, Matrix};
use crate::pitch::{
    normalize, pitch_convert, reinsert_zeros, remove_zeros, with_voiced, PitchSequence, PitchStats,
};

pub const DEFAULT_CHANNELS: usize = 8;
pub const DEFAULT_KERNEL_WIDTH: usize = 5;

/// Sigmoid-bounded encoder output, `channels x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(Matrix);

impl LatentCode {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("latent entries must lie in [0, 1]".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.rows()
    }

    pub fn frames(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            dropout: 1e-3,
            batch_size: 1,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive and weight decay non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size != 1 {
            return Err(Error::InvalidArgument(
                "variable-length sequences are trained one at a time (batch_size = 1)".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("at least one epoch is required".into()));
        }
        Ok(())
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchAutoencoder {
    channels: usize,
    width: usize,
    /// Per-utterance budget of the latent release. `f64::INFINITY` disables the
    /// noise layer (non-private reference model).
    epsilon: f64,
    encoder: [Conv1d; 3],
    decoder: [Conv1d; 3],
}

/// Forward activations kept for backpropagation.
struct Trace {
    /// Input to each of the six layers.
    inputs: Vec<Matrix>,
    /// Activated output of each layer, before dropout.
    outputs: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
    /// Latent after noise, before clipping.
    noisy: Matrix,
}

impl PitchAutoencoder {
    pub fn new<R: Rng + ?Sized>(channels: usize, width: usize, epsilon: f64, rng: &mut R) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        use Activation::{Linear, Sigmoid};
        let c = channels;
        Ok(Self {
            channels,
            width,
            epsilon,
            encoder: [
                Conv1d::uniform(1, c, width, Sigmoid, rng)?,
                Conv1d::uniform(c, c, width, Sigmoid, rng)?,
                Conv1d::uniform(c, c, width, Sigmoid, rng)?,
            ],
            decoder: [
                Conv1d::uniform(c, c, width, Sigmoid, rng)?,
                Conv1d::uniform(c, c, width, Sigmoid, rng)?,
                Conv1d::uniform(c, 1, width, Linear, rng)?,
            ],
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(channels: usize, width: usize, epsilon: f64) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        use Activation::{Linear, Sigmoid};
        let c = channels;
        Ok(Self {
            channels,
            width,
            epsilon,
            encoder: [
                Conv1d::zeros(1, c, width, Sigmoid)?,
                Conv1d::zeros(c, c, width, Sigmoid)?,
                Conv1d::zeros(c, c, width, Sigmoid)?,
            ],
            decoder: [
                Conv1d::zeros(c, c, width, Sigmoid)?,
                Conv1d::zeros(c, c, width, Sigmoid)?,
                Conv1d::zeros(c, 1, width, Linear)?,
            ],
        })
    }

    /// Rebuilds a model from explicit layers, checking that the shapes chain.
    pub fn from_layers(epsilon: f64, layers: Vec<Conv1d>) -> Result<Self> {
        check_model_epsilon(epsilon)?;
        let [e1, e2, e3, d1, d2, d3]: [Conv1d; 6] = layers
            .try_into()
            .map_err(|l: Vec<Conv1d>| Error::shape("6 layers", l.len()))?;
        let c = e1.out_channels();
        let width = e1.width();
        use Activation::{Linear, Sigmoid};
        let expected = [
            (1, c, Sigmoid),
            (c, c, Sigmoid),
            (c, c, Sigmoid),
            (c, c, Sigmoid),
            (c, c, Sigmoid),
            (c, 1, Linear),
        ];
        for (layer, (cin, cout, act)) in [&e1, &e2, &e3, &d1, &d2, &d3].iter().zip(expected) {
            if layer.in_channels() != cin
                || layer.out_channels() != cout
                || layer.activation() != act
                || layer.width() != width
            {
                return Err(Error::shape(
                    format!("{cin}->{cout} {act:?} width {width}"),
                    format!(
                        "{}->{} {:?} width {}",
                        layer.in_channels(),
                        layer.out_channels(),
                        layer.activation(),
                        layer.width()
                    ),
                ));
            }
        }
        Ok(Self {
            channels: c,
            width,
            epsilon,
            encoder: [e1, e2, e3],
            decoder: [d1, d2, d3],
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel_width(&self) -> usize {
        self.width
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }

    /// Encoder layers followed by decoder layers.
    pub fn layers(&self) -> impl Iterator<Item = &Conv1d> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Conv1d> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Conv1d::param_count).sum()
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

    fn input_row(&self, z: &[f64]) -> Result<Matrix> {
        if z.len() < self.width {
            return Err(Error::InvalidArgument(format!(
                "sequence of {} frames is shorter than the kernel width {}",
                z.len(),
                self.width
            )));
        }
        Matrix::from_vec(1, z.len(), z.to_vec())
    }

    pub fn encode(&self, z: &[f64]) -> Result<LatentCode> {
        let mut x = self.input_row(z)?;
        for layer in &self.encoder {
            x = layer.forward(&x)?;
        }
        Ok(LatentCode(x))
    }

    pub fn decode(&self, clipped: &Matrix) -> Result<Vec<f64>> {
        if clipped.rows() != self.channels {
            return Err(Error::shape(
                format!("{} latent channels", self.channels),
                clipped.rows(),
            ));
        }
        let mut x = clipped.clone();
        for layer in &self.decoder {
            x = layer.forward(&x)?;
        }
        Ok(x.into_vec())
    }

    /// Noise scale the model applies to a latent of `frames` frames.
    pub fn noise_scale(&self, frames: usize) -> Result<f64> {
        if !self.is_private() {
            return Ok(0.0);
        }
        Ok(sigmoid_encoder_sensitivity(self.channels, frames)? / self.epsilon)
    }

    /// Draws the latent noise for an utterance of `frames` frames (zero for a non-private model).
    pub fn draw_noise<R: Rng + ?Sized>(&self, frames: usize, rng: &mut R) -> Result<Matrix> {
        if !self.is_private() {
            return Ok(Matrix::zeros(self.channels, frames));
        }
        let noise = LaplaceNoise::new(self.noise_scale(frames)?)?;
        Ok(Matrix::from_fn(self.channels, frames, |_, _| noise.sample(rng)))
    }

    /// One private reconstruction of a normalized voiced sequence.
    pub fn reconstruct<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let h = self.encode(z)?;
        let noisy = if self.is_private() {
            perturb_latent(&h, self.epsilon, rng)?
        } else {
            h.into_matrix()
        };
        self.decode(&clip_latent(&noisy))
    }

    fn forward_trace(&self, z: &[f64], noise: &Matrix, masks: &[Option<Matrix>]) -> Result<(Vec<f64>, Trace)> {
        let x0 = self.input_row(z)?;
        if noise.shape() != (self.channels, z.len()) {
            return Err(Error::shape(
                format!("{}x{} noise", self.channels, z.len()),
                format!("{}x{}", noise.rows(), noise.cols()),
            ));
        }
        let mut inputs = Vec::with_capacity(6);
        let mut outputs = Vec::with_capacity(6);
        let mut x = x0;
        let mut noisy = None;
        for (idx, layer) in self.layers().enumerate() {
            let y = layer.forward(&x)?;
            inputs.push(x);
            x = match &masks[idx] {
                Some(m) => y.zip_map(m, |a, b| a * b),
                None => y.clone(),
            };
            if idx == 2 {
                let n = x.zip_map(noise, |h, e| h + e);
                x = clip_latent(&n);
                noisy = Some(n);
            }
            outputs.push(y);
        }
        let trace = Trace {
            inputs,
            outputs,
            masks: masks.to_vec(),
            noisy: noisy.expect("six layers"),
        };
        Ok((x.into_vec(), trace))
    }

    fn backward(&self, trace: &Trace, grad_output: Vec<f64>) -> Vec<f64> {
        let sizes: Vec<usize> = self.layers().map(Conv1d::param_count).collect();
        let mut offsets = vec![0; 6];
        for i in 1..6 {
            offsets[i] = offsets[i - 1] + sizes[i - 1];
        }
        let mut grad = vec![0.0; self.param_count()];
        let frames = grad_output.len();
        let mut g = Matrix::from_vec(1, frames, grad_output).expect("row");
        let layers: Vec<&Conv1d> = self.layers().collect();
        for idx in (0..6).rev() {
            if let Some(m) = &trace.masks[idx] {
                g = g.zip_map(m, |a, b| a * b);
            }
            let slot = &mut grad[offsets[idx]..offsets[idx] + sizes[idx]];
            g = layers[idx].backward(&trace.inputs[idx], &trace.outputs[idx], &g, slot);
            if idx == 3 {
                // through clip (subgradient 1 on the closed interval) and additive noise
                g = g.zip_map(&trace.noisy, |g, n| if (0.0..=1.0).contains(&n) { g } else { 0.0 });
            }
        }
        grad
    }
}

fn check_model_epsilon(epsilon: f64) -> Result<()> {
    if epsilon == f64::INFINITY {
        Ok(())
    } else {
        check_epsilon(epsilon)
    }
}

/// `h + Laplace(C * K / epsilon)` per entry.
pub fn perturb_latent<R: Rng + ?Sized>(h: &LatentCode, epsilon: f64, rng: &mut R) -> Result<Matrix> {
    let sensitivity = sigmoid_encoder_sensitivity(h.channels(), h.frames())?;
    let noise = LaplaceNoise::calibrated(sensitivity, epsilon)?;
    let mut out = h.0.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v += noise.sample(rng));
    Ok(out)
}

pub fn clip_latent(m: &Matrix) -> Matrix {
    m.map(|v| v.clamp(0.0, 1.0))
}

/// Mean of `1 - Corr(original, reconstruction)` over the pairs.
pub fn correlation_loss(pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("correlation loss batch"));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        total += 1.0 - pearson_corr(a, b)?;
    }
    Ok(total / pairs.len() as f64)
}

/// `1 - Corr(x, y)` and its gradient with respect to `y`.
fn correlation_loss_grad(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let r = pearson_corr(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let norm = (sxx * syy).sqrt();
    let grad = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| -((xi - mx) / norm - r * (yi - my) / syy))
        .collect();
    Ok((1.0 - r, grad))
}

/// Loss and full parameter gradient for one normalized sequence under a fixed
/// noise realization. Dropout is off.
pub fn loss_gradient(model: &PitchAutoencoder, z: &[f64], noise: &Matrix) -> Result<(f64, Vec<f64>)> {
    let masks = vec![None; 6];
    let (y, trace) = model.forward_trace(z, noise, &masks)?;
    let (loss, grad_y) = correlation_loss_grad(z, &y)?;
    Ok((loss, model.backward(&trace, grad_y)))
}

/// Loss of one sequence under a fixed noise realization; used for finite-difference checks.
pub fn loss_at(model: &PitchAutoencoder, z: &[f64], noise: &Matrix) -> Result<f64> {
    let (y, _) = model.forward_trace(z, noise, &[None, None, None, None, None, None])?;
    correlation_loss(&[(z, &y)])
}

/// Trains a fresh model on normalized voiced sequences, one sequence per step
/// and fresh noise every step.
pub fn train(
    corpus: &[Vec<f64>],
    config: &TrainingConfig,
    channels: usize,
    epsilon: f64,
) -> Result<(PitchAutoencoder, TrainingReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("pitch training corpus"));
    }
    let mut init_rng = NoiseRng::stream(config.seed, 0);
    let model = PitchAutoencoder::new(channels, DEFAULT_KERNEL_WIDTH, epsilon, &mut init_rng)?;
    train_from(model, corpus, config)
}

/// Continues training `model` on `corpus`.
pub fn train_from(
    mut model: PitchAutoencoder,
    corpus: &[Vec<f64>],
    config: &TrainingConfig,
) -> Result<(PitchAutoencoder, TrainingReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("pitch training corpus"));
    }
    for z in corpus {
        if z.len() < model.width {
            return Err(Error::InvalidArgument(format!(
                "training sequence of {} frames is shorter than the kernel width",
                z.len()
            )));
        }
    }
    let mut order_rng = NoiseRng::stream(config.seed, 1);
    let mut noise_rng = NoiseRng::stream(config.seed, 2);
    let mut dropout_rng = NoiseRng::stream(config.seed, 3);
    let mut adam = Adam::new(model.param_count(), config.learning_rate, config.weight_decay);
    let mut params = model.params();
    let mut report = TrainingReport::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let c = model.channels;

    for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let z = &corpus[i];
            let k = z.len();
            let noise = model.draw_noise(k, &mut noise_rng)?;
            let masks: Vec<Option<Matrix>> = (0..6)
                .map(|idx| {
                    (config.dropout > 0.0 && matches!(idx, 0 | 1 | 3 | 4))
                        .then(|| dropout_mask(c, k, config.dropout, &mut dropout_rng))
                })
                .collect();
            let (y, trace) = model.forward_trace(z, &noise, &masks)?;
            let (loss, grad_y) = match correlation_loss_grad(z, &y) {
                Ok(v) => v,
                // A constant reconstruction carries no gradient signal through Corr.
                Err(Error::Degenerate(_)) => continue,
                Err(e) => return Err(e),
            };
            let grad = model.backward(&trace, grad_y);
            adam.step(&mut params, &grad);
            model.set_params(&params)?;
            epoch_loss += loss;
        }
        report.epoch_losses.push(epoch_loss / corpus.len() as f64);
    }
    Ok((model, report))
}

/// Deployment: remove zeros, normalize, reconstruct once through the noise
/// layer, re-standardize, convert to `target`, and restore the zeros.
pub fn anonymize_pitch<R: Rng + ?Sized>(
    model: &PitchAutoencoder,
    pitch: &PitchSequence,
    target: PitchStats,
    rng: &mut R,
) -> Result<PitchSequence> {
    let view = remove_zeros(pitch)?;
    let (z, _) = normalize(&view.voiced)?;
    let reconstructed = model.reconstruct(&z, rng)?;
    let (standardized, _) = normalize(&reconstructed)?;
    let converted = pitch_convert(&standardized, target)?;
    // Converted values may dip below zero for extreme targets; a frame that
    // was voiced stays voiced.
    let voiced = converted.into_iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    reinsert_zeros(&with_voiced(&view, voiced)?)
}
