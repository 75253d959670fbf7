use rand::Rng;

use crate::error::{Error, Result};

/// Channel-major activations: `rows` channels by `cols` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{rows}x{cols} = {} values", rows * cols), data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Sigmoid => 1,
            Activation::Relu => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stride-1 1-D convolution with symmetric zero padding, so the output has
/// as many frames as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    in_channels: usize,
    out_channels: usize,
    width: usize,
    activation: Activation,
    /// `[out][in][tap]`, row-major.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        width: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("convolution needs at least one channel".into()));
        }
        if width % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel width must be odd for same-length padding, got {width}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            width,
            activation,
            weight: vec![0.0; out_channels * in_channels * width],
            bias: vec![0.0; out_channels],
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn uniform<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, width, activation)?;
        let bound = 1.0 / ((in_channels * width) as f64).sqrt();
        for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.gen_range(-bound..bound);
        }
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Appends weights then biases.
    pub fn extend_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weight);
        out.extend_from_slice(&self.bias);
    }

    /// Loads weights then biases from the front of `params`; returns the count consumed.
    pub fn load_params(&mut self, params: &[f64]) -> usize {
        let nw = self.weight.len();
        let nb = self.bias.len();
        self.weight.copy_from_slice(&params[..nw]);
        self.bias.copy_from_slice(&params[nw..nw + nb]);
        self.param_count()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.in_channels {
            return Err(Error::shape(format!("{} input channels", self.in_channels), x.rows()));
        }
        Ok(())
    }

    pub fn pre_activation(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let len = x.cols();
        let pad = self.width / 2;
        let mut out = Matrix::zeros(self.out_channels, len);
        for o in 0..self.out_channels {
            let row = out.row_mut(o);
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let input = x.row(i);
                let taps = &self.weight[(o * self.in_channels + i) * self.width..][..self.width];
                for (k, &w) in taps.iter().enumerate() {
                    // output t reads input t + k - pad
                    let (t0, t1) = valid_range(k, pad, len);
                    let src = &input[t0 + k - pad..t1 + k - pad];
                    for (r, x) in row[t0..t1].iter_mut().zip(src) {
                        *r += w * x;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let act = self.activation;
        let mut y = self.pre_activation(x)?;
        y.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        Ok(y)
    }

    /// Backpropagates `grad_out` (w.r.t. the activated output `y`) to the
    /// input. Parameter gradients are accumulated into `grad_params`, laid
    /// out like [`Conv1d::extend_params`].
    pub fn backward(
        &self,
        x: &Matrix,
        y: &Matrix,
        grad_out: &Matrix,
        grad_params: &mut [f64],
    ) -> Matrix {
        let len = x.cols();
        let pad = self.width / 2;
        let act = self.activation;
        let delta = y.zip_map(grad_out, |y, g| g * act.derivative_from_output(y));
        let (grad_w, grad_b) = grad_params.split_at_mut(self.weight.len());
        let mut grad_in = Matrix::zeros(self.in_channels, len);
        for o in 0..self.out_channels {
            let d = delta.row(o);
            grad_b[o] += d.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let input = x.row(i);
                let base = (o * self.in_channels + i) * self.width;
                for k in 0..self.width {
                    let (t0, t1) = valid_range(k, pad, len);
                    let w = self.weight[base + k];
                    let d = &d[t0..t1];
                    let src = &input[t0 + k - pad..t1 + k - pad];
                    grad_w[base + k] += d.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    let gi = &mut grad_in.row_mut(i)[t0 + k - pad..t1 + k - pad];
                    for (g, dt) in gi.iter_mut().zip(d) {
                        *g += w * dt;
                    }
                }
            }
        }
        grad_in
    }
}

/// Output frames `t` for which input frame `t + k - pad` exists.
fn valid_range(k: usize, pad: usize, len: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(k);
    let t1 = (len + pad).saturating_sub(k).min(len);
    (t0, t1.max(t0))
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    Matrix::from_fn(rows, cols, |_, _| if rng.gen::<f64>() < rate { 0.0 } else { keep })
}
