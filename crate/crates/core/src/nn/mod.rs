//! Minimal 1-D convolutional building blocks with hand-written backward passes.

mod adam;
mod conv;

pub use adam::Adam;
pub use conv::{dropout_mask, sigmoid, Activation, Conv1d, Matrix};

/// Row-wise log-softmax of a `frames x classes` matrix.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}
