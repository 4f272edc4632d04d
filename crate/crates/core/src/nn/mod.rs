//! Small dense feedforward networks with reverse-mode gradients.
//!
//! Everything is `f64`. Gradients are returned for the parameters and for the
//! network input; the auction's misreport search needs the latter.
//!
//! Cost of one forward pass through a net with input `n`, hidden width `d`
//! and output `m` is `O(n*d + d*d + d*m)` per sample, so for the auction nets
//! the market size only enters through the first and last layers.

mod dense;
mod optim;
mod tensor;

pub use dense::{Activation, DenseNet, Gradients, LayerSpec, Trace};
pub use optim::{OptimKind, OptimState};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("empty input to {0}")]
    Empty(&'static str),
}

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>, NnError> {
    if v.is_empty() {
        return Err(NnError::Empty("softmax"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
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
