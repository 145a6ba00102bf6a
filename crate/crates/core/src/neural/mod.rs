//! Dense building blocks with hand-written backward passes.
//!
//! Every layer reads its weights from a [`ParamSet`] and accumulates into a
//! matching [`Gradients`] buffer, so optimizers, gradient checks and
//! checkpointing can walk all parameters uniformly.

pub mod adam;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod loss;
pub mod lstm;
pub mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};

pub use adam::{Adam, AdamConfig};
pub use dense::Dense;
pub use dropout::{apply_dropout, DropoutMode};
pub use embedding::{load_pretrained, Vocab};
pub use loss::softmax_ce_loss;
pub use lstm::{BiLstm, Lstm};
pub use params::{Gradients, Param, ParamGroup, ParamId, ParamSet};

/// Floating point element type. Training runs in `f32`; gradient checks
/// instantiate the same code with `f64`.
pub trait Float:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Float for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Numerically stable `ln Σ exp(xᵢ)`.
pub fn log_sum_exp<F: Float>(xs: impl IntoIterator<Item = F> + Clone) -> F {
    let max = xs.clone().into_iter().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<F>().ln()
}
