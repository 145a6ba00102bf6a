use ndarray::{Array1, Array2};
use rand::Rng;

use super::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    /// Independent mask for every position.
    Embedding,
    /// One mask per sequence, shared by all time steps.
    Variational,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Argument(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted-dropout keep mask of width `n`: entries are `0` or `1/(1-rate)`.
pub fn keep_mask<F: Float, R: Rng>(n: usize, rate: f64, rng: &mut R) -> Result<Array1<F>> {
    check_rate(rate)?;
    let scale = F::of(1.0 / (1.0 - rate));
    Ok(Array1::from_shape_simple_fn(n, || {
        if rng.random::<f64>() < rate {
            F::zero()
        } else {
            scale
        }
    }))
}

/// Applies dropout to the rows of `x` (one row per time step). Returns the
/// dropped values and, when training, the mask that was multiplied in.
pub fn apply_dropout<F: Float, R: Rng>(
    x: &Array2<F>,
    rate: f64,
    mode: DropoutMode,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<F>, Option<Array2<F>>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let (rows, cols) = x.dim();
    let mut mask = Array2::zeros((rows, cols));
    match mode {
        DropoutMode::Embedding => {
            for mut row in mask.rows_mut() {
                row.assign(&keep_mask::<F, _>(cols, rate, rng)?);
            }
        }
        DropoutMode::Variational => {
            let shared = keep_mask::<F, _>(cols, rate, rng)?;
            for mut row in mask.rows_mut() {
                row.assign(&shared);
            }
        }
    }
    Ok((x * &mask, Some(mask)))
}
