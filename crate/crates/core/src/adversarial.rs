//! Slot-adversarial training pieces: the gradient-reversal layer, the
//! progress-dependent weight λ and the combined objective
//! `L_y − λ·L_d`.
//!
//! The adversary is a softmax slot-type classifier on the last output of
//! the shared encoder. Its own parameters minimize `L_d`; the reversal
//! layer flips the sign (and scales by λ) of the gradient that reaches the
//! shared encoder, so a single minimization step trains both sides.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Float;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarialConfig {
    pub enabled: bool,
    /// Steepness of the λ ramp.
    pub gamma: f64,
    /// Slot-type labels of the classifier; empty means "all training slot
    /// types, sorted".
    pub slot_labels: Vec<String>,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            enabled: false,
            gamma: 2.0,
            slot_labels: Vec::new(),
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Argument(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// `λ(p) = 2 / (1 + exp(−γ·p)) − 1` for training progress `p ∈ [0, 1]`.
pub fn lambda_schedule(progress: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::Argument(format!("training progress {progress} outside [0, 1]")));
    }
    Ok(2.0 / (1.0 + (-gamma * progress).exp()) - 1.0)
}

/// Identity in the forward direction.
pub fn grad_reversal_forward<F: Float>(h: ArrayView1<F>) -> Array1<F> {
    h.to_owned()
}

/// Multiplies the incoming gradient by `−λ`.
pub fn grad_reversal_backward<F: Float>(grad: ArrayView1<F>, lambda: F) -> Array1<F> {
    grad.mapv(|g| -lambda * g)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Tagging loss.
    pub tag_loss: f64,
    /// Slot classification loss (0 without the adversary).
    pub slot_loss: f64,
    pub lambda: f64,
    /// `tag_loss − lambda · slot_loss`.
    pub total: f64,
}

pub fn combined_loss(tag_loss: f64, slot_loss: f64, lambda: f64) -> Result<LossBreakdown> {
    if !(tag_loss.is_finite() && slot_loss.is_finite() && lambda.is_finite()) {
        return Err(Error::Argument(format!(
            "non-finite loss component: L_y={tag_loss}, L_d={slot_loss}, lambda={lambda}"
        )));
    }
    Ok(LossBreakdown {
        tag_loss,
        slot_loss,
        lambda,
        total: tag_loss - lambda * slot_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn schedule_values() {
        assert_eq!(lambda_schedule(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(lambda_schedule(0.0, 17.0).unwrap(), 0.0);
        assert!((lambda_schedule(1.0, 2.0).unwrap() - 0.76159).abs() < 1e-5);
        assert!((lambda_schedule(1.0, 2.0).unwrap() - 1f64.tanh()).abs() < 1e-15);
        assert!((lambda_schedule(0.5, 2.0).unwrap() - 0.5f64.tanh()).abs() < 1e-15);
        assert!(lambda_schedule(1.01, 2.0).is_err());
        assert!(lambda_schedule(-0.01, 2.0).is_err());
    }

    #[test]
    fn schedule_is_monotone_and_below_one() {
        for gamma in [0.1, 2.0, 10.0] {
            let mut prev = -1.0;
            for i in 0..=100 {
                let l = lambda_schedule(i as f64 / 100.0, gamma).unwrap();
                assert!(l >= prev && l < 1.0);
                prev = l;
            }
        }
    }

    #[test]
    fn reversal_layer() {
        let h = array![0.5, -1.0, 2.0];
        assert_eq!(grad_reversal_forward(h.view()), h);
        assert_eq!(grad_reversal_backward(h.view(), 0.0).to_vec(), [-0.0, 0.0, -0.0]);
        assert_eq!(grad_reversal_backward(h.view(), 1.0), -&h);
    }

    #[test]
    fn combined_values() {
        assert_eq!(combined_loss(1.3, 0.9, 0.0).unwrap().total, 1.3);
        assert_eq!(combined_loss(1.3, 0.0, 0.6).unwrap().total, 1.3);
        assert!((combined_loss(1.0, 0.5, 0.4).unwrap().total - 0.8).abs() < 1e-15);
        assert!(combined_loss(f64::NAN, 0.5, 0.4).is_err());
        assert!(AdversarialConfig {
            gamma: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
