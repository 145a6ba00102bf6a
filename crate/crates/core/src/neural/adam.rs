use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamSet};
use super::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: usize,
    first: Vec<Array2<F>>,
    second: Vec<Array2<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(config: AdamConfig, params: &ParamSet<F>) -> Self {
        let zeros = || params.iter().map(|(_, p)| Array2::zeros(p.value.raw_dim())).collect();
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    /// Applies one update to every trainable parameter. A non-finite
    /// gradient aborts before anything is modified.
    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &Gradients<F>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Training {
                step: self.step + 1,
                message: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let lr_t = F::of(lr);
        let (b1, b2) = (F::of(beta1), F::of(beta2));
        let c1 = F::of(1.0 - beta1.powi(t));
        let c2 = F::of(1.0 - beta2.powi(t));
        let eps = F::of(eps);
        let one = F::one();
        for (id, param) in params.iter_mut() {
            if !param.trainable {
                continue;
            }
            let i = id.index();
            Zip::from(&mut param.value)
                .and(&mut self.first[i])
                .and(&mut self.second[i])
                .and(&grads[id])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr_t * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ParamGroup;
    use ndarray::array;

    fn single(value: f64) -> (ParamSet<f64>, crate::neural::ParamId) {
        let mut set = ParamSet::new();
        let id = set.add("p", ParamGroup::Shared, array![[value]]);
        (set, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut set, id) = single(0.25);
        let mut adam = Adam::new(AdamConfig::default(), &set);
        let g = set.zero_gradients();
        for _ in 0..5 {
            adam.step(&mut set, &g).unwrap();
        }
        assert_eq!(set[id][[0, 0]], 0.25);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        for g0 in [3.0, -0.01] {
            let (mut set, id) = single(1.0);
            let mut adam = Adam::new(AdamConfig::default(), &set);
            let mut g = set.zero_gradients();
            g[id][[0, 0]] = g0;
            adam.step(&mut set, &g).unwrap();
            let delta = set[id][[0, 0]] - 1.0;
            assert!((delta + 0.002 * f64::signum(g0)).abs() < 1e-8, "{delta}");
        }
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let (mut set, id) = single(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &set);
        let mut g = set.zero_gradients();
        g[id][[0, 0]] = 0.7;
        let mut last = 0.0;
        for _ in 0..1000 {
            let before = set[id][[0, 0]];
            adam.step(&mut set, &g).unwrap();
            last = before - set[id][[0, 0]];
        }
        assert!((last - 0.002).abs() < 1e-6, "{last}");
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let (mut set, id) = single(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &set);
        let mut g = set.zero_gradients();
        adam.step(&mut set, &g).unwrap();
        g[id][[0, 0]] = f64::NAN;
        match adam.step(&mut set, &g).unwrap_err() {
            Error::Training { step, .. } => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(set[id][[0, 0]], 0.0);
    }
}
