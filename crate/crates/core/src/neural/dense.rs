use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::lstm::xavier;
use super::params::{Gradients, ParamGroup, ParamId, ParamSet};
use super::Float;

/// Affine layer `y = x·W + b` applied row-wise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new<F: Float, R: Rng>(
        params: &mut ParamSet<F>,
        name: &str,
        group: ParamGroup,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.w"), group, xavier(input, output, rng));
        let bias = params.add(format!("{name}.b"), group, Array2::zeros((1, output)));
        Dense {
            input,
            output,
            weight,
            bias,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    pub fn forward<F: Float>(&self, params: &ParamSet<F>, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&params[self.weight]);
        y += &params[self.bias].row(0);
        y
    }

    /// Accumulates `∂W`, `∂b` and returns `∂x`.
    pub fn backward<F: Float>(
        &self,
        params: &ParamSet<F>,
        grads: &mut Gradients<F>,
        x: ArrayView2<F>,
        dy: ArrayView2<F>,
    ) -> Array2<F> {
        grads[self.weight] += &x.t().dot(&dy);
        grads[self.bias] += &dy.sum_axis(Axis(0));
        dy.dot(&params[self.weight].t())
    }
}
