use std::ops::{Index, IndexMut};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Float;

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    /// Layers feeding both the tagger and the slot adversary.
    Shared,
    /// Tagging-only layers.
    Task,
    /// Slot classifier of the adversarial branch.
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub group: ParamGroup,
    pub trainable: bool,
    /// Vectors are stored as `1 × n`.
    pub value: Array2<F>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet<F> {
    params: Vec<Param<F>>,
}

impl<F: Float> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Array2<F>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            group,
            trainable: true,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param<F> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param<F>)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        Gradients {
            tensors: self.params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect(),
        }
    }

    /// Converts every tensor to another float type.
    pub fn cast<G: Float>(&self) -> ParamSet<G> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    group: p.group,
                    trainable: p.trainable,
                    value: p.value.mapv(|x| G::of(x.as_f64())),
                })
                .collect(),
        }
    }
}

impl<F> Index<ParamId> for ParamSet<F> {
    type Output = Array2<F>;

    fn index(&self, id: ParamId) -> &Array2<F> {
        &self.params[id.0].value
    }
}

impl<F> IndexMut<ParamId> for ParamSet<F> {
    fn index_mut(&mut self, id: ParamId) -> &mut Array2<F> {
        &mut self.params[id.0].value
    }
}

/// Gradient buffers shaped like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    tensors: Vec<Array2<F>>,
}

impl<F: Float> Gradients<F> {
    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: F) {
        for t in &mut self.tensors {
            t.mapv_inplace(|x| x * factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(F::zero());
        }
    }

    pub fn global_norm(&self) -> F {
        self.tensors
            .iter()
            .map(|t| t.iter().map(|&x| x * x).sum::<F>())
            .sum::<F>()
            .sqrt()
    }

    /// Rescales so that the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array2<F>)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }
}

impl<F> Index<ParamId> for Gradients<F> {
    type Output = Array2<F>;

    fn index(&self, id: ParamId) -> &Array2<F> {
        &self.tensors[id.0]
    }
}

impl<F> IndexMut<ParamId> for Gradients<F> {
    fn index_mut(&mut self, id: ParamId) -> &mut Array2<F> {
        &mut self.tensors[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn clipping_bounds_the_norm() {
        let mut set = ParamSet::<f64>::new();
        let a = set.add("a", ParamGroup::Shared, array![[0.0, 0.0]]);
        let mut g = set.zero_gradients();
        g[a] = array![[3.0, 4.0]];
        assert_eq!(g.clip_global_norm(1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        assert_eq!(g.clip_global_norm(10.0), 1.0);
    }
}
