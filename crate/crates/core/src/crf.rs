//! Linear-chain CRF over per-position tag scores.
//!
//! The score of a tag sequence `y` for emissions `f` (`T × E`) is
//!
//! ```text
//! s(y) = start[y₁] + f[1][y₁] + Σ_{t=2..T} (A[y_{t-1}][y_t] + f[t][y_t]) (+ end[y_T])
//! ```
//!
//! where `A` is position independent. All computations are in log space.

use ndarray::{Array1, Array2, ArrayView2};

use crate::neural::{log_sum_exp, Float};
use crate::types::Tag;

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams<F> {
    /// `transitions[[i, j]]` scores tag `i` followed by tag `j`.
    pub transitions: Array2<F>,
    /// Score of each tag at the first position.
    pub start: Array1<F>,
    /// Optional score of each tag at the last position.
    pub end: Option<Array1<F>>,
}

impl<F: Float> CrfParams<F> {
    pub fn zeros(tags: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((tags, tags)),
            start: Array1::zeros(tags),
            end: None,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    fn end_score(&self, tag: usize) -> F {
        self.end.as_ref().map_or(F::zero(), |e| e[tag])
    }
}

/// Which transitions Viterbi may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    pub allowed: Vec<Vec<bool>>,
    pub start_allowed: Vec<bool>,
}

impl TransitionMask {
    pub fn allow_all(tags: usize) -> Self {
        TransitionMask {
            allowed: vec![vec![true; tags]; tags],
            start_allowed: vec![true; tags],
        }
    }

    /// Forbids `I-C` at the start and after `O` or `CC`.
    pub fn bio() -> Self {
        let mut mask = TransitionMask::allow_all(Tag::COUNT);
        let inside = Tag::I.index();
        mask.start_allowed[inside] = false;
        mask.allowed[Tag::O.index()][inside] = false;
        mask.allowed[Tag::Cc.index()][inside] = false;
        mask
    }
}

pub fn score_sequence<F: Float>(emissions: ArrayView2<F>, tags: &[usize], params: &CrfParams<F>) -> F {
    assert_eq!(emissions.nrows(), tags.len(), "one tag per position");
    let Some((&first, rest)) = tags.split_first() else {
        return F::zero();
    };
    let mut score = params.start[first] + emissions[[0, first]];
    let mut prev = first;
    for (t, &tag) in rest.iter().enumerate() {
        score = score + params.transitions[[prev, tag]] + emissions[[t + 1, tag]];
        prev = tag;
    }
    score + params.end_score(prev)
}

/// Forward log-potentials `alpha[t][j]` = log-sum of scores of all prefixes
/// ending in tag `j` at `t`.
fn forward_table<F: Float>(emissions: ArrayView2<F>, params: &CrfParams<F>) -> Array2<F> {
    let (steps, tags) = emissions.dim();
    let mut alpha = Array2::zeros((steps, tags));
    for j in 0..tags {
        alpha[[0, j]] = params.start[j] + emissions[[0, j]];
    }
    for t in 1..steps {
        for j in 0..tags {
            let lse = log_sum_exp((0..tags).map(|i| alpha[[t - 1, i]] + params.transitions[[i, j]]));
            alpha[[t, j]] = lse + emissions[[t, j]];
        }
    }
    alpha
}

/// Backward log-potentials `beta[t][i]` = log-sum of scores of all suffixes
/// after position `t` given tag `i` at `t`.
fn backward_table<F: Float>(emissions: ArrayView2<F>, params: &CrfParams<F>) -> Array2<F> {
    let (steps, tags) = emissions.dim();
    let mut beta = Array2::zeros((steps, tags));
    for i in 0..tags {
        beta[[steps - 1, i]] = params.end_score(i);
    }
    for t in (0..steps.saturating_sub(1)).rev() {
        for i in 0..tags {
            beta[[t, i]] =
                log_sum_exp((0..tags).map(|j| params.transitions[[i, j]] + emissions[[t + 1, j]] + beta[[t + 1, j]]));
        }
    }
    beta
}

/// `log Σ_y exp(s(y))` via the forward recursion, `O(T·E²)`.
pub fn log_partition<F: Float>(emissions: ArrayView2<F>, params: &CrfParams<F>) -> F {
    let steps = emissions.nrows();
    assert!(steps > 0, "empty sequence");
    let alpha = forward_table(emissions, params);
    log_sum_exp((0..params.num_tags()).map(|j| alpha[[steps - 1, j]] + params.end_score(j)))
}

/// Per-position tag marginals `P(y_t = i)`.
pub fn marginals<F: Float>(emissions: ArrayView2<F>, params: &CrfParams<F>) -> Array2<F> {
    let alpha = forward_table(emissions, params);
    let beta = backward_table(emissions, params);
    let log_z = log_partition(emissions, params);
    (alpha + beta).mapv(|x| (x - log_z).exp())
}

/// Gradients of the negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradients<F> {
    pub emissions: Array2<F>,
    pub transitions: Array2<F>,
    pub start: Array1<F>,
    pub end: Option<Array1<F>>,
}

/// `log Z − s(gold)` and its gradients from forward-backward marginals.
pub fn crf_nll<F: Float>(emissions: ArrayView2<F>, gold: &[usize], params: &CrfParams<F>) -> (F, CrfGradients<F>) {
    let (steps, tags) = emissions.dim();
    assert_eq!(steps, gold.len(), "one gold tag per position");
    assert!(steps > 0, "empty sequence");
    let alpha = forward_table(emissions, params);
    let beta = backward_table(emissions, params);
    let log_z = log_sum_exp((0..tags).map(|j| alpha[[steps - 1, j]] + params.end_score(j)));
    let loss = log_z - score_sequence(emissions, gold, params);

    let mut d_emissions = (&alpha + &beta).mapv(|x| (x - log_z).exp());
    let mut d_start = d_emissions.row(0).to_owned();
    let mut d_end = params.end.as_ref().map(|_| d_emissions.row(steps - 1).to_owned());
    let mut d_trans = Array2::zeros((tags, tags));
    for t in 0..steps - 1 {
        for i in 0..tags {
            for j in 0..tags {
                let log_pair =
                    alpha[[t, i]] + params.transitions[[i, j]] + emissions[[t + 1, j]] + beta[[t + 1, j]] - log_z;
                d_trans[[i, j]] += log_pair.exp();
            }
        }
    }
    for (t, &y) in gold.iter().enumerate() {
        d_emissions[[t, y]] -= F::one();
        if t > 0 {
            d_trans[[gold[t - 1], y]] -= F::one();
        }
    }
    d_start[gold[0]] -= F::one();
    if let Some(d) = d_end.as_mut() {
        d[gold[steps - 1]] -= F::one();
    }
    (
        loss,
        CrfGradients {
            emissions: d_emissions,
            transitions: d_trans,
            start: d_start,
            end: d_end,
        },
    )
}

/// Highest-scoring tag sequence and its score. Ties go to the lowest tag
/// index at every decision.
pub fn viterbi_decode<F: Float>(emissions: ArrayView2<F>, params: &CrfParams<F>) -> (Vec<usize>, F) {
    viterbi_decode_masked(emissions, params, &TransitionMask::allow_all(params.num_tags()))
}

pub fn viterbi_decode_masked<F: Float>(
    emissions: ArrayView2<F>,
    params: &CrfParams<F>,
    mask: &TransitionMask,
) -> (Vec<usize>, F) {
    let (steps, tags) = emissions.dim();
    assert!(steps > 0, "empty sequence");
    let neg = F::neg_infinity();
    let mut delta = Array2::from_elem((steps, tags), neg);
    let mut back = Array2::<usize>::zeros((steps, tags));
    for j in 0..tags {
        if mask.start_allowed[j] {
            delta[[0, j]] = params.start[j] + emissions[[0, j]];
        }
    }
    for t in 1..steps {
        for j in 0..tags {
            let mut best = neg;
            let mut arg = 0;
            for i in 0..tags {
                if !mask.allowed[i][j] {
                    continue;
                }
                let cand = delta[[t - 1, i]] + params.transitions[[i, j]];
                if cand > best {
                    best = cand;
                    arg = i;
                }
            }
            delta[[t, j]] = best + emissions[[t, j]];
            back[[t, j]] = arg;
        }
    }
    let mut best = neg;
    let mut last = 0;
    for j in 0..tags {
        let cand = delta[[steps - 1, j]] + params.end_score(j);
        if cand > best {
            best = cand;
            last = j;
        }
    }
    let mut path = vec![last; steps];
    for t in (1..steps).rev() {
        path[t - 1] = back[[t, path[t]]];
    }
    (path, best)
}
