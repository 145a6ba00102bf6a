use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{log_sum_exp, Float};

pub fn softmax<F: Float>(row: ArrayView1<F>) -> Array1<F> {
    let lse = log_sum_exp(row.iter().copied());
    row.mapv(|x| (x - lse).exp())
}

/// Mean token-level cross entropy of `gold` under softmax-normalized
/// `emissions` (`T × E`). The gradient is `(softmax - onehot) / T`.
pub fn softmax_ce_loss<F: Float>(emissions: ArrayView2<F>, gold: &[usize]) -> (F, Array2<F>) {
    assert_eq!(emissions.nrows(), gold.len(), "one gold label per row");
    let steps = F::of(gold.len() as f64);
    let mut grad = Array2::zeros(emissions.raw_dim());
    let mut loss = F::zero();
    for (t, &y) in gold.iter().enumerate() {
        let row = emissions.row(t);
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[y];
        for (k, &e) in row.iter().enumerate() {
            grad[[t, k]] = (e - lse).exp() / steps;
        }
        grad[[t, y]] -= F::one() / steps;
    }
    (loss / steps, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_emissions_give_ln_e() {
        let (loss, _) = softmax_ce_loss(Array2::<f64>::zeros((3, 4)).view(), &[0, 1, 3]);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_gives_zero_loss() {
        let e: Array2<f64> = array![[100.0, 0.0, 0.0, 0.0], [0.0, 0.0, 100.0, 0.0]];
        let (loss, grad) = softmax_ce_loss(e.view(), &[0, 2]);
        assert!(loss < 1e-40);
        assert!(grad.iter().all(|g| g.abs() < 1e-40));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e: Array2<f64> = array![[0.3, -1.2, 0.8, 0.1], [1.5, 0.2, -0.4, -2.0], [-0.7, 0.9, 0.0, 0.6]];
        let gold = [2, 0, 3];
        let (_, grad) = softmax_ce_loss(e.view(), &gold);
        let h = 1e-5;
        for t in 0..3 {
            for k in 0..4 {
                let mut p = e.clone();
                p[[t, k]] += h;
                let mut m = e.clone();
                m[[t, k]] -= h;
                let numeric = (softmax_ce_loss(p.view(), &gold).0 - softmax_ce_loss(m.view(), &gold).0) / (2.0 * h);
                let rel = (numeric - grad[[t, k]]).abs() / numeric.abs().max(grad[[t, k]].abs());
                assert!(rel <= 1e-5, "[{t},{k}] {numeric} vs {}", grad[[t, k]]);
            }
        }
    }
}
