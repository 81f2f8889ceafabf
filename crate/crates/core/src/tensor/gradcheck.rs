use super::{Result, Tensor};

/// Central-difference gradient of a scalar function of a flat vector,
/// evaluated in double precision.
pub fn finite_diff_grad_slice(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * eps));
    }
    grad
}

/// Central-difference gradient of `f` at `x`, one element at a time.
pub fn finite_diff_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, eps: f64) -> Result<Tensor<f64>> {
    let (c, h, w) = x.shape();
    let grad = finite_diff_grad_slice(
        |v| f(&Tensor::new(c, h, w, v.to_vec()).expect("shape preserved")),
        x.data(),
        eps,
    );
    Tensor::new(c, h, w, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{softmax_axis, Axis, Matrix};

    #[test]
    fn gradient_of_sum_is_ones() {
        let x = Tensor::from_fn(2, 3, 3, |c, i, j| (c + i * j) as f64 * 0.1);
        let g = finite_diff_grad(|t| t.data().iter().sum(), &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn gradient_of_half_squared_norm_is_identity() {
        let x = Tensor::from_fn(2, 2, 4, |c, i, j| c as f64 - 0.3 * i as f64 + 0.7 * j as f64);
        let g = finite_diff_grad(|t| 0.5 * t.dot(t).unwrap(), &x, 1e-5).unwrap();
        for (a, b) in g.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_pick_matches_analytic_jacobian_row() {
        let v = [0.3, -1.2, 0.8];
        let pick = 2;
        let s = softmax_axis(&Matrix::new(1, 3, v.to_vec()).unwrap(), Axis::Rows);
        let g = finite_diff_grad_slice(
            |x| softmax_axis(&Matrix::new(1, 3, x.to_vec()).unwrap(), Axis::Rows).at(0, pick),
            &v,
            1e-6,
        );
        for (j, gj) in g.iter().enumerate() {
            let delta = if j == pick { 1.0 } else { 0.0 };
            let analytic = s.at(0, pick) * (delta - s.at(0, j));
            assert!((gj - analytic).abs() < 1e-6);
        }
    }
}
