//! Fully-connected layer over `(N, F)` batches.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ParamList;

#[derive(Debug, Clone)]
pub struct Linear {
    /// `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let std = (2.0 / in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        Self {
            weight: Array2::from_shape_fn((out_dim, in_dim), |_| normal.sample(rng)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((
            format!("{prefix}.weight"),
            self.weight.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.bias"),
            self.bias.as_slice_mut().expect("standard layout"),
        ));
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.in_dim(), "linear input width mismatch");
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_grad;
    use ndarray::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_layer_maps_to_bias() {
        let mut lin = Linear::zeros(3, 2);
        lin.bias = Array1::from(vec![0.5, -1.0]);
        let x = Array2::from_elem((4, 3), 2.0);
        let y = lin.forward(&x);
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -1.0]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::init(4, 3, &mut rng);
        let x = Array::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0));
        let dy = Array::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));

        let mut grad = lin.zeros_like();
        let dx = lin.backward(&x, &dy, &mut grad);

        let linc = lin.clone();
        let dyc = dy.clone();

        let mut xv: Vec<f64> = x.iter().cloned().collect();
        let analytic: Vec<f64> = dx.iter().cloned().collect();
        check_grad(
            &mut xv,
            &analytic,
            |v| {
                let xt = Array2::from_shape_vec((2, 4), v.to_vec()).unwrap();
                (linc.forward(&xt) * &dyc).sum()
            },
            1e-6,
            1e-7,
            "linear dx",
        );

        let mut wv: Vec<f64> = lin.weight.iter().cloned().collect();
        let analytic: Vec<f64> = grad.weight.iter().cloned().collect();
        let xc = x.clone();
        let bias = lin.bias.clone();
        check_grad(
            &mut wv,
            &analytic,
            |v| {
                let probe = Linear {
                    weight: Array2::from_shape_vec((3, 4), v.to_vec()).unwrap(),
                    bias: bias.clone(),
                };
                (probe.forward(&xc) * &dyc).sum()
            },
            1e-6,
            1e-7,
            "linear dw",
        );

        let mut bv: Vec<f64> = lin.bias.iter().cloned().collect();
        let analytic: Vec<f64> = grad.bias.iter().cloned().collect();
        check_grad(
            &mut bv,
            &analytic,
            |v| {
                let probe = Linear {
                    weight: lin.weight.clone(),
                    bias: Array1::from(v.to_vec()),
                };
                (probe.forward(&x) * &dyc).sum()
            },
            1e-6,
            1e-7,
            "linear db",
        );
    }
}
