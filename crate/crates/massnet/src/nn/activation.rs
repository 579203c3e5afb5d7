//! Elementwise activations.

use ndarray::{Array, Dimension, Zip};

pub fn leaky_relu<D: Dimension>(x: &Array<f64, D>, slope: f64) -> Array<f64, D> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient of leaky ReLU given the pre-activation input `x`.
pub fn leaky_relu_grad<D: Dimension>(
    x: &Array<f64, D>,
    dy: &Array<f64, D>,
    slope: f64,
) -> Array<f64, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(x).for_each(|d, &v| {
        if v <= 0.0 {
            *d *= slope;
        }
    });
    dx
}

pub fn sigmoid<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Gradient of sigmoid expressed through its output `y = sigmoid(x)`.
pub fn sigmoid_grad_from_output<D: Dimension>(
    y: &Array<f64, D>,
    dy: &Array<f64, D>,
) -> Array<f64, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|d, &v| {
        *d *= v * (1.0 - v);
    });
    dx
}
