//! Convolutional block attention: sequential channel and spatial gating.
//!
//! Channel attention pools the map to per-channel average and max
//! descriptors, runs both through a shared two-layer MLP, and gates channels
//! with the sigmoid of the summed outputs. Spatial attention then pools the
//! gated map across channels (average and max), convolves the 2-channel
//! result, and gates positions with a second sigmoid.

use ndarray::{Array2, Array4, Axis};
use rand::Rng;

use super::{leaky_relu, leaky_relu_grad, sigmoid, sigmoid_grad_from_output, Conv2d, Linear};
use super::ParamList;

#[derive(Debug, Clone)]
pub struct Cbam {
    /// Channel-MLP reduction layer, `C -> C / reduction`.
    pub fc1: Linear,
    /// Channel-MLP expansion layer, `C / reduction -> C`.
    pub fc2: Linear,
    /// Spatial gate convolution, 2 channels in, 1 out, same padding.
    pub spatial: Conv2d,
}

/// Everything the backward pass needs, including both gate tensors (which
/// tests probe for range).
#[derive(Debug)]
pub struct CbamCache {
    pub s_avg: Array2<f64>,
    pub s_max: Array2<f64>,
    /// Flat `h * W + w` argmax per `(n, c)` for the channel max descriptor.
    max_pos: Array2<usize>,
    h_avg_pre: Array2<f64>,
    h_max_pre: Array2<f64>,
    /// Channel gate, `(N, C)`, every value in (0, 1).
    pub channel_gate: Array2<f64>,
    x1: Array4<f64>,
    pooled: Array4<f64>,
    /// Argmax channel per `(n, h, w)` for the spatial max map.
    cmax: ndarray::Array3<usize>,
    /// Spatial gate, `(N, 1, H, W)`, every value in (0, 1).
    pub spatial_gate: Array4<f64>,
}

impl Cbam {
    pub fn init<R: Rng>(
        channels: usize,
        reduction: usize,
        spatial_kernel: usize,
        rng: &mut R,
    ) -> Self {
        let hidden = (channels / reduction).max(1);
        Self {
            fc1: Linear::init(channels, hidden, rng),
            fc2: Linear::init(hidden, channels, rng),
            spatial: Conv2d::init(2, 1, spatial_kernel, 1, spatial_kernel / 2, true, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            spatial: self.spatial.zeros_like(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.fc1.num_params() + self.fc2.num_params() + self.spatial.num_params()
    }

    pub fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.fc1.collect_params(&format!("{prefix}.fc1"), out);
        self.fc2.collect_params(&format!("{prefix}.fc2"), out);
        self.spatial.collect_params(&format!("{prefix}.spatial"), out);
    }

    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, CbamCache) {
        let (n, c, h, w) = x.dim();
        let hw = (h * w) as f64;

        // channel descriptors
        let mut s_avg = Array2::zeros((n, c));
        let mut s_max = Array2::zeros((n, c));
        let mut max_pos = Array2::zeros((n, c));
        for ni in 0..n {
            for ci in 0..c {
                let plane = x.index_axis(Axis(0), ni);
                let plane = plane.index_axis(Axis(0), ci);
                let mut acc = 0.0;
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for (i, &v) in plane.iter().enumerate() {
                    acc += v;
                    if v > best {
                        best = v;
                        best_i = i;
                    }
                }
                s_avg[(ni, ci)] = acc / hw;
                s_max[(ni, ci)] = best;
                max_pos[(ni, ci)] = best_i;
            }
        }

        // shared MLP, relu in the middle
        let h_avg_pre = self.fc1.forward(&s_avg);
        let h_max_pre = self.fc1.forward(&s_max);
        let z = self.fc2.forward(&leaky_relu(&h_avg_pre, 0.0))
            + self.fc2.forward(&leaky_relu(&h_max_pre, 0.0));
        let channel_gate = sigmoid(&z);

        let mut x1 = x.clone();
        for ni in 0..n {
            for ci in 0..c {
                let g = channel_gate[(ni, ci)];
                let mut plane = x1.index_axis_mut(Axis(0), ni);
                let mut plane = plane.index_axis_mut(Axis(0), ci);
                plane.mapv_inplace(|v| v * g);
            }
        }

        // spatial descriptors over the gated map
        let mut pooled = Array4::zeros((n, 2, h, w));
        let mut cmax = ndarray::Array3::zeros((n, h, w));
        for ni in 0..n {
            for hi in 0..h {
                for wi in 0..w {
                    let mut acc = 0.0;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_c = 0;
                    for ci in 0..c {
                        let v = x1[(ni, ci, hi, wi)];
                        acc += v;
                        if v > best {
                            best = v;
                            best_c = ci;
                        }
                    }
                    pooled[(ni, 0, hi, wi)] = acc / c as f64;
                    pooled[(ni, 1, hi, wi)] = best;
                    cmax[(ni, hi, wi)] = best_c;
                }
            }
        }

        let z_s = self.spatial.forward(&pooled);
        let spatial_gate = sigmoid(&z_s);

        let mut y = x1.clone();
        for ni in 0..n {
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        y[(ni, ci, hi, wi)] *= spatial_gate[(ni, 0, hi, wi)];
                    }
                }
            }
        }

        (
            y,
            CbamCache {
                s_avg,
                s_max,
                max_pos,
                h_avg_pre,
                h_max_pre,
                channel_gate,
                x1,
                pooled,
                cmax,
                spatial_gate,
            },
        )
    }

    pub fn backward(
        &self,
        x: &Array4<f64>,
        cache: &CbamCache,
        dy: &Array4<f64>,
        grad: &mut Cbam,
    ) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let hw = (h * w) as f64;

        // y = x1 * ms
        let mut dms = Array4::zeros((n, 1, h, w));
        let mut dx1 = dy.clone();
        for ni in 0..n {
            for hi in 0..h {
                for wi in 0..w {
                    let ms = cache.spatial_gate[(ni, 0, hi, wi)];
                    let mut acc = 0.0;
                    for ci in 0..c {
                        acc += dy[(ni, ci, hi, wi)] * cache.x1[(ni, ci, hi, wi)];
                        dx1[(ni, ci, hi, wi)] *= ms;
                    }
                    dms[(ni, 0, hi, wi)] = acc;
                }
            }
        }

        // ms = sigmoid(conv(pooled))
        let dz_s = sigmoid_grad_from_output(&cache.spatial_gate, &dms);
        let dpooled = self.spatial.backward(&cache.pooled, &dz_s, &mut grad.spatial);
        for ni in 0..n {
            for hi in 0..h {
                for wi in 0..w {
                    let davg = dpooled[(ni, 0, hi, wi)] / c as f64;
                    for ci in 0..c {
                        dx1[(ni, ci, hi, wi)] += davg;
                    }
                    dx1[(ni, cache.cmax[(ni, hi, wi)], hi, wi)] += dpooled[(ni, 1, hi, wi)];
                }
            }
        }

        // x1 = x * mc
        let mut dmc = Array2::zeros((n, c));
        let mut dx = dx1.clone();
        for ni in 0..n {
            for ci in 0..c {
                let g = cache.channel_gate[(ni, ci)];
                let mut acc = 0.0;
                for hi in 0..h {
                    for wi in 0..w {
                        acc += dx1[(ni, ci, hi, wi)] * x[(ni, ci, hi, wi)];
                        dx[(ni, ci, hi, wi)] *= g;
                    }
                }
                dmc[(ni, ci)] = acc;
            }
        }

        // mc = sigmoid(fc2(relu(fc1(s_avg))) + fc2(relu(fc1(s_max))))
        let dz = sigmoid_grad_from_output(&cache.channel_gate, &dmc);
        let h_avg = leaky_relu(&cache.h_avg_pre, 0.0);
        let h_max = leaky_relu(&cache.h_max_pre, 0.0);
        let dh_avg = self.fc2.backward(&h_avg, &dz, &mut grad.fc2);
        let dh_max = self.fc2.backward(&h_max, &dz, &mut grad.fc2);
        let dh_avg = leaky_relu_grad(&cache.h_avg_pre, &dh_avg, 0.0);
        let dh_max = leaky_relu_grad(&cache.h_max_pre, &dh_max, 0.0);
        let ds_avg = self.fc1.backward(&cache.s_avg, &dh_avg, &mut grad.fc1);
        let ds_max = self.fc1.backward(&cache.s_max, &dh_max, &mut grad.fc1);

        for ni in 0..n {
            for ci in 0..c {
                let davg = ds_avg[(ni, ci)] / hw;
                let mut plane = dx.index_axis_mut(Axis(0), ni);
                let mut plane = plane.index_axis_mut(Axis(0), ci);
                plane.mapv_inplace(|v| v + davg);
                let flat = cache.max_pos[(ni, ci)];
                dx[(ni, ci, flat / w, flat % w)] += ds_max[(ni, ci)];
            }
        }

        dx
    }
}
