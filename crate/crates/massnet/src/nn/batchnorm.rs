//! Batch normalization over `(N, C, H, W)` tensors.

use ndarray::{Array1, Array4};

use super::ParamList;

/// Per-channel batch normalization.
///
/// Training-mode forwards are pure: batch statistics go into the returned
/// [`BnCache`] and running statistics only change when the caller commits
/// them via [`BatchNorm2d::update_running`]. Inference mode normalizes with
/// the stored running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
}

/// Training-mode cache: normalized activations plus the batch statistics.
#[derive(Debug)]
pub struct BnCache {
    pub xhat: Array4<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: 1e-5,
        }
    }

    /// Exact pass-through configuration (eps = 0, unit gamma, zero mean/beta,
    /// unit variance) used by composition tests.
    pub fn identity(channels: usize) -> Self {
        Self {
            eps: 0.0,
            ..Self::new(channels)
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Trainable parameters only (gamma, beta).
    pub fn num_params(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
            running_mean: Array1::zeros(self.running_mean.raw_dim()),
            running_var: Array1::zeros(self.running_var.raw_dim()),
            eps: self.eps,
        }
    }

    pub fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((
            format!("{prefix}.gamma"),
            self.gamma.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.beta"),
            self.beta.as_slice_mut().expect("standard layout"),
        ));
    }

    /// Running statistics, for checkpointing.
    pub fn collect_state<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((
            format!("{prefix}.running_mean"),
            self.running_mean.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.running_var"),
            self.running_var.as_slice_mut().expect("standard layout"),
        ));
    }

    /// Parameters and running statistics together (one borrow of `self`).
    pub fn collect_all<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((
            format!("{prefix}.gamma"),
            self.gamma.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.beta"),
            self.beta.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.running_mean"),
            self.running_mean.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.running_var"),
            self.running_var.as_slice_mut().expect("standard layout"),
        ));
    }

    pub fn forward_train(&self, x: &Array4<f64>) -> (Array4<f64>, BnCache) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels(), "batchnorm channel mismatch");
        let m = (n * h * w) as f64;

        let mut mean = Array1::zeros(c);
        let mut var = Array1::zeros(c);
        for ci in 0..c {
            let mut acc = 0.0;
            for ni in 0..n {
                for v in x.index_axis(ndarray::Axis(0), ni).index_axis(ndarray::Axis(0), ci) {
                    acc += v;
                }
            }
            mean[ci] = acc / m;
            let mut acc2 = 0.0;
            for ni in 0..n {
                for v in x.index_axis(ndarray::Axis(0), ni).index_axis(ndarray::Axis(0), ci) {
                    let d = v - mean[ci];
                    acc2 += d * d;
                }
            }
            var[ci] = acc2 / m;
        }
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());

        let mut xhat = x.clone();
        let mut y = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let (mu, is) = (mean[ci], inv_std[ci]);
                let (g, b) = (self.gamma[ci], self.beta[ci]);
                let mut xh = xhat.index_axis_mut(ndarray::Axis(0), ni);
                let mut xh = xh.index_axis_mut(ndarray::Axis(0), ci);
                let mut yv = y.index_axis_mut(ndarray::Axis(0), ni);
                let mut yv = yv.index_axis_mut(ndarray::Axis(0), ci);
                ndarray::Zip::from(&mut xh).and(&mut yv).for_each(|xh, yv| {
                    *xh = (*xh - mu) * is;
                    *yv = g * *xh + b;
                });
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    pub fn forward_infer(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels(), "batchnorm channel mismatch");
        let mut y = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let is = 1.0 / (self.running_var[ci] + self.eps).sqrt();
                let (mu, g, b) = (self.running_mean[ci], self.gamma[ci], self.beta[ci]);
                let xv = x.index_axis(ndarray::Axis(0), ni);
                let xv = xv.index_axis(ndarray::Axis(0), ci);
                let mut yv = y.index_axis_mut(ndarray::Axis(0), ni);
                let mut yv = yv.index_axis_mut(ndarray::Axis(0), ci);
                ndarray::Zip::from(&mut yv).and(&xv).for_each(|yv, &xv| {
                    *yv = g * (xv - mu) * is + b;
                });
            }
        }
        y
    }

    /// Training-mode backward through the batch statistics.
    pub fn backward_train(
        &self,
        cache: &BnCache,
        dy: &Array4<f64>,
        grad: &mut BatchNorm2d,
    ) -> Array4<f64> {
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;

        let mut dgamma = Array1::<f64>::zeros(c);
        let mut dbeta = Array1::<f64>::zeros(c);
        for ni in 0..n {
            for ci in 0..c {
                let dyv = dy.index_axis(ndarray::Axis(0), ni);
                let dyv = dyv.index_axis(ndarray::Axis(0), ci);
                let xh = cache.xhat.index_axis(ndarray::Axis(0), ni);
                let xh = xh.index_axis(ndarray::Axis(0), ci);
                let mut dg = 0.0;
                let mut db = 0.0;
                ndarray::Zip::from(&dyv).and(&xh).for_each(|&d, &x| {
                    dg += d * x;
                    db += d;
                });
                dgamma[ci] += dg;
                dbeta[ci] += db;
            }
        }

        let mut dx = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let scale = self.gamma[ci] * cache.inv_std[ci];
                let (dg, db) = (dgamma[ci] / m, dbeta[ci] / m);
                let dyv = dy.index_axis(ndarray::Axis(0), ni);
                let dyv = dyv.index_axis(ndarray::Axis(0), ci);
                let xh = cache.xhat.index_axis(ndarray::Axis(0), ni);
                let xh = xh.index_axis(ndarray::Axis(0), ci);
                let mut dxv = dx.index_axis_mut(ndarray::Axis(0), ni);
                let mut dxv = dxv.index_axis_mut(ndarray::Axis(0), ci);
                ndarray::Zip::from(&mut dxv)
                    .and(&dyv)
                    .and(&xh)
                    .for_each(|dx, &dy, &xh| {
                        *dx = scale * (dy - db - xh * dg);
                    });
            }
        }

        grad.gamma += &dgamma;
        grad.beta += &dbeta;
        dx
    }

    /// Commit the cached batch statistics into the running statistics.
    pub fn update_running(&mut self, cache: &BnCache, momentum: f64) {
        for ci in 0..self.channels() {
            self.running_mean[ci] =
                (1.0 - momentum) * self.running_mean[ci] + momentum * cache.batch_mean[ci];
            self.running_var[ci] =
                (1.0 - momentum) * self.running_var[ci] + momentum * cache.batch_var[ci];
        }
    }
}
