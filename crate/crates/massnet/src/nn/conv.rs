//! 2D convolution (cross-correlation) with zero padding.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ParamList;

/// A plain 2D convolution layer over `(N, C, H, W)` tensors.
///
/// Weight layout is `(c_out, c_in, k, k)`. Padding is symmetric zero padding;
/// `k` is always odd here so `pad = k / 2` gives same-size outputs at
/// stride 1.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Array4<f64>,
    pub bias: Option<Array1<f64>>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// He-normal initialization; `bias` selects whether the layer carries one.
    pub fn init<R: Rng>(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let weight = Array4::from_shape_fn((c_out, c_in, k, k), |_| normal.sample(rng));
        Self {
            weight,
            bias: bias.then(|| Array1::zeros(c_out)),
            stride,
            pad,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array4::zeros(self.weight.raw_dim()),
            bias: self.bias.as_ref().map(|b| Array1::zeros(b.raw_dim())),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Array1::len)
    }

    pub fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((
            format!("{prefix}.weight"),
            self.weight.as_slice_mut().expect("standard layout"),
        ));
        if let Some(b) = &mut self.bias {
            out.push((
                format!("{prefix}.bias"),
                b.as_slice_mut().expect("standard layout"),
            ));
        }
    }

    fn out_dim(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel() as isize;
        let p = self.pad as isize;
        let s = self.stride as isize;
        let oh = (h as isize + 2 * p - k) / s + 1;
        let ow = (w as isize + 2 * p - k) / s + 1;
        assert!(oh > 0 && ow > 0, "conv output collapsed to zero size");
        (oh as usize, ow as usize)
    }

    /// Forward pass. Panics on channel mismatch (callers validate shapes at
    /// the model boundary).
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        assert_eq!(c_in, self.in_channels(), "conv input channel mismatch");
        let c_out = self.out_channels();
        let k = self.kernel();
        let (oh, ow) = self.out_dim(h, w);
        let (s, p) = (self.stride, self.pad);

        let xs = x.as_slice().expect("standard layout");
        let ws = self.weight.as_slice().expect("standard layout");
        let mut y = Array4::zeros((n, c_out, oh, ow));

        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(ni, mut yn)| {
                let ys = yn.as_slice_mut().expect("standard layout");
                let x_base = ni * c_in * h * w;
                for co in 0..c_out {
                    let y_base = co * oh * ow;
                    if let Some(b) = &self.bias {
                        let bv = b[co];
                        ys[y_base..y_base + oh * ow].fill(bv);
                    }
                    for ci in 0..c_in {
                        let xc = x_base + ci * h * w;
                        for kh in 0..k {
                            for kw in 0..k {
                                let wv = ws[((co * c_in + ci) * k + kh) * k + kw];
                                if wv == 0.0 {
                                    continue;
                                }
                                for ohi in 0..oh {
                                    let ih = (ohi * s + kh) as isize - p as isize;
                                    if ih < 0 || ih >= h as isize {
                                        continue;
                                    }
                                    let x_row = xc + ih as usize * w;
                                    let y_row = y_base + ohi * ow;
                                    for owi in 0..ow {
                                        let iw = (owi * s + kw) as isize - p as isize;
                                        if iw < 0 || iw >= w as isize {
                                            continue;
                                        }
                                        ys[y_row + owi] += wv * xs[x_row + iw as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        y
    }

    /// Backward pass: accumulates weight/bias gradients into `grad` and
    /// returns the input gradient.
    pub fn backward(&self, x: &Array4<f64>, dy: &Array4<f64>, grad: &mut Conv2d) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let c_out = self.out_channels();
        let k = self.kernel();
        let (oh, ow) = self.out_dim(h, w);
        assert_eq!(dy.dim(), (n, c_out, oh, ow), "conv dy shape mismatch");
        let (s, p) = (self.stride, self.pad);

        let xs = x.as_slice().expect("standard layout");
        let dys = dy.as_slice().expect("standard layout");
        let ws = self.weight.as_slice().expect("standard layout");

        // dweight: parallel over output channels (disjoint gradient slices)
        grad.weight
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(co, mut gw)| {
                let gws = gw.as_slice_mut().expect("standard layout");
                for ni in 0..n {
                    let dy_base = (ni * c_out + co) * oh * ow;
                    let x_base = ni * c_in * h * w;
                    for ci in 0..c_in {
                        let xc = x_base + ci * h * w;
                        for kh in 0..k {
                            for kw in 0..k {
                                let mut acc = 0.0;
                                for ohi in 0..oh {
                                    let ih = (ohi * s + kh) as isize - p as isize;
                                    if ih < 0 || ih >= h as isize {
                                        continue;
                                    }
                                    let x_row = xc + ih as usize * w;
                                    let dy_row = dy_base + ohi * ow;
                                    for owi in 0..ow {
                                        let iw = (owi * s + kw) as isize - p as isize;
                                        if iw < 0 || iw >= w as isize {
                                            continue;
                                        }
                                        acc += dys[dy_row + owi] * xs[x_row + iw as usize];
                                    }
                                }
                                gws[(ci * k + kh) * k + kw] += acc;
                            }
                        }
                    }
                }
            });

        if let Some(gb) = &mut grad.bias {
            for co in 0..c_out {
                let mut acc = 0.0;
                for ni in 0..n {
                    let base = (ni * c_out + co) * oh * ow;
                    acc += dys[base..base + oh * ow].iter().sum::<f64>();
                }
                gb[co] += acc;
            }
        }

        // dx: parallel over samples (disjoint slices)
        let mut dx = Array4::zeros((n, c_in, h, w));
        dx.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(ni, mut dxn)| {
                let dxs = dxn.as_slice_mut().expect("standard layout");
                for co in 0..c_out {
                    let dy_base = (ni * c_out + co) * oh * ow;
                    for ci in 0..c_in {
                        let dx_c = ci * h * w;
                        for kh in 0..k {
                            for kw in 0..k {
                                let wv = ws[((co * c_in + ci) * k + kh) * k + kw];
                                if wv == 0.0 {
                                    continue;
                                }
                                for ohi in 0..oh {
                                    let ih = (ohi * s + kh) as isize - p as isize;
                                    if ih < 0 || ih >= h as isize {
                                        continue;
                                    }
                                    let dx_row = dx_c + ih as usize * w;
                                    let dy_row = dy_base + ohi * ow;
                                    for owi in 0..ow {
                                        let iw = (owi * s + kw) as isize - p as isize;
                                        if iw < 0 || iw >= w as isize {
                                            continue;
                                        }
                                        dxs[dx_row + iw as usize] += wv * dys[dy_row + owi];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        dx
    }
}
