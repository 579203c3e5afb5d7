//! Low-level neural-network layers with hand-written forward and backward
//! passes, all in `f64`.
//!
//! Layers own their parameters as plain `ndarray` arrays. Gradients accumulate
//! into a zeroed twin of the same struct (see `zeros_like` on each layer), so
//! an optimizer can walk parameters and gradients in lockstep through
//! [`collect_params`](Conv2d::collect_params)-style visitors. Batched inputs
//! are `(N, C, H, W)` for spatial layers and `(N, F)` for dense ones.
//!
//! Everything here is deterministic: parallelism (rayon) only ever splits
//! work along axes whose outputs are disjoint, and reductions run in fixed
//! order.

mod activation;
mod batchnorm;
mod cbam;
mod conv;
mod linear;

pub use activation::{leaky_relu, leaky_relu_grad, sigmoid, sigmoid_grad_from_output};
pub use batchnorm::{BatchNorm2d, BnCache};
pub use cbam::{Cbam, CbamCache};
pub use conv::Conv2d;
pub use linear::Linear;

/// Flat list of named parameter slices, used to drive optimizers and
/// checkpoint IO. Order is deterministic and identical across a model and its
/// gradient/optimizer-state twins.
pub type ParamList<'a> = Vec<(String, &'a mut [f64])>;

#[cfg(test)]
pub(crate) mod gradcheck {
    //! Central finite-difference checking shared by layer tests.

    /// Relative error with the usual symmetric denominator guard.
    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    /// Check `analytic` against a central finite difference of `f` for every
    /// coordinate reachable through `values`.
    ///
    /// `f` must be a pure function of the vector contents.
    pub fn check_grad(
        values: &mut [f64],
        analytic: &[f64],
        mut f: impl FnMut(&[f64]) -> f64,
        eps: f64,
        tol: f64,
        label: &str,
    ) {
        assert_eq!(values.len(), analytic.len());
        for i in 0..values.len() {
            let orig = values[i];
            values[i] = orig + eps;
            let fp = f(values);
            values[i] = orig - eps;
            let fm = f(values);
            values[i] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let err = rel_err(numeric, analytic[i]);
            assert!(
                err < tol,
                "{label}[{i}]: analytic {} vs numeric {} (rel err {err:.3e})",
                analytic[i],
                numeric
            );
        }
    }
}
