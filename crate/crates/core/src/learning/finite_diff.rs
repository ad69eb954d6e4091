//! Central finite differences.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// `(f(p + eps e_i) - f(p - eps e_i)) / (2 eps)` for every coordinate.
///
/// Coordinates are evaluated in parallel; each one only depends on its own
/// two evaluations, so the result does not depend on the worker count.
pub fn finite_diff_grad<F>(f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut p = params.to_vec();
            p[i] = params[i] + eps;
            let plus = f(&p);
            p[i] = params[i] - eps;
            let minus = f(&p);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite);
            }
            Ok((plus - minus) / (2.0 * eps))
        })
        .collect()
}
