//! MASE scoring and relative improvement.

use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::{epsilon, Scalar};

/// Per-channel MAE of the lag-`m` naive forecast over the context window:
/// the mean of `|x[t] - x[t - m]|` for `t` in `[m, L)`, floored at epsilon.
pub fn naive_mae<S: Scalar>(context: ArrayView2<'_, S>, m: usize) -> Result<Vec<S>> {
    let len = context.nrows();
    if m == 0 || len <= m {
        return Err(Error::WindowTooShort { len, lag: m });
    }
    let n = S::of_usize(len - m);
    let eps = epsilon::<S>();
    Ok(context
        .axis_iter(Axis(1))
        .map(|col| {
            let sum = (m..len).fold(S::zero(), |acc, t| acc + (col[t] - col[t - m]).abs());
            (sum / n).max(eps)
        })
        .collect())
}

/// Mean over channels of `mean_t |forecast - actual| / naive[c]`.
///
/// All three inputs must be in the same (raw) scale.
pub fn mase<S: Scalar>(forecast: ArrayView2<'_, S>, actual: ArrayView2<'_, S>, naive: &[S]) -> Result<S> {
    if forecast.dim() != actual.dim() {
        return Err(Error::shape(
            format!("{:?}", actual.dim()),
            format!("{:?}", forecast.dim()),
        ));
    }
    if naive.len() != actual.ncols() {
        return Err(Error::shape(format!("{} naive entries", actual.ncols()), naive.len()));
    }
    if forecast.is_empty() {
        return Err(Error::EmptyInput("empty forecast"));
    }
    if let Some(&bad) = naive.iter().find(|v| !(**v > S::zero())) {
        return Err(Error::ZeroReference(bad.as_f64()));
    }
    let h = S::of_usize(actual.nrows());
    let total = forecast
        .axis_iter(Axis(1))
        .zip(actual.axis_iter(Axis(1)))
        .zip(naive)
        .fold(S::zero(), |acc, ((f, a), &d)| {
            let mae = f.iter().zip(a.iter()).fold(S::zero(), |s, (&x, &y)| s + (x - y).abs()) / h;
            acc + mae / d
        });
    Ok(total / S::of_usize(naive.len()))
}

/// Percentage drop in MASE from reference `mase_r` to `mase_m`.
pub fn improvement(mase_r: f64, mase_m: f64) -> Result<f64> {
    if !(mase_r > 0.0) {
        return Err(Error::ZeroReference(mase_r));
    }
    Ok((mase_r - mase_m) / mase_r * 100.0)
}
