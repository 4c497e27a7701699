//! Training losses with analytic gradients.
//!
//! Every loss is a mean over all `H x C` cells and returns the gradient with
//! respect to the model outputs it consumes.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};

use crate::domain::{Forecast, ForecastPayload, NormStats};
use crate::error::{Error, Result};
use crate::norm::sub;
use crate::scalar::Scalar;

/// Loss value and gradient with respect to the point prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLoss<S> {
    pub loss: S,
    pub grad: Array2<S>,
}

/// Mean squared error. Gradient `2 (pred - target) / (H C)`.
pub fn loss_mse<S: Scalar>(pred: ArrayView2<'_, S>, target: ArrayView2<'_, S>) -> Result<PointLoss<S>> {
    let diff = sub(pred, target)?;
    let n = S::of_usize(diff.len());
    let loss = diff.iter().fold(S::zero(), |acc, &d| acc + d * d) / n;
    let two = S::of(2.0);
    Ok(PointLoss {
        loss,
        grad: diff.mapv(|d| two * d / n),
    })
}

/// Mean absolute error. Gradient `sign(pred - target) / (H C)`, zero at a tie.
pub fn loss_mae<S: Scalar>(pred: ArrayView2<'_, S>, target: ArrayView2<'_, S>) -> Result<PointLoss<S>> {
    let diff = sub(pred, target)?;
    let n = S::of_usize(diff.len());
    let loss = diff.iter().fold(S::zero(), |acc, &d| acc + d.abs()) / n;
    Ok(PointLoss {
        loss,
        grad: diff.mapv(|d| {
            if d > S::zero() {
                S::one() / n
            } else if d < S::zero() {
                -S::one() / n
            } else {
                S::zero()
            }
        }),
    })
}

/// Gaussian NLL and its gradient with respect to the normalized mean and the
/// normalized log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLoss<S> {
    pub loss: S,
    pub d_mean: Array2<S>,
    pub d_log_std: Array2<S>,
}

/// Negative log-likelihood of raw-scale targets under the forecast distribution
/// after de-normalizing it with `stats`.
///
/// With `mean' = g mean + b` and `std' = g std`, the per-cell NLL equals the
/// normalized-space NLL of `(y - b) / g` plus `ln g`. The offset does not
/// depend on model outputs, so the returned gradients are the normalized-space
/// ones regardless of input magnitude.
pub fn loss_gaussian_nll<S: Scalar>(
    f: &Forecast<S>,
    target_raw: ArrayView2<'_, S>,
    stats: &NormStats<S>,
) -> Result<GaussianLoss<S>> {
    let ForecastPayload::Gaussian { mean, std } = f.payload() else {
        return Err(Error::KindMismatch {
            expected: "Gaussian",
            found: f.kind().name(),
        });
    };
    if mean.dim() != target_raw.dim() {
        return Err(Error::shape(
            format!("{:?}", mean.dim()),
            format!("{:?}", target_raw.dim()),
        ));
    }
    if target_raw.ncols() != stats.channels() {
        return Err(Error::shape(format!("{} channels", stats.channels()), target_raw.ncols()));
    }
    if let Some(((row, col), _)) = std.indexed_iter().find(|(_, s)| !(**s > S::zero() && s.is_finite())) {
        return Err(Error::NonPositiveSigma { row, col });
    }

    let n = S::of_usize(mean.len());
    let half_ln_2pi = S::of(0.5) * (S::PI() + S::PI()).ln();
    let half = S::of(0.5);
    let mut total = S::zero();
    let mut d_mean = Array2::zeros(mean.dim());
    let mut d_log_std = Array2::zeros(mean.dim());

    for (c, (&b, &g)) in stats.shift().iter().zip(stats.scale()).enumerate() {
        for h in 0..mean.nrows() {
            let (mu, sd, y) = (mean[[h, c]], std[[h, c]], target_raw[[h, c]]);
            // Raw-scale density of the de-normalized distribution.
            let mu_raw = g * mu + b;
            let sd_raw = g * sd;
            let z_raw = (y - mu_raw) / sd_raw;
            total += half_ln_2pi + sd_raw.ln() + half * z_raw * z_raw;

            let z = ((y - b) / g - mu) / sd;
            d_mean[[h, c]] = -z / sd / n;
            d_log_std[[h, c]] = (S::one() - z * z) / n;
        }
    }
    Ok(GaussianLoss {
        loss: total / n,
        d_mean,
        d_log_std,
    })
}

/// Token cross-entropy value and gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLoss<S> {
    pub loss: S,
    pub grad: Array3<S>,
}

/// Mean categorical cross-entropy with a softmax over the last axis.
/// Gradient `(softmax - onehot) / (H C)`.
pub fn loss_token_ce<S: Scalar>(logits: ArrayView3<'_, S>, target_bins: ArrayView2<'_, usize>) -> Result<TokenLoss<S>> {
    let (h, c, bins) = logits.dim();
    if (h, c) != target_bins.dim() {
        return Err(Error::shape(format!("({h}, {c})"), format!("{:?}", target_bins.dim())));
    }
    if let Some(((row, col), &bin)) = target_bins.indexed_iter().find(|(_, &b)| b >= bins) {
        return Err(Error::BadBinIndex { row, col, bin, bins });
    }
    let n = S::of_usize(h * c);
    let mut grad = Array3::zeros(logits.dim());
    let mut total = S::zero();
    Zip::from(logits.lanes(Axis(2)))
        .and(grad.lanes_mut(Axis(2)))
        .and(&target_bins)
        .for_each(|row, mut g, &target| {
            let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
            let sum = row.iter().fold(S::zero(), |acc, &v| acc + (v - max).exp());
            let log_z = max + sum.ln();
            total += log_z - row[target];
            for (gb, &v) in g.iter_mut().zip(row.iter()) {
                *gb = (v - log_z).exp() / n;
            }
            g[target] -= S::one() / n;
        });
    Ok(TokenLoss {
        loss: total / n,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    use crate::domain::{Method, Scope};

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let x = array![[1.0, -2.0], [3.5, 0.25]];
        for l in [loss_mse(x.view(), x.view()).unwrap(), loss_mae(x.view(), x.view()).unwrap()] {
            assert_eq!(l.loss, 0.0);
            assert!(l.grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn mse_mae_example() {
        let pred = array![[3.0], [3.0]];
        let target = array![[2.0], [4.0]];
        let mse = loss_mse(pred.view(), target.view()).unwrap();
        let mae = loss_mae(pred.view(), target.view()).unwrap();
        assert_eq!(mse.loss, 1.0);
        assert_eq!(mae.loss, 1.0);
        assert_eq!(mse.grad, array![[1.0], [-1.0]]);
        assert_eq!(mae.grad, array![[0.5], [-0.5]]);
    }

    #[test]
    fn point_losses_check_shapes() {
        assert!(matches!(
            loss_mse(array![[1.0]].view(), array![[1.0, 2.0]].view()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn gaussian(mean: f64, std: f64, g: f64) -> (Forecast<f64>, NormStats<f64>) {
        let stats = NormStats::new(Method::RevIN, Scope::InstanceLevel, vec![0.0], vec![g]).unwrap();
        let f = Forecast::gaussian(array![[mean]], array![[std]], stats.clone()).unwrap();
        (f, stats)
    }

    #[test]
    fn standard_normal_nll() {
        let (f, stats) = gaussian(0.0, 1.0, 1.0);
        let l = loss_gaussian_nll(&f, array![[0.0]].view(), &stats).unwrap();
        assert_abs_diff_eq!(l.loss, 0.9189385332046727, epsilon = 1e-12);

        let (f, stats) = gaussian(0.0, 1.0, 2.0);
        let l2 = loss_gaussian_nll(&f, array![[0.0]].view(), &stats).unwrap();
        assert_abs_diff_eq!(l2.loss, 0.9189385332046727 + 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l2.loss, 1.6120857137646180, epsilon = 1e-12);
        assert_eq!(l.d_mean, l2.d_mean);
        assert_eq!(l.d_log_std, l2.d_log_std);
    }

    #[test]
    fn nll_rejects_point_forecast() {
        let stats = NormStats::identity(1, Scope::InstanceLevel);
        let f = Forecast::point(array![[0.0]], stats.clone()).unwrap();
        assert!(matches!(
            loss_gaussian_nll(&f, array![[0.0]].view(), &stats),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn uniform_logits_cost_ln_bins() {
        let logits = Array3::<f64>::zeros((2, 3, 4));
        let l = loss_token_ce(logits.view(), Array2::from_elem((2, 3), 1).view()).unwrap();
        assert_abs_diff_eq!(l.loss, 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l.loss, 1.3862944, epsilon = 1e-7);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let mut logits = Array3::<f64>::zeros((1, 1, 4));
        logits[[0, 0, 2]] = 1e3;
        let l = loss_token_ce(logits.view(), array![[2]].view()).unwrap();
        assert!(l.loss < 1e-12);
    }

    #[test]
    fn out_of_range_target_bin() {
        let logits = Array3::<f64>::zeros((1, 1, 4));
        assert!(matches!(
            loss_token_ce(logits.view(), array![[4]].view()),
            Err(Error::BadBinIndex { bin: 4, bins: 4, .. })
        ));
    }
}
