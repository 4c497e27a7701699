//! Rolling-window evaluation on test rows.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Forecast, ForecastPayload, Scheme};
use crate::error::{Error, Result};
use crate::metrics::{mase, naive_mae};
use crate::models::LinearForecaster;
use crate::norm::{denormalize, denormalize_gaussian, fit_window_stats, normalize};
use crate::scalar::Scalar;

/// Index of the median bin of `softmax(logits)`: the first bin whose
/// cumulative probability reaches one half.
fn median_bin<S: Scalar>(logits: impl Iterator<Item = S> + Clone) -> usize {
    let max = logits.clone().fold(S::neg_infinity(), S::max);
    let weights: Vec<S> = logits.map(|v| (v - max).exp()).collect();
    let total = weights.iter().fold(S::zero(), |a, &w| a + w);
    let half = total * S::of(0.5);
    let mut acc = S::zero();
    for (b, &w) in weights.iter().enumerate() {
        acc = acc + w;
        if acc >= half {
            return b;
        }
    }
    weights.len() - 1
}

/// Raw-scale point forecast from any forecast kind: the point itself, the
/// Gaussian mean, or the center of the median token bin, each mapped back
/// with the forecast's de-normalization statistics.
pub fn point_forecast<S: Scalar>(f: &Forecast<S>) -> Result<Array2<S>> {
    let stats = f.denorm_stats();
    match f.payload() {
        ForecastPayload::Point(p) => denormalize(p.view(), stats),
        ForecastPayload::Gaussian { .. } => match denormalize_gaussian(f, stats)?.into_payload() {
            ForecastPayload::Gaussian { mean, .. } => Ok(mean),
            _ => unreachable!("denormalize_gaussian keeps the kind"),
        },
        ForecastPayload::Token { logits, tokenizer } => {
            let (h, c, _) = logits.dim();
            let norm = Array2::from_shape_fn((h, c), |(i, j)| {
                let b = median_bin(logits.slice(s![i, j, ..]).iter().copied());
                S::of(tokenizer.center(b))
            });
            denormalize(norm.view(), stats)
        }
    }
}

/// Start offsets, relative to the first test row, of the non-overlapping
/// evaluation windows: stride `horizon`, each `context_len + horizon` rows
/// long and fully inside the test rows.
pub fn test_window_offsets<S: Scalar>(d: &Dataset<S>, context_len: usize, horizon: usize) -> Result<Vec<usize>> {
    let needed = context_len + horizon;
    let available = d.test_len();
    if horizon == 0 || available < needed {
        return Err(Error::InsufficientTestData {
            dataset: d.name().to_string(),
            available,
            needed,
        });
    }
    Ok((0..=available - needed).step_by(horizon).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// Offset of the context start from the first test row.
    pub offset: usize,
    pub mase: f64,
}

/// Forecast for one raw context: inference-time statistics from the window
/// itself, normalize, predict, map back to raw scale. Returns the first
/// `horizon` rows.
pub fn forecast_window<S: Scalar>(
    model: &LinearForecaster<S>,
    scheme: Scheme,
    context: ArrayView2<'_, S>,
    horizon: usize,
) -> Result<Array2<S>> {
    if horizon > model.horizon() {
        return Err(Error::shape(
            format!("horizon <= {}", model.horizon()),
            horizon,
        ));
    }
    let stats = fit_window_stats(context, scheme.inference_method())?;
    let input = normalize(context, &stats)?;
    let f = model.forecast(input.view(), stats)?;
    let mut raw = point_forecast(&f)?;
    raw.slice_axis_inplace(Axis(0), (0..horizon).into());
    Ok(raw)
}

/// MASE of every evaluation window of `d`'s test rows.
pub fn evaluate<S: Scalar>(
    model: &LinearForecaster<S>,
    scheme: Scheme,
    d: &Dataset<S>,
    horizon: usize,
    naive_lag: usize,
) -> Result<Vec<WindowScore>> {
    let l = model.context_len();
    let test = d.test_rows();
    test_window_offsets(d, l, horizon)?
        .into_iter()
        .map(|o| {
            let context = test.slice(s![o..o + l, ..]);
            let actual = test.slice(s![o + l..o + l + horizon, ..]);
            let pred = forecast_window(model, scheme, context, horizon)?;
            let naive = naive_mae(context, naive_lag)?;
            Ok(WindowScore {
                offset: o,
                mase: mase(pred.view(), actual, &naive)?.as_f64(),
            })
        })
        .collect()
}

/// Mean MASE over the evaluation windows.
pub fn evaluate_mean<S: Scalar>(
    model: &LinearForecaster<S>,
    scheme: Scheme,
    d: &Dataset<S>,
    horizon: usize,
    naive_lag: usize,
) -> Result<f64> {
    let scores = evaluate(model, scheme, d, horizon, naive_lag)?;
    Ok(scores.iter().map(|w| w.mase).sum::<f64>() / scores.len() as f64)
}
