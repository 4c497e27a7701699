//! Shift/scale normalization at dataset and instance scope.
//!
//! Fitting and applying are separate: `fit_*` produce [`NormStats`], and
//! [`normalize`] / [`denormalize`] are pure functions of `(input, stats)`. That
//! split is what lets the evaluation path swap dataset-level statistics for
//! statistics of the current context window.
//!
//! Standard deviations are population (divide-by-N) everywhere. Any fitted
//! scale below [`EPSILON`](crate::scalar::EPSILON) is raised to it.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::domain::{Dataset, Forecast, ForecastPayload, Instance, Method, NormStats, Scope};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default rejection threshold for clipped instance normalization.
pub const CLIP_THRESHOLD: f64 = 10.0;

fn column_mean<S: Scalar>(x: &ArrayView2<'_, S>) -> Vec<S> {
    let n = S::of_usize(x.nrows());
    x.axis_iter(Axis(1))
        .map(|col| col.iter().fold(S::zero(), |acc, &v| acc + v) / n)
        .collect()
}

fn column_std<S: Scalar>(x: &ArrayView2<'_, S>, mean: &[S]) -> Vec<S> {
    let n = S::of_usize(x.nrows());
    x.axis_iter(Axis(1))
        .zip(mean)
        .map(|(col, &m)| {
            let ss = col.iter().fold(S::zero(), |acc, &v| acc + (v - m) * (v - m));
            (ss / n).sqrt()
        })
        .collect()
}

fn column_fold<S: Scalar>(x: &ArrayView2<'_, S>, init: S, f: impl Fn(S, S) -> S) -> Vec<S> {
    x.axis_iter(Axis(1))
        .map(|col| col.iter().fold(init, |acc, &v| f(acc, v)))
        .collect()
}

/// Fits `method` on the rows of `x` without restricting which methods are
/// allowed at which scope. The public fitting functions below enforce the
/// method/scope pairing.
pub fn fit_stats<S: Scalar>(x: ArrayView2<'_, S>, method: Method, scope: Scope) -> Result<NormStats<S>> {
    let (rows, channels) = x.dim();
    if rows == 0 || channels == 0 {
        return Err(Error::EmptyInput("cannot fit statistics on an empty matrix"));
    }
    let zeros = || vec![S::zero(); channels];
    let stats = match method {
        Method::Raw => NormStats::identity(channels, scope),
        Method::Standardization | Method::RevIN => {
            let mean = column_mean(&x);
            let std = column_std(&x, &mean);
            NormStats::guarded(method, scope, mean, std)
        }
        Method::MinMax => {
            let lo = column_fold(&x, S::infinity(), S::min);
            let hi = column_fold(&x, S::neg_infinity(), S::max);
            let range = lo.iter().zip(&hi).map(|(&l, &h)| h - l).collect();
            NormStats::guarded(method, scope, lo, range)
        }
        Method::MaxAbs => {
            let m = column_fold(&x, S::zero(), |acc, v| acc.max(v.abs()));
            NormStats::guarded(method, scope, zeros(), m)
        }
        Method::MeanAbs => {
            let n = S::of_usize(rows);
            let m = column_fold(&x, S::zero(), |acc, v| acc + v.abs())
                .into_iter()
                .map(|s| s / n)
                .collect();
            NormStats::guarded(method, scope, zeros(), m)
        }
    };
    if !stats.guarded_channels().is_empty() {
        log::warn!(
            "{method}: degenerate channel(s) {:?}, scale raised to epsilon",
            stats.guarded_channels()
        );
    }
    Ok(stats)
}

/// Dataset-level statistics from the TRAIN rows `[0, split_index)` only.
///
/// Channels whose fitted scale is zero are reported through
/// [`NormStats::guarded_channels`] rather than failing.
pub fn fit_dataset_stats<S: Scalar>(d: &Dataset<S>, method: Method) -> Result<NormStats<S>> {
    match method {
        Method::Standardization | Method::MinMax | Method::MaxAbs => {
            fit_stats(d.train_rows(), method, Scope::DatasetLevel)
        }
        other => Err(Error::WrongMethod {
            expected: "Standardization, MinMax or MaxAbs".into(),
            found: other.to_string(),
        }),
    }
}

/// Instance-level statistics of a context window.
pub fn fit_instance_stats<S: Scalar>(context: ArrayView2<'_, S>, method: Method) -> Result<NormStats<S>> {
    match method {
        Method::RevIN | Method::MeanAbs => fit_stats(context, method, Scope::InstanceLevel),
        other => Err(Error::WrongMethod {
            expected: "RevIN or MeanAbs".into(),
            found: other.to_string(),
        }),
    }
}

/// Statistics of the given family computed from a context window, used at
/// inference where dataset-level statistics are unavailable (e.g. MinMax uses
/// the window's min and range).
pub fn fit_window_stats<S: Scalar>(context: ArrayView2<'_, S>, family: Method) -> Result<NormStats<S>> {
    fit_stats(context, family, Scope::InstanceLevel)
}

fn check_channels<S: Scalar>(x: &ArrayView2<'_, S>, stats: &NormStats<S>) -> Result<()> {
    if x.ncols() != stats.channels() {
        return Err(Error::shape(format!("{} channels", stats.channels()), x.ncols()));
    }
    Ok(())
}

/// `(x - shift) / scale` per channel.
pub fn normalize<S: Scalar>(x: ArrayView2<'_, S>, stats: &NormStats<S>) -> Result<Array2<S>> {
    check_channels(&x, stats)?;
    if stats.is_identity() {
        return Ok(x.to_owned());
    }
    let mut out = x.to_owned();
    for (mut col, (&b, &g)) in out
        .axis_iter_mut(Axis(1))
        .zip(stats.shift().iter().zip(stats.scale()))
    {
        col.mapv_inplace(|v| (v - b) / g);
    }
    Ok(out)
}

/// Inverse of [`normalize`]: `x * scale + shift` per channel.
pub fn denormalize<S: Scalar>(x: ArrayView2<'_, S>, stats: &NormStats<S>) -> Result<Array2<S>> {
    check_channels(&x, stats)?;
    if stats.is_identity() {
        return Ok(x.to_owned());
    }
    let mut out = x.to_owned();
    for (mut col, (&b, &g)) in out
        .axis_iter_mut(Axis(1))
        .zip(stats.shift().iter().zip(stats.scale()))
    {
        col.mapv_inplace(|v| v * g + b);
    }
    Ok(out)
}

/// Maps a Gaussian forecast from normalized to raw scale:
/// `mean' = scale * mean + shift`, `std' = scale * std`.
///
/// The result carries identity statistics since it is already in raw scale.
pub fn denormalize_gaussian<S: Scalar>(f: &Forecast<S>, stats: &NormStats<S>) -> Result<Forecast<S>> {
    let ForecastPayload::Gaussian { mean, std } = f.payload() else {
        return Err(Error::KindMismatch {
            expected: "Gaussian",
            found: f.kind().name(),
        });
    };
    let mean = denormalize(mean.view(), stats)?;
    let mut std = std.clone();
    if !stats.is_identity() {
        for (mut col, &g) in std.axis_iter_mut(Axis(1)).zip(stats.scale()) {
            col.mapv_inplace(|v| v * g);
        }
    }
    Forecast::gaussian(mean, std, NormStats::identity(stats.channels(), Scope::InstanceLevel))
}

/// Result of clipped instance normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipOutcome<S> {
    /// Context and horizon both normalized with the context statistics.
    pub normalized: Instance<S>,
    pub stats: NormStats<S>,
    /// Largest `|x~|` over context and horizon.
    pub max_abs: S,
    /// `max_abs > clip_threshold`; rejected instances must not be trained on.
    pub rejected: bool,
}

/// Fits instance statistics on the context and applies them to the whole
/// instance, context and horizon. The instance is rejected as a whole when
/// any normalized value in any channel exceeds `clip_threshold` in magnitude.
pub fn clipped_instance_normalize<S: Scalar>(
    inst: &Instance<S>,
    method: Method,
    clip_threshold: S,
) -> Result<ClipOutcome<S>> {
    let stats = fit_instance_stats(inst.context(), method)?;
    let context = normalize(inst.context(), &stats)?;
    let horizon = normalize(inst.horizon(), &stats)?;
    let max_abs = context
        .iter()
        .chain(horizon.iter())
        .fold(S::zero(), |acc, &v| acc.max(v.abs()));
    let rejected = !(max_abs <= clip_threshold);
    Ok(ClipOutcome {
        normalized: Instance::new(context, horizon, inst.origin().clone())?,
        stats,
        max_abs,
        rejected,
    })
}

/// Dataset-level standardization followed by RevIN on the standardized
/// window. Returns the normalized window and the instance statistics; only
/// the latter are used to de-normalize predictions.
pub fn hybrid_normalize<S: Scalar>(x: ArrayView2<'_, S>, ds: &NormStats<S>) -> Result<(Array2<S>, NormStats<S>)> {
    if ds.method() != Method::Standardization || ds.scope() != Scope::DatasetLevel {
        return Err(Error::WrongMethod {
            expected: "dataset-level Standardization".into(),
            found: format!("{:?} {}", ds.scope(), ds.method()),
        });
    }
    let standardized = normalize(x, ds)?;
    let inst = fit_instance_stats(standardized.view(), Method::RevIN)?;
    let out = normalize(standardized.view(), &inst)?;
    Ok((out, inst))
}

/// Largest absolute value of `x`.
pub fn max_abs<S: Scalar>(x: ArrayView2<'_, S>) -> S {
    x.iter().fold(S::zero(), |acc, &v| acc.max(v.abs()))
}

/// Elementwise `a - b` as a fresh matrix. Shapes must agree.
pub(crate) fn sub<S: Scalar>(a: ArrayView2<'_, S>, b: ArrayView2<'_, S>) -> Result<Array2<S>> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(Zip::from(&a).and(&b).map_collect(|&x, &y| x - y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    use crate::domain::Origin;
    use crate::scalar::EPSILON;

    fn col(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    fn dataset(v: &[f64], split: usize) -> Dataset<f64> {
        Dataset::new("d", col(v), "1h", 1, split).unwrap()
    }

    #[test]
    fn standardization_uses_population_std() {
        let d = dataset(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0], 5);
        let s = fit_dataset_stats(&d, Method::Standardization).unwrap();
        assert_eq!(s.scope(), Scope::DatasetLevel);
        assert_abs_diff_eq!(s.shift()[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.scale()[0], 1.41421356, epsilon = 1e-8);
    }

    #[test]
    fn minmax_and_maxabs_by_inspection() {
        let s = fit_dataset_stats(&dataset(&[2.0, 4.0, 6.0, -50.0], 3), Method::MinMax).unwrap();
        assert_eq!((s.shift()[0], s.scale()[0]), (2.0, 4.0));
        let s = fit_dataset_stats(&dataset(&[-4.0, 2.0, 9.0], 2), Method::MaxAbs).unwrap();
        assert_eq!((s.shift()[0], s.scale()[0]), (0.0, 4.0));
    }

    #[test]
    fn dataset_fit_rejects_instance_methods() {
        let d = dataset(&[1.0, 2.0, 3.0], 2);
        assert!(matches!(
            fit_dataset_stats(&d, Method::RevIN),
            Err(Error::WrongMethod { .. })
        ));
        assert!(matches!(
            fit_instance_stats(d.values(), Method::MinMax),
            Err(Error::WrongMethod { .. })
        ));
    }

    #[test]
    fn degenerate_channel_is_guarded_not_fatal() {
        let d = Dataset::new("d", array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], "1h", 1, 2).unwrap();
        let s = fit_dataset_stats(&d, Method::MaxAbs).unwrap();
        assert_eq!(s.guarded_channels(), &[1]);
        assert_eq!(s.scale()[1], EPSILON);
    }

    #[test]
    fn instance_stats_examples() {
        let s = fit_instance_stats(col(&[10.0, 12.0, 14.0]).view(), Method::RevIN).unwrap();
        assert_eq!(s.scope(), Scope::InstanceLevel);
        assert_abs_diff_eq!(s.shift()[0], 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.scale()[0], (8.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.scale()[0], 1.63299316, epsilon = 1e-8);

        let s = fit_instance_stats(col(&[-2.0, 4.0]).view(), Method::MeanAbs).unwrap();
        assert_eq!((s.shift()[0], s.scale()[0]), (0.0, 3.0));

        let s = fit_instance_stats(col(&[5.0, 5.0, 5.0]).view(), Method::RevIN).unwrap();
        assert_eq!((s.shift()[0], s.scale()[0]), (5.0, EPSILON));
    }

    #[test]
    fn normalize_examples() {
        let mm = NormStats::new(Method::MinMax, Scope::DatasetLevel, vec![2.0], vec![4.0]).unwrap();
        let x = col(&[2.0, 4.0, 6.0]);
        let n = normalize(x.view(), &mm).unwrap();
        assert_eq!(n, col(&[0.0, 0.5, 1.0]));
        assert_eq!(denormalize(n.view(), &mm).unwrap(), x);

        let raw = NormStats::identity(1, Scope::DatasetLevel);
        assert_eq!(normalize(x.view(), &raw).unwrap(), x);
        assert_eq!(denormalize(x.view(), &raw).unwrap(), x);

        let x = col(&[10.0, 12.0, 14.0]);
        let s = fit_instance_stats(x.view(), Method::RevIN).unwrap();
        let n = normalize(x.view(), &s).unwrap();
        for (got, want) in n.iter().zip([-1.22474487, 0.0, 1.22474487]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
        }
    }

    #[test]
    fn normalize_checks_channels() {
        let s = NormStats::<f64>::identity(2, Scope::DatasetLevel);
        assert!(matches!(
            normalize(col(&[1.0]).view(), &s),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            denormalize(col(&[1.0]).view(), &s),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gaussian_denormalization() {
        let stats = NormStats::new(Method::RevIN, Scope::InstanceLevel, vec![12.0], vec![2.0]).unwrap();
        let f = Forecast::gaussian(col(&[0.0]), col(&[1.0]), stats.clone()).unwrap();
        let out = denormalize_gaussian(&f, &stats).unwrap();
        let ForecastPayload::Gaussian { mean, std } = out.payload() else { unreachable!() };
        assert_eq!((mean[[0, 0]], std[[0, 0]]), (12.0, 2.0));

        let stats = NormStats::new(Method::RevIN, Scope::InstanceLevel, vec![0.0], vec![4.0]).unwrap();
        let f = Forecast::gaussian(col(&[0.0]), col(&[0.5]), stats.clone()).unwrap();
        let out = denormalize_gaussian(&f, &stats).unwrap();
        let ForecastPayload::Gaussian { std, .. } = out.payload() else { unreachable!() };
        assert_eq!(std[[0, 0]], 2.0);

        let raw = NormStats::identity(1, Scope::InstanceLevel);
        let f = Forecast::gaussian(col(&[0.3]), col(&[0.7]), raw.clone()).unwrap();
        assert_eq!(denormalize_gaussian(&f, &raw).unwrap().payload(), f.payload());
    }

    #[test]
    fn gaussian_denormalization_rejects_point() {
        let raw = NormStats::identity(1, Scope::InstanceLevel);
        let f = Forecast::point(col(&[0.0]), raw.clone()).unwrap();
        assert!(matches!(
            denormalize_gaussian(&f, &raw),
            Err(Error::KindMismatch { .. })
        ));
    }

    fn inst(context: &[f64], horizon: &[f64]) -> Instance<f64> {
        Instance::new(col(context), col(horizon), Origin { dataset: "d".into(), start: 0 }).unwrap()
    }

    #[test]
    fn clipping_rejects_constant_context_with_moving_horizon() {
        let out = clipped_instance_normalize(&inst(&[0.0, 0.0, 0.0], &[100.0]), Method::RevIN, 10.0).unwrap();
        assert!(out.rejected);
        assert_abs_diff_eq!(out.max_abs, 100.0 / EPSILON, epsilon = 1.0);
    }

    #[test]
    fn clipping_normalizes_horizon_with_context_stats() {
        let out = clipped_instance_normalize(&inst(&[10.0, 12.0, 14.0], &[12.0]), Method::RevIN, 10.0).unwrap();
        assert!(!out.rejected);
        assert_eq!(out.normalized.horizon()[[0, 0]], 0.0);
        assert_abs_diff_eq!(out.max_abs, 1.22474487, epsilon = 1e-8);
    }

    #[test]
    fn clipping_threshold_is_inclusive() {
        // MeanAbs of [1, 1] is 1, so the horizon value 10 normalizes to exactly 10.
        let out = clipped_instance_normalize(&inst(&[1.0, 1.0], &[10.0]), Method::MeanAbs, 10.0).unwrap();
        assert_eq!(out.max_abs, 10.0);
        assert!(!out.rejected);
        let out = clipped_instance_normalize(&inst(&[1.0, 1.0], &[10.5]), Method::MeanAbs, 10.0).unwrap();
        assert!(out.rejected);
    }

    #[test]
    fn hybrid_composes_standardization_and_revin() {
        let ds = NormStats::new(Method::Standardization, Scope::DatasetLevel, vec![100.0], vec![4.0]).unwrap();
        let (x, inst_stats) = hybrid_normalize(col(&[100.0, 104.0, 108.0]).view(), &ds).unwrap();
        for (got, want) in x.iter().zip([-1.22474487, 0.0, 1.22474487]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(inst_stats.shift()[0], 1.0, epsilon = 1e-12);

        let unit = NormStats::new(Method::Standardization, Scope::DatasetLevel, vec![0.0], vec![1.0]).unwrap();
        let raw = col(&[3.0, -1.0, 7.5, 2.0]);
        let (h, _) = hybrid_normalize(raw.view(), &unit).unwrap();
        let s = fit_instance_stats(raw.view(), Method::RevIN).unwrap();
        assert_eq!(h, normalize(raw.view(), &s).unwrap());

        let (_, s) = hybrid_normalize(col(&[3.0, 3.0]).view(), &ds).unwrap();
        assert_eq!(s.scale()[0], EPSILON);
    }

    #[test]
    fn hybrid_requires_dataset_standardization() {
        let mm = NormStats::new(Method::MinMax, Scope::DatasetLevel, vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(
            hybrid_normalize(col(&[1.0, 2.0]).view(), &mm),
            Err(Error::WrongMethod { .. })
        ));
    }
}
