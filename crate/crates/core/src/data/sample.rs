use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of valid context start offsets for `context_len + horizon` windows
/// lying fully inside the training rows.
pub fn train_window_starts<S: Scalar>(d: &Dataset<S>, context_len: usize, horizon: usize) -> Result<usize> {
    let needed = context_len + horizon;
    if context_len == 0 || horizon == 0 {
        return Err(Error::EmptyInput("instance needs L >= 1 and H >= 1"));
    }
    if needed > d.split_index() {
        return Err(Error::WindowTooLong {
            needed,
            available: d.split_index(),
        });
    }
    Ok(d.split_index() - needed + 1)
}

/// `count` instances with uniformly random start offsets inside the training
/// rows. Deterministic per seed.
pub fn sample_instances<S: Scalar>(
    d: &Dataset<S>,
    context_len: usize,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Instance<S>>> {
    let starts = train_window_starts(d, context_len, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Instance::from_dataset(d, rng.random_range(0..starts), context_len, horizon))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ramp(len: usize, split: usize) -> Dataset<f64> {
        let v = Array2::from_shape_fn((len, 1), |(t, _)| t as f64);
        Dataset::new("r", v, "1h", 1, split).unwrap()
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(sample_instances(&ramp(50, 40), 5, 2, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn instances_stay_in_train_rows() {
        let d = ramp(50, 40);
        for inst in sample_instances(&d, 5, 2, 500, 9).unwrap() {
            let (start, end) = inst.row_span();
            assert!(end <= d.split_index());
            // the ramp encodes row indices
            assert_eq!(inst.context()[[0, 0]], start as f64);
        }
    }

    #[test]
    fn same_seed_same_offsets() {
        let d = ramp(50, 40);
        let a: Vec<_> = sample_instances(&d, 5, 2, 20, 3).unwrap().iter().map(|i| i.origin().start).collect();
        let b: Vec<_> = sample_instances(&d, 5, 2, 20, 3).unwrap().iter().map(|i| i.origin().start).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn window_longer_than_train_rows() {
        assert!(matches!(
            sample_instances(&ramp(50, 40), 38, 3, 1, 1),
            Err(Error::WindowTooLong { needed: 41, available: 40 })
        ));
        assert_eq!(train_window_starts(&ramp(50, 40), 38, 2).unwrap(), 1);
    }
}
