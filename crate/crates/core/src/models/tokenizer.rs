use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Deserialize)]
struct TokenizerRepr {
    num_bins: usize,
    lo: f64,
    hi: f64,
}

/// Uniform binning of normalized values into `num_bins` tokens over
/// `[lo, hi]`. Values outside the range fall into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TokenizerRepr")]
pub struct TokenizerSpec {
    num_bins: usize,
    lo: f64,
    hi: f64,
}

impl TryFrom<TokenizerRepr> for TokenizerSpec {
    type Error = Error;

    fn try_from(r: TokenizerRepr) -> Result<Self> {
        TokenizerSpec::new(r.num_bins, r.lo, r.hi)
    }
}

impl Default for TokenizerSpec {
    /// 128 bins over `[-10, 10]`, matching the clipping threshold.
    fn default() -> Self {
        TokenizerSpec {
            num_bins: 128,
            lo: -10.0,
            hi: 10.0,
        }
    }
}

impl TokenizerSpec {
    pub fn new(num_bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::BadTokenizer("need at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::BadTokenizer(format!("range [{lo}, {hi}] is empty")));
        }
        Ok(TokenizerSpec { num_bins, lo, hi })
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.num_bins as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.num_bins).map(|b| self.center(b)).collect()
    }

    /// Index of the bin whose interval contains `x`, clamped to the edges.
    pub fn bin_of(&self, x: f64) -> usize {
        let pos = ((x - self.lo) / self.bin_width()).floor();
        if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(self.num_bins - 1)
        }
    }
}

pub fn tokenize<S: Scalar>(x: ArrayView2<'_, S>, spec: &TokenizerSpec) -> Array2<usize> {
    x.mapv(|v| spec.bin_of(v.as_f64()))
}

/// Maps every bin back to its center.
pub fn detokenize<S: Scalar>(bins: ArrayView2<'_, usize>, spec: &TokenizerSpec) -> Array2<S> {
    bins.mapv(|b| S::of(spec.center(b.min(spec.num_bins - 1))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_bins_and_edges() {
        let spec = TokenizerSpec::new(4, -2.0, 2.0).unwrap();
        let bins = tokenize(array![[-2.0, 1.99], [-0.5, 0.0], [50.0, -50.0]].view(), &spec);
        assert_eq!(bins, array![[0, 3], [1, 2], [3, 0]]);
        assert_eq!(spec.bin_of(2.0), 3);
        assert_eq!(spec.centers(), vec![-1.5, -0.5, 0.5, 1.5]);
    }

    #[test]
    fn detokenize_within_half_bin() {
        let spec = TokenizerSpec::default();
        let x = array![[-9.99, -3.3], [0.0, 0.01], [4.2, 9.99]];
        let back: Array2<f64> = detokenize(tokenize(x.view(), &spec).view(), &spec);
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).abs() <= spec.bin_width() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(TokenizerSpec::new(0, -1.0, 1.0).is_err());
        assert!(TokenizerSpec::new(4, 1.0, 1.0).is_err());
        assert!(serde_json::from_str::<TokenizerSpec>(r#"{"num_bins":4,"lo":2.0,"hi":1.0}"#).is_err());
    }
}
