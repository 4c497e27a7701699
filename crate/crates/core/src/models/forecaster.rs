use std::fmt;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Forecast, NormStats};
use crate::error::{Error, Result};
use crate::models::tokenizer::{detokenize, tokenize, TokenizerSpec};
use crate::scalar::Scalar;

/// Log standard deviations are clamped to `[-LOG_STD_LIMIT, LOG_STD_LIMIT]`
/// so that `exp` stays finite and strictly positive.
pub const LOG_STD_LIMIT: f64 = 30.0;

/// Training loss, which also fixes the output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "Point-MSE", alias = "MSE")]
    Mse,
    #[serde(rename = "Point-MAE", alias = "MAE")]
    Mae,
    #[serde(rename = "GaussianNLL")]
    GaussianNll,
    #[serde(rename = "TokenCE")]
    TokenCe,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Mse, LossKind::Mae, LossKind::GaussianNll, LossKind::TokenCe];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "Point-MSE",
            LossKind::Mae => "Point-MAE",
            LossKind::GaussianNll => "GaussianNLL",
            LossKind::TokenCe => "TokenCE",
        }
    }

    pub fn parse(s: &str) -> Option<LossKind> {
        LossKind::ALL.into_iter().find(|k| {
            k.name().eq_ignore_ascii_case(s) || k.name().trim_start_matches("Point-").eq_ignore_ascii_case(s)
        })
    }

    pub fn is_point(self) -> bool {
        matches!(self, LossKind::Mse | LossKind::Mae)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gradient (or update) with the same layout as a [`LinearForecaster`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub weights: Array2<S>,
    pub bias: Array1<S>,
    pub scale_weights: Option<Array2<S>>,
    pub scale_bias: Option<Array1<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn norm(&self) -> S {
        let sq = |it: &mut dyn Iterator<Item = &S>| it.fold(S::zero(), |acc, &v| acc + v * v);
        let mut total = sq(&mut self.weights.iter()) + sq(&mut self.bias.iter());
        if let Some(w) = &self.scale_weights {
            total += sq(&mut w.iter());
        }
        if let Some(b) = &self.scale_bias {
            total += sq(&mut b.iter());
        }
        total.sqrt()
    }

    pub fn scale_by(&mut self, k: S) {
        self.weights.mapv_inplace(|v| v * k);
        self.bias.mapv_inplace(|v| v * k);
        if let Some(w) = &mut self.scale_weights {
            w.mapv_inplace(|v| v * k);
        }
        if let Some(b) = &mut self.scale_bias {
            b.mapv_inplace(|v| v * k);
        }
    }

    /// Every parameter gradient as one flat vector, in a fixed order.
    pub fn flatten(&self) -> Vec<S> {
        let mut out: Vec<S> = self.weights.iter().chain(self.bias.iter()).copied().collect();
        if let Some(w) = &self.scale_weights {
            out.extend(w.iter());
        }
        if let Some(b) = &self.scale_bias {
            out.extend(b.iter());
        }
        out
    }
}

/// Output of one forward pass before it is wrapped into a [`Forecast`].
#[derive(Debug, Clone)]
pub(crate) struct Outputs<S> {
    /// `rows x C`, where rows is `h` (point, Gaussian mean) or `h * B` (tokens).
    pub main: Array2<S>,
    /// Clamped log standard deviation, `h x C`, Gaussian head only.
    pub log_std: Option<Array2<S>>,
}

/// A linear map from a normalized context window to the horizon, shared by
/// all channels: each channel's `L` context values go through the same
/// weights. The Gaussian head adds a second map producing `log std`; the
/// token head emits `B` logits per horizon step and reads a quantized context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"), try_from = "ForecasterRepr<S>")]
pub struct LinearForecaster<S> {
    loss_kind: LossKind,
    context_len: usize,
    horizon: usize,
    weights: Array2<S>,
    bias: Array1<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_weights: Option<Array2<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_bias: Option<Array1<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokenizer: Option<TokenizerSpec>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
struct ForecasterRepr<S> {
    loss_kind: LossKind,
    context_len: usize,
    horizon: usize,
    weights: Array2<S>,
    bias: Array1<S>,
    #[serde(default)]
    scale_weights: Option<Array2<S>>,
    #[serde(default)]
    scale_bias: Option<Array1<S>>,
    #[serde(default)]
    tokenizer: Option<TokenizerSpec>,
}

impl<S: Scalar> TryFrom<ForecasterRepr<S>> for LinearForecaster<S> {
    type Error = Error;

    fn try_from(r: ForecasterRepr<S>) -> Result<Self> {
        let m = LinearForecaster {
            loss_kind: r.loss_kind,
            context_len: r.context_len,
            horizon: r.horizon,
            weights: r.weights,
            bias: r.bias,
            scale_weights: r.scale_weights,
            scale_bias: r.scale_bias,
            tokenizer: r.tokenizer,
        };
        m.validate()?;
        Ok(m)
    }
}

impl<S: Scalar> LinearForecaster<S> {
    /// All-zero model. `tokenizer` is used by `TokenCe` only and defaults to
    /// [`TokenizerSpec::default`].
    pub fn zeros(loss_kind: LossKind, context_len: usize, horizon: usize, tokenizer: Option<TokenizerSpec>) -> Result<Self> {
        if context_len == 0 || horizon == 0 {
            return Err(Error::EmptyInput("forecaster needs L >= 1 and H >= 1"));
        }
        let tokenizer = match loss_kind {
            LossKind::TokenCe => Some(tokenizer.unwrap_or_default()),
            _ => None,
        };
        let out = horizon * tokenizer.as_ref().map_or(1, TokenizerSpec::num_bins);
        let gaussian = loss_kind == LossKind::GaussianNll;
        Ok(LinearForecaster {
            loss_kind,
            context_len,
            horizon,
            weights: Array2::zeros((out, context_len)),
            bias: Array1::zeros(out),
            scale_weights: gaussian.then(|| Array2::zeros((horizon, context_len))),
            scale_bias: gaussian.then(|| Array1::zeros(horizon)),
            tokenizer,
        })
    }

    /// Zero biases and N(0, std^2) weights drawn from a ChaCha8 stream seeded
    /// with `seed`. The Gaussian log-std head starts at zero (`std = 1`).
    pub fn seeded(
        loss_kind: LossKind,
        context_len: usize,
        horizon: usize,
        tokenizer: Option<TokenizerSpec>,
        seed: u64,
        std: f64,
    ) -> Result<Self> {
        let mut m = Self::zeros(loss_kind, context_len, horizon, tokenizer)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).map_err(|e| Error::BadSpec(e.to_string()))?;
        m.weights.mapv_inplace(|_| S::of(normal.sample(&mut rng)));
        Ok(m)
    }

    /// Model with explicit main-head parameters (`weights` is `H x L`, or
    /// `(H B) x L` for tokens). Any Gaussian head starts at zero.
    pub fn from_weights(
        loss_kind: LossKind,
        weights: Array2<S>,
        bias: Array1<S>,
        tokenizer: Option<TokenizerSpec>,
    ) -> Result<Self> {
        let bins = match loss_kind {
            LossKind::TokenCe => tokenizer.as_ref().map_or(TokenizerSpec::default().num_bins(), |t| t.num_bins()),
            _ => 1,
        };
        let (out, context_len) = weights.dim();
        if out % bins != 0 {
            return Err(Error::shape(format!("multiple of {bins} output rows"), out));
        }
        let mut m = Self::zeros(loss_kind, context_len, out / bins, tokenizer)?;
        if bias.len() != out {
            return Err(Error::shape(format!("{out} bias entries"), bias.len()));
        }
        m.weights = weights;
        m.bias = bias;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bins = self.tokenizer.as_ref().map_or(1, TokenizerSpec::num_bins);
        let out = self.horizon * bins;
        if self.weights.dim() != (out, self.context_len) || self.bias.len() != out {
            return Err(Error::shape(
                format!("({out}, {})", self.context_len),
                format!("{:?}", self.weights.dim()),
            ));
        }
        if (self.loss_kind == LossKind::TokenCe) != self.tokenizer.is_some() {
            return Err(Error::BadTokenizer("tokenizer present iff loss is TokenCE".into()));
        }
        let gaussian = self.loss_kind == LossKind::GaussianNll;
        match (&self.scale_weights, &self.scale_bias) {
            (Some(w), Some(b)) if gaussian => {
                if w.dim() != (self.horizon, self.context_len) || b.len() != self.horizon {
                    return Err(Error::shape("Gaussian head matching (H, L)", format!("{:?}", w.dim())));
                }
            }
            (None, None) if !gaussian => {}
            _ => return Err(Error::shape("log-std head iff loss is GaussianNLL", "mismatch")),
        }
        if !self.parameters().iter().all(|v| v.is_finite()) {
            return Err(Error::BadSpec("non-finite model parameter".into()));
        }
        Ok(())
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn tokenizer(&self) -> Option<&TokenizerSpec> {
        self.tokenizer.as_ref()
    }

    pub fn weights(&self) -> ArrayView2<'_, S> {
        self.weights.view()
    }

    pub fn bias(&self) -> &Array1<S> {
        &self.bias
    }

    pub fn zero_gradients(&self) -> Gradients<S> {
        Gradients {
            weights: Array2::zeros(self.weights.dim()),
            bias: Array1::zeros(self.bias.len()),
            scale_weights: self.scale_weights.as_ref().map(|w| Array2::zeros(w.dim())),
            scale_bias: self.scale_bias.as_ref().map(|b| Array1::zeros(b.len())),
        }
    }

    /// In-place `params -= lr * grads`.
    pub fn apply_update(&mut self, grads: &Gradients<S>, lr: S) {
        self.weights.scaled_add(-lr, &grads.weights);
        self.bias.scaled_add(-lr, &grads.bias);
        if let (Some(w), Some(g)) = (&mut self.scale_weights, &grads.scale_weights) {
            w.scaled_add(-lr, g);
        }
        if let (Some(b), Some(g)) = (&mut self.scale_bias, &grads.scale_bias) {
            b.scaled_add(-lr, g);
        }
    }

    /// Flat parameter vector in the same order as [`Gradients::flatten`].
    pub fn parameters(&self) -> Vec<S> {
        let mut out: Vec<S> = self.weights.iter().chain(self.bias.iter()).copied().collect();
        if let Some(w) = &self.scale_weights {
            out.extend(w.iter());
        }
        if let Some(b) = &self.scale_bias {
            out.extend(b.iter());
        }
        out
    }

    /// Overwrites every parameter from a flat vector (see [`Self::parameters`]).
    pub fn set_parameters(&mut self, flat: &[S]) -> Result<()> {
        let total = self.parameters().len();
        if flat.len() != total {
            return Err(Error::shape(total, flat.len()));
        }
        let mut it = flat.iter().copied();
        self.weights.iter_mut().for_each(|v| *v = it.next().unwrap());
        self.bias.iter_mut().for_each(|v| *v = it.next().unwrap());
        if let Some(w) = &mut self.scale_weights {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        if let Some(b) = &mut self.scale_bias {
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.validate().is_ok()
    }

    /// The matrix the linear map actually reads: the normalized context, or
    /// for the token head its quantized reconstruction from bin centers.
    pub fn model_input(&self, context_norm: ArrayView2<'_, S>) -> Result<Array2<S>> {
        if context_norm.nrows() != self.context_len || context_norm.ncols() == 0 {
            return Err(Error::shape(
                format!("({}, C)", self.context_len),
                format!("{:?}", context_norm.dim()),
            ));
        }
        Ok(match &self.tokenizer {
            Some(spec) => detokenize(tokenize(context_norm, spec).view(), spec),
            None => context_norm.to_owned(),
        })
    }

    pub(crate) fn outputs(&self, input: ArrayView2<'_, S>, h: usize) -> Outputs<S> {
        let bins = self.tokenizer.as_ref().map_or(1, TokenizerSpec::num_bins);
        let rows = h * bins;
        let mut main = self.weights.slice(s![..rows, ..]).dot(&input);
        main += &self.bias.slice(s![..rows]).insert_axis(Axis(1));
        let log_std = match (&self.scale_weights, &self.scale_bias) {
            (Some(w), Some(b)) => {
                let mut ls = w.slice(s![..h, ..]).dot(&input);
                ls += &b.slice(s![..h]).insert_axis(Axis(1));
                let lim = S::of(LOG_STD_LIMIT);
                ls.mapv_inplace(|v| v.max(-lim).min(lim));
                Some(ls)
            }
            _ => None,
        };
        Outputs { main, log_std }
    }

    /// Reshapes a `(h B) x C` token head output into `h x C x B` logits.
    pub(crate) fn to_logits(&self, main: &Array2<S>) -> Array3<S> {
        let bins = self.tokenizer.as_ref().map_or(1, TokenizerSpec::num_bins);
        let (rows, c) = main.dim();
        Array3::from_shape_fn((rows / bins, c, bins), |(h, ch, b)| main[[h * bins + b, ch]])
    }

    /// Forecast for a context that the caller has already normalized. The
    /// result is in normalized space and records `denorm_stats` for mapping
    /// it back.
    pub fn forecast(&self, context_norm: ArrayView2<'_, S>, denorm_stats: NormStats<S>) -> Result<Forecast<S>> {
        let input = self.model_input(context_norm)?;
        let out = self.outputs(input.view(), self.horizon);
        match self.loss_kind {
            LossKind::Mse | LossKind::Mae => Forecast::point(out.main, denorm_stats),
            LossKind::GaussianNll => {
                let std = out.log_std.expect("Gaussian head").mapv(S::exp);
                Forecast::gaussian(out.main, std, denorm_stats)
            }
            LossKind::TokenCe => {
                let logits = self.to_logits(&out.main);
                Forecast::token(logits, self.tokenizer.clone().expect("token head"), denorm_stats)
            }
        }
    }
}
