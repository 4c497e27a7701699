//! Deterministic mini-batch SGD for [`LinearForecaster`].
//!
//! Where normalization happens depends on the scheme and the loss:
//!
//! * no instance method (Raw and the dataset-level schemes, whose corpus the
//!   caller has already normalized offline): the instance is used as given;
//! * point losses with an instance method: clipped instance normalization of
//!   context and horizon, loss in normalized space, rejected instances never
//!   reach the gradient;
//! * Gaussian NLL: the context is normalized, the predicted distribution is
//!   de-normalized and scored against the raw horizon;
//! * token cross-entropy: context and horizon are normalized and the loss is
//!   taken on horizon tokens before any de-normalization.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::domain::{Forecast, Instance, Method, NormStats, Scheme, Scope};
use crate::error::{Error, Result};
use crate::models::forecaster::{Gradients, LinearForecaster, LossKind, LOG_STD_LIMIT};
use crate::models::loss::{loss_gaussian_nll, loss_mae, loss_mse, loss_token_ce};
use crate::models::tokenizer::tokenize;
use crate::norm::{clipped_instance_normalize, fit_instance_stats, max_abs, normalize, CLIP_THRESHOLD};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_threshold: f64,
    /// Rescale the full gradient to this L2 norm when it is larger.
    pub grad_clip: Option<f64>,
    /// Consecutive rejected instances tolerated before giving up.
    pub max_rejections: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            lr: 0.05,
            batch_size: 16,
            clip_threshold: CLIP_THRESHOLD,
            grad_clip: Some(1.0),
            max_rejections: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    pub loss: f64,
    /// L2 norm of the full gradient before clipping.
    pub grad_norm: f64,
    /// Per channel position, the Frobenius norm of the weight gradient coming
    /// from that channel's loss terms.
    pub channel_grad_norms: Vec<f64>,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub steps: Vec<TrainStep>,
    pub admitted: usize,
    pub rejected: usize,
    /// Largest `|x~|` of any instance that reached the gradient computation
    /// through clipped normalization.
    pub max_admitted_abs: f64,
}

impl TrainTrace {
    pub fn rejection_rate(&self) -> f64 {
        let seen = self.admitted + self.rejected;
        if seen == 0 {
            0.0
        } else {
            self.rejected as f64 / seen as f64
        }
    }

    /// CSV with columns `step,loss,grad_norm,rejected,grad_norm_c0,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let width = self.steps.iter().map(|s| s.channel_grad_norms.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "loss".into(), "grad_norm".into(), "rejected".into()];
        header.extend((0..width).map(|c| format!("grad_norm_c{c}")));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut rec = vec![s.step.to_string(), s.loss.to_string(), s.grad_norm.to_string(), s.rejected.to_string()];
            rec.extend((0..width).map(|c| s.channel_grad_norms.get(c).map_or(String::new(), |v| v.to_string())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

enum Target<S> {
    Point(Array2<S>),
    Gaussian { raw: Array2<S>, stats: NormStats<S> },
    Token(Array2<usize>),
}

/// An instance after scheme-specific normalization, ready for the model.
struct Prepared<S> {
    input: Array2<S>,
    target: Target<S>,
    clipped_abs: Option<S>,
}

enum Admission<S> {
    Admitted(Prepared<S>),
    Rejected,
}

fn prepare<S: Scalar>(
    model: &LinearForecaster<S>,
    inst: &Instance<S>,
    instance_method: Option<Method>,
    clip_threshold: S,
) -> Result<Admission<S>> {
    if inst.horizon_len() > model.horizon() {
        return Err(Error::shape(
            format!("horizon <= {}", model.horizon()),
            inst.horizon_len(),
        ));
    }
    let kind = model.loss_kind();
    let prepared = match (instance_method, kind) {
        (Some(method), LossKind::Mse | LossKind::Mae) => {
            let out = clipped_instance_normalize(inst, method, clip_threshold)?;
            if out.rejected {
                return Ok(Admission::Rejected);
            }
            let (context, horizon, _) = out.normalized.into_parts();
            Prepared {
                input: model.model_input(context.view())?,
                target: Target::Point(horizon),
                clipped_abs: Some(out.max_abs),
            }
        }
        (Some(method), LossKind::GaussianNll) => {
            let stats = fit_instance_stats(inst.context(), method)?;
            let context = normalize(inst.context(), &stats)?;
            Prepared {
                input: model.model_input(context.view())?,
                target: Target::Gaussian {
                    raw: inst.horizon().to_owned(),
                    stats,
                },
                clipped_abs: None,
            }
        }
        (Some(method), LossKind::TokenCe) => {
            let stats = fit_instance_stats(inst.context(), method)?;
            let context = normalize(inst.context(), &stats)?;
            let horizon = normalize(inst.horizon(), &stats)?;
            let spec = model.tokenizer().expect("token head");
            Prepared {
                input: model.model_input(context.view())?,
                target: Target::Token(tokenize(horizon.view(), spec)),
                clipped_abs: None,
            }
        }
        (None, _) => {
            let input = model.model_input(inst.context())?;
            let target = match kind {
                LossKind::Mse | LossKind::Mae => Target::Point(inst.horizon().to_owned()),
                LossKind::GaussianNll => Target::Gaussian {
                    raw: inst.horizon().to_owned(),
                    stats: NormStats::identity(inst.channels(), Scope::InstanceLevel),
                },
                LossKind::TokenCe => Target::Token(tokenize(inst.horizon(), model.tokenizer().expect("token head"))),
            };
            Prepared {
                input,
                target,
                clipped_abs: None,
            }
        }
    };
    Ok(Admission::Admitted(prepared))
}

/// Loss of one prepared instance plus the gradient with respect to the main
/// head output and, for the Gaussian head, the log-std output.
fn instance_loss<S: Scalar>(model: &LinearForecaster<S>, p: &Prepared<S>) -> Result<(S, Array2<S>, Option<Array2<S>>)> {
    match &p.target {
        Target::Point(y) => {
            let out = model.outputs(p.input.view(), y.nrows());
            let l = match model.loss_kind() {
                LossKind::Mae => loss_mae(out.main.view(), y.view())?,
                _ => loss_mse(out.main.view(), y.view())?,
            };
            Ok((l.loss, l.grad, None))
        }
        Target::Gaussian { raw, stats } => {
            let out = model.outputs(p.input.view(), raw.nrows());
            let log_std = out.log_std.expect("Gaussian head");
            let f = Forecast::gaussian(out.main, log_std.mapv(S::exp), stats.clone())?;
            let l = loss_gaussian_nll(&f, raw.view(), stats)?;
            let lim = S::of(LOG_STD_LIMIT);
            let mut d_log_std = l.d_log_std;
            // Clamped outputs do not move with the parameters.
            ndarray::Zip::from(&mut d_log_std).and(&log_std).for_each(|d, &v| {
                if v.abs() >= lim {
                    *d = S::zero();
                }
            });
            Ok((l.loss, l.d_mean, Some(d_log_std)))
        }
        Target::Token(bins) => {
            let out = model.outputs(p.input.view(), bins.nrows());
            let logits = model.to_logits(&out.main);
            let l = loss_token_ce(logits.view(), bins.view())?;
            let b = logits.dim().2;
            let (h, c) = bins.dim();
            let d_main = Array2::from_shape_fn((h * b, c), |(r, ch)| l.grad[[r / b, ch, r % b]]);
            Ok((l.loss, d_main, None))
        }
    }
}

/// Loss and parameter gradients of a batch, averaged over admitted instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient<S> {
    pub loss: S,
    pub grads: Gradients<S>,
    /// See [`TrainStep::channel_grad_norms`].
    pub channel_grad_norms: Vec<S>,
    pub admitted: usize,
    pub rejected: usize,
    pub max_admitted_abs: S,
}

/// Per channel position: the output-gradient and input columns of every
/// admitted instance, used to get the norm of `sum_i d_i x_i^T`.
struct ChannelTerms<S> {
    terms: Vec<Vec<(Array1<S>, Array1<S>)>>,
}

impl<S: Scalar> ChannelTerms<S> {
    fn push(&mut self, c: usize, d: Array1<S>, x: Array1<S>) {
        if self.terms.len() <= c {
            self.terms.resize_with(c + 1, Vec::new);
        }
        self.terms[c].push((d, x));
    }

    /// `||sum_i d_i x_i^T||_F^2 = sum_ij (d_i . d_j)(x_i . x_j)`, without
    /// materializing the matrices.
    fn norms(&self, weight: S) -> Vec<S> {
        let dot = |a: &ArrayView1<S>, b: &ArrayView1<S>| {
            let n = a.len().min(b.len());
            a.slice(s![..n]).dot(&b.slice(s![..n]))
        };
        self.terms
            .iter()
            .map(|terms| {
                let mut sq = S::zero();
                for (di, xi) in terms {
                    for (dj, xj) in terms {
                        sq += dot(&di.view(), &dj.view()) * dot(&xi.view(), &xj.view());
                    }
                }
                sq.max(S::zero()).sqrt() * weight
            })
            .collect()
    }
}

fn accumulate_batch<S: Scalar>(
    model: &LinearForecaster<S>,
    batch: &[Prepared<S>],
) -> Result<(S, Gradients<S>, Vec<S>)> {
    let mut grads = model.zero_gradients();
    let mut channels = ChannelTerms { terms: Vec::new() };
    let mut total = S::zero();
    let h_full = model.horizon();
    for p in batch {
        let (loss, d_main, d_log_std) = instance_loss(model, p)?;
        total += loss;
        let rows = d_main.nrows();
        let mut w = grads.weights.slice_mut(s![..rows, ..]);
        w += &d_main.dot(&p.input.t());
        let mut b = grads.bias.slice_mut(s![..rows]);
        b += &d_main.sum_axis(Axis(1));
        if let (Some(dl), Some(sw), Some(sb)) = (&d_log_std, &mut grads.scale_weights, &mut grads.scale_bias) {
            let h = dl.nrows();
            let mut sw = sw.slice_mut(s![..h, ..]);
            sw += &dl.dot(&p.input.t());
            let mut sb = sb.slice_mut(s![..h]);
            sb += &dl.sum_axis(Axis(1));
        }
        for c in 0..p.input.ncols() {
            let mut d = Array1::zeros(grads.weights.nrows() + d_log_std.as_ref().map_or(0, |_| h_full));
            d.slice_mut(s![..rows]).assign(&d_main.column(c));
            if let Some(dl) = &d_log_std {
                let off = grads.weights.nrows();
                d.slice_mut(s![off..off + dl.nrows()]).assign(&dl.column(c));
            }
            channels.push(c, d, p.input.column(c).to_owned());
        }
    }
    let n = S::of_usize(batch.len());
    grads.scale_by(S::one() / n);
    Ok((total / n, grads, channels.norms(S::one() / n)))
}

/// Loss and gradients for a fixed batch under `scheme`. Instances rejected
/// by clipping are counted and skipped.
pub fn batch_gradient<S: Scalar>(
    model: &LinearForecaster<S>,
    instances: &[Instance<S>],
    scheme: Scheme,
    clip_threshold: S,
) -> Result<BatchGradient<S>> {
    let method = scheme.training_instance_method();
    let mut admitted = Vec::new();
    let mut rejected = 0;
    for inst in instances {
        match prepare(model, inst, method, clip_threshold)? {
            Admission::Admitted(p) => admitted.push(p),
            Admission::Rejected => rejected += 1,
        }
    }
    if admitted.is_empty() {
        return Err(Error::EmptyInput("every instance in the batch was rejected"));
    }
    let max_admitted_abs = admitted
        .iter()
        .filter_map(|p| p.clipped_abs)
        .fold(S::zero(), S::max);
    let (loss, grads, channel_grad_norms) = accumulate_batch(model, &admitted)?;
    Ok(BatchGradient {
        loss,
        grads,
        channel_grad_norms,
        admitted: admitted.len(),
        rejected,
        max_admitted_abs,
    })
}

/// Trains `model` for `cfg.steps` SGD steps on batches drawn in order from
/// `instances`. Dataset-level schemes expect the caller to have normalized
/// the corpus already.
///
/// Deterministic: the only inputs are the model, the instance sequence and
/// the config; reductions run in a fixed order.
pub fn train<S, I>(
    mut model: LinearForecaster<S>,
    instances: I,
    scheme: Scheme,
    cfg: &TrainConfig,
) -> Result<(LinearForecaster<S>, TrainTrace)>
where
    S: Scalar,
    I: IntoIterator<Item = Instance<S>>,
{
    if cfg.batch_size == 0 {
        return Err(Error::EmptyInput("batch size must be positive"));
    }
    let method = scheme.training_instance_method();
    let clip = S::of(cfg.clip_threshold);
    let lr = S::of(cfg.lr);
    let mut source = instances.into_iter();
    let mut trace = TrainTrace::default();
    let mut max_admitted = S::zero();

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut rejected = 0;
        let mut streak = 0;
        while batch.len() < cfg.batch_size {
            let Some(inst) = source.next() else { break };
            match prepare(&model, &inst, method, clip)? {
                Admission::Admitted(p) => {
                    if let Some(a) = p.clipped_abs {
                        debug_assert!(a <= clip);
                        max_admitted = max_admitted.max(a);
                    }
                    batch.push(p);
                    streak = 0;
                }
                Admission::Rejected => {
                    rejected += 1;
                    streak += 1;
                    if streak > cfg.max_rejections {
                        return Err(Error::SourceExhausted { step, rejected });
                    }
                }
            }
        }
        if batch.is_empty() {
            return Err(Error::SourceExhausted { step, rejected });
        }
        trace.admitted += batch.len();
        trace.rejected += rejected;

        let (loss, mut grads, channel_norms) = accumulate_batch(&model, &batch)?;
        let grad_norm = grads.norm();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Diverged { step });
        }
        if let Some(limit) = cfg.grad_clip {
            let limit = S::of(limit);
            if grad_norm > limit {
                grads.scale_by(limit / grad_norm);
            }
        }
        model.apply_update(&grads, lr);
        if !model.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.steps.push(TrainStep {
            step,
            loss: loss.as_f64(),
            grad_norm: grad_norm.as_f64(),
            channel_grad_norms: channel_norms.iter().map(|v| v.as_f64()).collect(),
            rejected,
        });
    }
    trace.max_admitted_abs = max_admitted.as_f64();
    Ok((model, trace))
}

/// Largest `|x~|` that clipped normalization would produce for `inst`.
pub fn clipped_magnitude<S: Scalar>(inst: &Instance<S>, method: Method) -> Result<S> {
    let stats = fit_instance_stats(inst.context(), method)?;
    let c = normalize(inst.context(), &stats)?;
    let h = normalize(inst.horizon(), &stats)?;
    Ok(max_abs(c.view()).max(max_abs(h.view())))
}
