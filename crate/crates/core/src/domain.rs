//! Domain types shared by every module.
//!
//! Values are validated on construction and immutable afterwards, so a
//! `Dataset`, `NormStats`, `Instance` or `Forecast` that exists is known to
//! satisfy its invariants. Matrices are row-major `T x C`: rows are time steps,
//! columns are channels.

use std::fmt;

use ndarray::{s, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TokenizerSpec;
use crate::scalar::{epsilon, Scalar};

/// Normalization method. The first three are fitted at dataset scope, `RevIN`
/// and `MeanAbs` per context window, `Raw` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Standardization,
    MinMax,
    MaxAbs,
    RevIN,
    MeanAbs,
    Raw,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Standardization => "Standardization",
            Method::MinMax => "MinMax",
            Method::MaxAbs => "MaxAbs",
            Method::RevIN => "RevIN",
            Method::MeanAbs => "MeanAbs",
            Method::Raw => "Raw",
        }
    }

    /// Methods whose shift is identically zero.
    pub fn is_shift_free(self) -> bool {
        matches!(self, Method::MaxAbs | Method::MeanAbs | Method::Raw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    DatasetLevel,
    InstanceLevel,
}

/// A normalization scheme as compared by the benchmark: the six methods plus
/// `Hybrid` (dataset standardization followed by RevIN during training).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    RevIN,
    MeanAbs,
    Hybrid,
    Standardization,
    MinMax,
    MaxAbs,
    Raw,
}

impl Scheme {
    /// Column order of the rendered results table, `Raw` last.
    pub const ALL: [Scheme; 7] = [
        Scheme::RevIN,
        Scheme::MeanAbs,
        Scheme::Hybrid,
        Scheme::Standardization,
        Scheme::MinMax,
        Scheme::MaxAbs,
        Scheme::Raw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RevIN => "RevIN",
            Scheme::MeanAbs => "MeanAbs",
            Scheme::Hybrid => "Hybrid",
            Scheme::Standardization => "Standardization",
            Scheme::MinMax => "MinMax",
            Scheme::MaxAbs => "MaxAbs",
            Scheme::Raw => "Raw",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// Dataset-level method applied offline to each training dataset, if any.
    pub fn dataset_method(self) -> Option<Method> {
        match self {
            Scheme::Standardization | Scheme::Hybrid => Some(Method::Standardization),
            Scheme::MinMax => Some(Method::MinMax),
            Scheme::MaxAbs => Some(Method::MaxAbs),
            Scheme::RevIN | Scheme::MeanAbs | Scheme::Raw => None,
        }
    }

    /// Instance-level method applied to every training window, if any.
    pub fn training_instance_method(self) -> Option<Method> {
        match self {
            Scheme::RevIN | Scheme::Hybrid => Some(Method::RevIN),
            Scheme::MeanAbs => Some(Method::MeanAbs),
            _ => None,
        }
    }

    /// Statistic family fitted on each test context at inference. Dataset-level
    /// statistics are never available there, so every scheme maps to a window
    /// statistic; `Hybrid` keeps only its RevIN component.
    pub fn inference_method(self) -> Method {
        match self {
            Scheme::RevIN | Scheme::Hybrid => Method::RevIN,
            Scheme::MeanAbs => Method::MeanAbs,
            Scheme::Standardization => Method::Standardization,
            Scheme::MinMax => Method::MinMax,
            Scheme::MaxAbs => Method::MaxAbs,
            Scheme::Raw => Method::Raw,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Evaluation setting: zero-shot on a withheld dataset, or in-domain on the
/// test rows of a dataset seen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    ZS,
    ID,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::ZS => "ZS",
            Setting::ID => "ID",
        })
    }
}

/// Unvalidated dataset fields, see [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParts<S> {
    pub name: String,
    pub values: Array2<S>,
    pub frequency: String,
    pub seasonal_period: usize,
    pub split_index: usize,
}

/// A named multivariate series with a train/test split at `split_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    name: String,
    values: Array2<S>,
    frequency: String,
    seasonal_period: usize,
    split_index: usize,
}

/// Checks every dataset invariant and returns the validated dataset.
pub fn validate_dataset<S: Scalar>(d: DatasetParts<S>) -> Result<Dataset<S>> {
    let (t, c) = d.values.dim();
    if c == 0 {
        return Err(Error::NoChannels);
    }
    if let Some(((row, col), _)) = d.values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    if t < 2 || d.split_index == 0 || d.split_index >= t {
        return Err(Error::BadSplit {
            split: d.split_index,
            len: t,
        });
    }
    if d.seasonal_period == 0 || d.seasonal_period >= d.split_index {
        return Err(Error::BadPeriod {
            period: d.seasonal_period,
            split: d.split_index,
        });
    }
    Ok(Dataset {
        name: d.name,
        values: d.values,
        frequency: d.frequency,
        seasonal_period: d.seasonal_period,
        split_index: d.split_index,
    })
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        name: impl Into<String>,
        values: Array2<S>,
        frequency: impl Into<String>,
        seasonal_period: usize,
        split_index: usize,
    ) -> Result<Self> {
        validate_dataset(DatasetParts {
            name: name.into(),
            values,
            frequency: frequency.into(),
            seasonal_period,
            split_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> ArrayView2<'_, S> {
        self.values.view()
    }

    pub fn frequency(&self) -> &str {
        &self.frequency
    }

    pub fn seasonal_period(&self) -> usize {
        self.seasonal_period
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn train_rows(&self) -> ArrayView2<'_, S> {
        self.values.slice(s![..self.split_index, ..])
    }

    pub fn test_rows(&self) -> ArrayView2<'_, S> {
        self.values.slice(s![self.split_index.., ..])
    }

    pub fn test_len(&self) -> usize {
        self.len() - self.split_index
    }

    /// Same metadata over new values of identical shape (offline dataset-level
    /// preprocessing). Fails if the new values are non-finite.
    pub fn map_values(&self, values: Array2<S>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::shape(
                format!("{:?}", self.values.dim()),
                format!("{:?}", values.dim()),
            ));
        }
        validate_dataset(DatasetParts {
            name: self.name.clone(),
            values,
            frequency: self.frequency.clone(),
            seasonal_period: self.seasonal_period,
            split_index: self.split_index,
        })
    }

    pub fn into_parts(self) -> DatasetParts<S> {
        DatasetParts {
            name: self.name,
            values: self.values,
            frequency: self.frequency,
            seasonal_period: self.seasonal_period,
            split_index: self.split_index,
        }
    }
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
struct NormStatsRepr<S> {
    method: Method,
    scope: Scope,
    shift: Vec<S>,
    scale: Vec<S>,
    #[serde(default)]
    guarded: Vec<usize>,
}

/// Channel-wise shift and scale vectors with the method and scope that
/// produced them. Applying them maps `x` to `(x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound(serialize = "S: Scalar", deserialize = "S: Scalar"),
    try_from = "NormStatsRepr<S>"
)]
pub struct NormStats<S> {
    method: Method,
    scope: Scope,
    shift: Vec<S>,
    scale: Vec<S>,
    /// Channels whose fitted scale fell below epsilon and was raised to it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    guarded: Vec<usize>,
}

impl<S: Scalar> TryFrom<NormStatsRepr<S>> for NormStats<S> {
    type Error = Error;

    fn try_from(r: NormStatsRepr<S>) -> Result<Self> {
        let mut stats = NormStats::new(r.method, r.scope, r.shift, r.scale)?;
        stats.guarded = r.guarded;
        Ok(stats)
    }
}

impl<S: Scalar> NormStats<S> {
    /// Builds statistics from already-guarded vectors.
    pub fn new(method: Method, scope: Scope, shift: Vec<S>, scale: Vec<S>) -> Result<Self> {
        if shift.len() != scale.len() {
            return Err(Error::shape(
                format!("{} scale entries", shift.len()),
                scale.len(),
            ));
        }
        if shift.is_empty() {
            return Err(Error::BadStats("zero channels".into()));
        }
        let eps = epsilon::<S>();
        for (c, (&b, &g)) in shift.iter().zip(&scale).enumerate() {
            if !b.is_finite() || !g.is_finite() {
                return Err(Error::BadStats(format!("non-finite entry in channel {c}")));
            }
            if g < eps {
                return Err(Error::BadStats(format!(
                    "scale {g} below epsilon in channel {c}"
                )));
            }
        }
        if method == Method::Raw
            && (shift.iter().any(|&b| b != S::zero()) || scale.iter().any(|&g| g != S::one()))
        {
            return Err(Error::BadStats("Raw statistics must be (0, 1)".into()));
        }
        if method.is_shift_free() && shift.iter().any(|&b| b != S::zero()) {
            return Err(Error::BadStats(format!("{method} has zero shift")));
        }
        Ok(NormStats {
            method,
            scope,
            shift,
            scale,
            guarded: Vec::new(),
        })
    }

    /// Builds statistics from raw fitted scales, raising any scale below
    /// epsilon to epsilon and remembering which channels were touched.
    pub(crate) fn guarded(method: Method, scope: Scope, shift: Vec<S>, mut scale: Vec<S>) -> Self {
        let eps = epsilon::<S>();
        let mut guarded = Vec::new();
        for (c, g) in scale.iter_mut().enumerate() {
            if !(*g >= eps) {
                *g = eps;
                guarded.push(c);
            }
        }
        NormStats {
            method,
            scope,
            shift,
            scale,
            guarded,
        }
    }

    /// The Raw statistics `(0, 1)`.
    pub fn identity(channels: usize, scope: Scope) -> Self {
        NormStats {
            method: Method::Raw,
            scope,
            shift: vec![S::zero(); channels],
            scale: vec![S::one(); channels],
            guarded: Vec::new(),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn shift(&self) -> &[S] {
        &self.shift
    }

    pub fn scale(&self) -> &[S] {
        &self.scale
    }

    pub fn channels(&self) -> usize {
        self.shift.len()
    }

    pub fn guarded_channels(&self) -> &[usize] {
        &self.guarded
    }

    pub fn is_identity(&self) -> bool {
        self.method == Method::Raw
    }
}

/// Where an instance was cut from: the dataset and the row index of its first
/// context step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub dataset: String,
    pub start: usize,
}

/// A context window of `L` rows followed by a horizon of `H` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S> {
    context: Array2<S>,
    horizon: Array2<S>,
    origin: Origin,
}

impl<S: Scalar> Instance<S> {
    pub fn new(context: Array2<S>, horizon: Array2<S>, origin: Origin) -> Result<Self> {
        if context.nrows() == 0 || horizon.nrows() == 0 {
            return Err(Error::EmptyInput("instance needs L >= 1 and H >= 1"));
        }
        if context.ncols() == 0 || context.ncols() != horizon.ncols() {
            return Err(Error::shape(
                format!("{} horizon channels", context.ncols()),
                horizon.ncols(),
            ));
        }
        if let Some(((row, col), _)) = context
            .indexed_iter()
            .chain(horizon.indexed_iter())
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Instance {
            context,
            horizon,
            origin,
        })
    }

    /// Cuts the instance whose context starts at `start`.
    pub fn from_dataset(d: &Dataset<S>, start: usize, context_len: usize, horizon: usize) -> Result<Self> {
        let end = start + context_len + horizon;
        if end > d.len() {
            return Err(Error::WindowTooLong {
                needed: end,
                available: d.len(),
            });
        }
        let v = d.values();
        Instance::new(
            v.slice(s![start..start + context_len, ..]).to_owned(),
            v.slice(s![start + context_len..end, ..]).to_owned(),
            Origin {
                dataset: d.name().to_string(),
                start,
            },
        )
    }

    pub fn context(&self) -> ArrayView2<'_, S> {
        self.context.view()
    }

    pub fn horizon(&self) -> ArrayView2<'_, S> {
        self.horizon.view()
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn context_len(&self) -> usize {
        self.context.nrows()
    }

    pub fn horizon_len(&self) -> usize {
        self.horizon.nrows()
    }

    pub fn channels(&self) -> usize {
        self.context.ncols()
    }

    /// Rows `[start, end)` of the source dataset covered by this instance.
    pub fn row_span(&self) -> (usize, usize) {
        let start = self.origin.start;
        (start, start + self.context_len() + self.horizon_len())
    }

    pub fn into_parts(self) -> (Array2<S>, Array2<S>, Origin) {
        (self.context, self.horizon, self.origin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastKind {
    Point,
    Gaussian,
    Token,
}

impl ForecastKind {
    pub fn name(self) -> &'static str {
        match self {
            ForecastKind::Point => "Point",
            ForecastKind::Gaussian => "Gaussian",
            ForecastKind::Token => "Token",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForecastPayload<S> {
    Point(Array2<S>),
    /// Mean and standard deviation per horizon step and channel.
    Gaussian { mean: Array2<S>, std: Array2<S> },
    /// Logits shaped `H x C x B`.
    Token {
        logits: Array3<S>,
        tokenizer: TokenizerSpec,
    },
}

/// Model output over the horizon together with the statistics that map it
/// back to raw scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast<S> {
    payload: ForecastPayload<S>,
    denorm_stats: NormStats<S>,
}

impl<S: Scalar> Forecast<S> {
    pub fn point(values: Array2<S>, denorm_stats: NormStats<S>) -> Result<Self> {
        Self::check_channels(values.ncols(), &denorm_stats)?;
        Ok(Forecast {
            payload: ForecastPayload::Point(values),
            denorm_stats,
        })
    }

    pub fn gaussian(mean: Array2<S>, std: Array2<S>, denorm_stats: NormStats<S>) -> Result<Self> {
        if mean.dim() != std.dim() {
            return Err(Error::shape(format!("{:?}", mean.dim()), format!("{:?}", std.dim())));
        }
        Self::check_channels(mean.ncols(), &denorm_stats)?;
        if let Some(((row, col), _)) = std.indexed_iter().find(|(_, v)| !(**v > S::zero() && v.is_finite())) {
            return Err(Error::NonPositiveSigma { row, col });
        }
        Ok(Forecast {
            payload: ForecastPayload::Gaussian { mean, std },
            denorm_stats,
        })
    }

    pub fn token(logits: Array3<S>, tokenizer: TokenizerSpec, denorm_stats: NormStats<S>) -> Result<Self> {
        let (_, c, b) = logits.dim();
        Self::check_channels(c, &denorm_stats)?;
        if b != tokenizer.num_bins() {
            return Err(Error::shape(format!("{} bins", tokenizer.num_bins()), b));
        }
        Ok(Forecast {
            payload: ForecastPayload::Token { logits, tokenizer },
            denorm_stats,
        })
    }

    fn check_channels(c: usize, stats: &NormStats<S>) -> Result<()> {
        if c != stats.channels() {
            return Err(Error::shape(format!("{} channels", stats.channels()), c));
        }
        Ok(())
    }

    pub fn kind(&self) -> ForecastKind {
        match self.payload {
            ForecastPayload::Point(_) => ForecastKind::Point,
            ForecastPayload::Gaussian { .. } => ForecastKind::Gaussian,
            ForecastPayload::Token { .. } => ForecastKind::Token,
        }
    }

    pub fn payload(&self) -> &ForecastPayload<S> {
        &self.payload
    }

    pub fn denorm_stats(&self) -> &NormStats<S> {
        &self.denorm_stats
    }

    pub fn horizon_len(&self) -> usize {
        match &self.payload {
            ForecastPayload::Point(v) => v.nrows(),
            ForecastPayload::Gaussian { mean, .. } => mean.nrows(),
            ForecastPayload::Token { logits, .. } => logits.dim().0,
        }
    }

    /// Replaces the de-normalization record, keeping the payload.
    pub fn with_stats(self, denorm_stats: NormStats<S>) -> Result<Self> {
        let c = match &self.payload {
            ForecastPayload::Point(v) => v.ncols(),
            ForecastPayload::Gaussian { mean, .. } => mean.ncols(),
            ForecastPayload::Token { logits, .. } => logits.dim().1,
        };
        Self::check_channels(c, &denorm_stats)?;
        Ok(Forecast {
            payload: self.payload,
            denorm_stats,
        })
    }

    pub fn into_payload(self) -> ForecastPayload<S> {
        self.payload
    }
}

/// One scored (model, scheme, dataset, setting) cell of one leave-one-out
/// variant. `variant` names the dataset withheld for that run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub model: String,
    pub scheme: Scheme,
    pub dataset: String,
    pub setting: Setting,
    pub variant: String,
    pub mase: f64,
}

/// Mean and population standard deviation over leave-one-out variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub scheme: Scheme,
    pub setting: Setting,
    pub mean: f64,
    pub std: f64,
    pub variants: usize,
}

/// `delta[i][j]` is the percentage MASE drop from `schemes[i]` (reference) to
/// `schemes[j]`, or `None` when the reference MASE is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTable {
    pub model: String,
    pub setting: Setting,
    pub schemes: Vec<Scheme>,
    pub delta: Vec<Vec<Option<f64>>>,
}

impl ImprovementTable {
    pub fn get(&self, reference: Scheme, method: Scheme) -> Option<f64> {
        let i = self.schemes.iter().position(|&s| s == reference)?;
        let j = self.schemes.iter().position(|&s| s == method)?;
        self.delta[i][j]
    }
}

/// Label used for rows averaged over models.
pub const AVG_MODEL: &str = "Avg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
    pub aggregates: Vec<Aggregate>,
    pub improvements: Vec<ImprovementTable>,
}

impl EvalReport {
    pub fn aggregate(&self, model: &str, scheme: Scheme, setting: Setting) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.scheme == scheme && a.setting == setting)
    }

    pub fn improvement(&self, model: &str, setting: Setting) -> Option<&ImprovementTable> {
        self.improvements
            .iter()
            .find(|t| t.model == model && t.setting == setting)
    }
}
