use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{horizon_for_frequency, load_csv, Split, SyntheticSpec};
use crate::data::{generate_synthetic, Manifest};
use crate::domain::{Dataset, Scheme};
use crate::error::{Error, Result};
use crate::models::{LossKind, TokenizerSpec, TrainConfig};
use crate::scalar::Scalar;

/// Lag of the naive forecast in the MASE denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaiveLag {
    /// The dataset's seasonal period.
    #[default]
    Seasonal,
    /// Lag 1 (persistence).
    One,
}

impl NaiveLag {
    pub fn lag<S: Scalar>(self, d: &Dataset<S>) -> usize {
        match self {
            NaiveLag::Seasonal => d.seasonal_period(),
            NaiveLag::One => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub name: String,
    pub path: PathBuf,
    pub frequency: String,
    pub seasonal_period: usize,
    #[serde(default)]
    pub split: Split,
}

/// Where the corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated in memory; its seed is replaced by the plan seed.
    Synthetic(SyntheticSpec),
    /// A `manifest.json` written by `tsnorm synth`.
    Manifest(PathBuf),
    Csv(Vec<CsvSource>),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

impl DataSource {
    /// Loads every dataset. Relative paths resolve against `base`.
    pub fn load<S: Scalar>(&self, seed: u64, base: &Path) -> Result<Vec<Dataset<S>>> {
        match self {
            DataSource::Synthetic(spec) => generate_synthetic(&SyntheticSpec {
                seed,
                ..spec.clone()
            }),
            DataSource::Manifest(path) => Manifest::load_datasets(&base.join(path)),
            DataSource::Csv(sources) => sources
                .iter()
                .map(|s| load_csv(base.join(&s.path), &s.name, &s.frequency, s.seasonal_period, s.split))
                .collect(),
        }
    }
}

/// Full description of a leave-one-dataset-out benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub data: DataSource,
    /// Datasets taking part, in order. Empty means every loaded dataset.
    pub corpus: Vec<String>,
    pub schemes: Vec<Scheme>,
    pub model_kinds: Vec<LossKind>,
    pub context_len: usize,
    /// Per-dataset horizon overrides; otherwise 24 hours at the dataset's
    /// frequency.
    pub horizons: BTreeMap<String, usize>,
    /// Datasets withheld in turn, one zero-shot variant each.
    pub withheld: Vec<String>,
    pub train: TrainConfig,
    pub seed: u64,
    /// Standard deviation of the initial weights.
    pub init_std: f64,
    pub tokenizer: TokenizerSpec,
    pub naive_lag: NaiveLag,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            data: DataSource::default(),
            corpus: Vec::new(),
            schemes: Scheme::ALL.to_vec(),
            model_kinds: vec![LossKind::Mse, LossKind::GaussianNll],
            context_len: 96,
            horizons: BTreeMap::new(),
            withheld: Vec::new(),
            train: TrainConfig::default(),
            seed: 0,
            init_std: 0.01,
            tokenizer: TokenizerSpec::default(),
            naive_lag: NaiveLag::Seasonal,
        }
    }
}

/// One training run: a model kind under a scheme with one dataset withheld.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub model: LossKind,
    pub scheme: Scheme,
    pub withheld: String,
}

impl Variant {
    /// File-system friendly identifier, unique within a plan.
    pub fn id(&self) -> String {
        format!("{}__{}__{}", self.model.name(), self.scheme.name(), self.withheld)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} / withheld {}", self.model, self.scheme, self.withheld)
    }
}

/// Seeds derived from the plan seed. They depend on the variant's identity,
/// not its position, so every scheme sees the same instances and the same
/// initial weights for a given (model, withheld) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSeeds {
    pub init: u64,
    pub sampling: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(seed), |h, b| splitmix64(h ^ u64::from(b)))
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every variant in a fixed order: model, then scheme, then withheld.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &model in &self.model_kinds {
            for &scheme in &self.schemes {
                for w in &self.withheld {
                    out.push(Variant {
                        model,
                        scheme,
                        withheld: w.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn seeds(&self, v: &Variant) -> VariantSeeds {
        VariantSeeds {
            init: mix(self.seed, &format!("init/{}/{}", v.model.name(), v.withheld)),
            sampling: mix(self.seed, &format!("sampling/{}", v.withheld)),
        }
    }

    /// Horizon of dataset `d`: explicit override or 24 hours of steps.
    pub fn horizon_for<S: Scalar>(&self, d: &Dataset<S>) -> Option<usize> {
        self.horizons
            .get(d.name())
            .copied()
            .or_else(|| horizon_for_frequency(d.frequency()))
    }

    /// The datasets named by `corpus` (all of `loaded` when empty), in order.
    pub fn select<'a, S: Scalar>(&self, loaded: &'a [Dataset<S>]) -> Result<Vec<&'a Dataset<S>>> {
        if self.corpus.is_empty() {
            return Ok(loaded.iter().collect());
        }
        self.corpus
            .iter()
            .map(|name| {
                loaded
                    .iter()
                    .find(|d| d.name() == name)
                    .ok_or_else(|| Error::MissingDataset(name.clone()))
            })
            .collect()
    }

    /// Checks the plan on its own and against the corpus, collecting every
    /// problem before anything is trained.
    pub fn validate<S: Scalar>(&self, corpus: &[&Dataset<S>]) -> Result<()> {
        let mut problems = Vec::new();
        if corpus.is_empty() {
            problems.push("corpus is empty".to_string());
        }
        if self.schemes.is_empty() {
            problems.push("no schemes".into());
        }
        if self.model_kinds.is_empty() {
            problems.push("no model kinds".into());
        }
        if self.withheld.is_empty() {
            problems.push("no withheld datasets".into());
        }
        if self.context_len == 0 {
            problems.push("context_len must be positive".into());
        }
        if self.train.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if !(self.train.lr.is_finite() && self.train.lr >= 0.0) {
            problems.push(format!("learning rate {} must be finite and >= 0", self.train.lr));
        }
        if !(self.train.clip_threshold > 0.0) {
            problems.push("clip_threshold must be positive".into());
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            problems.push("init_std must be finite and >= 0".into());
        }
        let mut seen = BTreeSet::new();
        for d in corpus {
            if !seen.insert(d.name()) {
                problems.push(format!("dataset {} listed twice", d.name()));
            }
        }
        let names: BTreeSet<&str> = corpus.iter().map(|d| d.name()).collect();
        for w in &self.withheld {
            if !names.contains(w.as_str()) {
                problems.push(format!("withheld dataset {w} is not in the corpus"));
            }
        }
        if corpus.len() < 2 {
            problems.push("need at least two datasets so that training data remains".into());
        }
        let mut dup = BTreeSet::new();
        for w in &self.withheld {
            if !dup.insert(w) {
                problems.push(format!("withheld dataset {w} listed twice"));
            }
        }
        for d in corpus {
            let Some(h) = self.horizon_for(d) else {
                problems.push(format!(
                    "{}: no horizon for frequency {:?}; set horizons.{}",
                    d.name(),
                    d.frequency(),
                    d.name()
                ));
                continue;
            };
            let window = self.context_len + h;
            if h == 0 {
                problems.push(format!("{}: horizon must be positive", d.name()));
            }
            if window > d.split_index() {
                problems.push(format!(
                    "{}: {} train rows cannot hold a {window}-row window",
                    d.name(),
                    d.split_index()
                ));
            }
            if window > d.test_len() {
                problems.push(format!(
                    "{}: {} test rows cannot hold a {window}-row window",
                    d.name(),
                    d.test_len()
                ));
            }
            let lag = self.naive_lag.lag(*d);
            if self.context_len <= lag {
                problems.push(format!(
                    "{}: context_len {} must exceed naive lag {lag}",
                    d.name(),
                    self.context_len
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPlan(problems))
        }
    }

    /// Largest horizon over the corpus, which sizes the model's output.
    pub fn max_horizon<S: Scalar>(&self, corpus: &[&Dataset<S>]) -> usize {
        corpus
            .iter()
            .filter_map(|d| self.horizon_for(*d))
            .max()
            .unwrap_or(1)
    }
}
