//! Instrumented corpus access. Every read of dataset rows during a variant
//! goes through [`CorpusView`], which records it so that leakage can be
//! checked after the run instead of trusted.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Purpose {
    /// Fitting dataset-level statistics.
    DatasetStats,
    /// Copying rows into the training pool.
    TrainPool,
    /// One sampled training window.
    TrainSample,
    /// Test-row evaluation in the in-distribution setting.
    EvalId,
    /// Test-row evaluation of the withheld dataset.
    EvalZs,
}

impl Purpose {
    fn is_training(self) -> bool {
        matches!(self, Purpose::DatasetStats | Purpose::TrainPool | Purpose::TrainSample)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub seq: usize,
    pub dataset: String,
    /// Half-open row range `[start, end)` in the dataset's own indexing.
    pub start: usize,
    pub end: usize,
    pub purpose: Purpose,
}

/// Per (dataset, purpose) extent of the recorded accesses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessExtent {
    pub dataset: String,
    pub purpose: Purpose,
    pub count: usize,
    pub min_row: usize,
    pub max_row_end: usize,
    pub first_seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSummary {
    pub extents: Vec<AccessExtent>,
    /// Sequence number at which zero-shot evaluation began.
    pub zs_phase_seq: Option<usize>,
}

/// Read-only view over the corpus that logs row accesses.
pub struct CorpusView<'a, S> {
    datasets: Vec<&'a Dataset<S>>,
    log: RefCell<Vec<Access>>,
    zs_phase: Cell<Option<usize>>,
}

impl<'a, S: Scalar> CorpusView<'a, S> {
    pub fn new(datasets: Vec<&'a Dataset<S>>) -> Self {
        CorpusView {
            datasets,
            log: RefCell::new(Vec::new()),
            zs_phase: Cell::new(None),
        }
    }

    fn find(&self, name: &str) -> Result<&'a Dataset<S>> {
        self.datasets
            .iter()
            .copied()
            .find(|d| d.name() == name)
            .ok_or_else(|| Error::MissingDataset(name.to_string()))
    }

    /// Metadata only; no rows are touched.
    pub fn meta(&self, name: &str) -> Result<&'a Dataset<S>> {
        self.find(name)
    }

    pub fn record(&self, dataset: &str, start: usize, end: usize, purpose: Purpose) {
        let mut log = self.log.borrow_mut();
        let seq = log.len();
        log.push(Access {
            seq,
            dataset: dataset.to_string(),
            start,
            end,
            purpose,
        });
    }

    /// The training rows of `name`, logged with `purpose`.
    pub fn train_rows(&self, name: &str, purpose: Purpose) -> Result<&'a Dataset<S>> {
        let d = self.find(name)?;
        self.record(name, 0, d.split_index(), purpose);
        Ok(d)
    }

    /// Marks the start of zero-shot evaluation.
    pub fn begin_zero_shot(&self) {
        self.zs_phase.set(Some(self.log.borrow().len()));
    }

    /// The dataset for test-row evaluation, logged as its test range.
    pub fn eval_rows(&self, name: &str, purpose: Purpose) -> Result<&'a Dataset<S>> {
        let d = self.find(name)?;
        self.record(name, d.split_index(), d.len(), purpose);
        Ok(d)
    }

    pub fn accesses(&self) -> Vec<Access> {
        self.log.borrow().clone()
    }

    pub fn summary(&self) -> AccessSummary {
        let mut map: BTreeMap<(String, Purpose), AccessExtent> = BTreeMap::new();
        for a in self.log.borrow().iter() {
            map.entry((a.dataset.clone(), a.purpose))
                .and_modify(|e| {
                    e.count += 1;
                    e.min_row = e.min_row.min(a.start);
                    e.max_row_end = e.max_row_end.max(a.end);
                })
                .or_insert(AccessExtent {
                    dataset: a.dataset.clone(),
                    purpose: a.purpose,
                    count: 1,
                    min_row: a.start,
                    max_row_end: a.end,
                    first_seq: a.seq,
                });
        }
        AccessSummary {
            extents: map.into_values().collect(),
            zs_phase_seq: self.zs_phase.get(),
        }
    }

    /// Leakage violations in the log, given the withheld dataset:
    ///
    /// - training accesses reaching past a dataset's split index,
    /// - evaluation accesses starting before it,
    /// - any access to the withheld dataset other than zero-shot evaluation
    ///   after the zero-shot phase began.
    pub fn violations(&self, withheld: &str) -> Vec<String> {
        let zs = self.zs_phase.get();
        let mut out = Vec::new();
        for a in self.log.borrow().iter() {
            let split = match self.find(&a.dataset) {
                Ok(d) => d.split_index(),
                Err(_) => {
                    out.push(format!("access #{} to unknown dataset {}", a.seq, a.dataset));
                    continue;
                }
            };
            if a.purpose.is_training() && a.end > split {
                out.push(format!(
                    "{:?} on {} reads rows {}..{} past split {split}",
                    a.purpose, a.dataset, a.start, a.end
                ));
            }
            if !a.purpose.is_training() && a.start < split {
                out.push(format!(
                    "{:?} on {} reads training row {}",
                    a.purpose, a.dataset, a.start
                ));
            }
            if a.dataset == withheld {
                let after_zs = zs.is_some_and(|z| a.seq >= z);
                if a.purpose != Purpose::EvalZs || !after_zs {
                    out.push(format!(
                        "withheld dataset {withheld} accessed for {:?} (access #{})",
                        a.purpose, a.seq
                    ));
                }
            } else if a.purpose == Purpose::EvalZs {
                out.push(format!("zero-shot evaluation of non-withheld dataset {}", a.dataset));
            }
        }
        out
    }

    /// `Err(Leakage)` listing every violation, if any.
    pub fn check(&self, withheld: &str) -> Result<()> {
        let v = self.violations(withheld);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Leakage(v.join("; ")))
        }
    }
}
