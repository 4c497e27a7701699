//! Aggregation of evaluation rows into the persisted report.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Aggregate, EvalEntry, EvalReport, ImprovementTable, Scheme, Setting, AVG_MODEL};
use crate::error::{Error, Result};
use crate::harness::plan::{DataSource, ExperimentPlan, Variant, VariantSeeds};
use crate::harness::run::{TrainingSummary, VariantRecord};
use crate::metrics::improvement;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn std_pop(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn entry_order(a: &EvalEntry, b: &EvalEntry) -> std::cmp::Ordering {
    (&a.model, a.setting, a.scheme, &a.variant, &a.dataset)
        .cmp(&(&b.model, b.setting, b.scheme, &b.variant, &b.dataset))
        .then(a.mase.total_cmp(&b.mase))
}

/// Builds aggregates and improvement tables from raw rows.
///
/// Per (model, scheme, setting): MASE is averaged over datasets within each
/// leave-one-out variant, with every dataset weighted equally, and the
/// variant means are summarized by their mean and population standard
/// deviation. `Avg` rows average the per-model means. Rows are sorted first,
/// so the result does not depend on input order.
pub fn assemble_report(mut rows: Vec<EvalEntry>) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no evaluation rows"));
    }
    if let Some(bad) = rows.iter().find(|r| !r.mase.is_finite()) {
        return Err(Error::BadStats(format!(
            "non-finite MASE for {} / {} / {}",
            bad.model, bad.scheme, bad.dataset
        )));
    }
    rows.sort_by(entry_order);

    let mut cells: BTreeMap<(String, Setting, Scheme), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in &rows {
        cells
            .entry((r.model.clone(), r.setting, r.scheme))
            .or_default()
            .entry(r.variant.clone())
            .or_default()
            .push(r.mase);
    }
    let mut aggregates: Vec<Aggregate> = cells
        .into_iter()
        .map(|((model, setting, scheme), by_variant)| {
            let means: Vec<f64> = by_variant.values().map(|v| mean(v)).collect();
            Aggregate {
                model,
                scheme,
                setting,
                mean: mean(&means),
                std: std_pop(&means),
                variants: means.len(),
            }
        })
        .collect();

    let mut avg: BTreeMap<(Setting, Scheme), Vec<f64>> = BTreeMap::new();
    for a in &aggregates {
        avg.entry((a.setting, a.scheme)).or_default().push(a.mean);
    }
    let avg_rows: Vec<Aggregate> = avg
        .into_iter()
        .map(|((setting, scheme), means)| Aggregate {
            model: AVG_MODEL.to_string(),
            scheme,
            setting,
            mean: mean(&means),
            std: std_pop(&means),
            variants: means.len(),
        })
        .collect();
    aggregates.extend(avg_rows);

    let mut groups: BTreeMap<(String, Setting), Vec<(Scheme, f64)>> = BTreeMap::new();
    for a in &aggregates {
        groups
            .entry((a.model.clone(), a.setting))
            .or_default()
            .push((a.scheme, a.mean));
    }
    let improvements = groups
        .into_iter()
        .map(|((model, setting), cols)| ImprovementTable {
            model,
            setting,
            schemes: cols.iter().map(|c| c.0).collect(),
            delta: cols
                .iter()
                .map(|&(_, r)| cols.iter().map(|&(_, m)| improvement(r, m).ok()).collect())
                .collect(),
        })
        .collect();

    Ok(EvalReport {
        entries: rows,
        aggregates,
        improvements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSeedRecord {
    pub variant: Variant,
    #[serde(flatten)]
    pub seeds: VariantSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub plan: u64,
    /// Seed of the synthetic generator, when the corpus is synthetic.
    pub data: Option<u64>,
    pub variants: Vec<VariantSeedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTraining {
    pub variant: Variant,
    #[serde(flatten)]
    pub summary: TrainingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// How datasets are weighted within a variant's mean.
    pub dataset_weighting: String,
    /// Dispersion reported next to each mean.
    pub spread: String,
    pub leakage_checked: bool,
}

/// Everything a run produces that the tables are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: String,
    pub plan: ExperimentPlan,
    pub seeds: SeedRecord,
    pub rows: Vec<EvalEntry>,
    pub aggregates: Vec<Aggregate>,
    pub improvements: Vec<ImprovementTable>,
    pub training: Vec<VariantTraining>,
    pub metadata: ReportMetadata,
}

impl RunReport {
    /// Report over the given variant records, in canonical variant order.
    pub fn build(plan: &ExperimentPlan, mut records: Vec<VariantRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.variant.cmp(&b.variant));
        let rows = records.iter().flat_map(|r| r.rows.iter().cloned()).collect();
        let EvalReport {
            entries,
            aggregates,
            improvements,
        } = assemble_report(rows)?;
        Ok(RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            plan: plan.clone(),
            seeds: SeedRecord {
                plan: plan.seed,
                data: matches!(plan.data, DataSource::Synthetic(_)).then_some(plan.seed),
                variants: records
                    .iter()
                    .map(|r| VariantSeedRecord {
                        variant: r.variant.clone(),
                        seeds: r.seeds.clone(),
                    })
                    .collect(),
            },
            rows: entries,
            aggregates,
            improvements,
            training: records
                .iter()
                .map(|r| VariantTraining {
                    variant: r.variant.clone(),
                    summary: r.training.clone(),
                })
                .collect(),
            metadata: ReportMetadata {
                dataset_weighting: "equal per dataset within a variant".into(),
                spread: "population standard deviation over variants".into(),
                leakage_checked: true,
            },
        })
    }

    pub fn eval_report(&self) -> EvalReport {
        EvalReport {
            entries: self.rows.clone(),
            aggregates: self.aggregates.clone(),
            improvements: self.improvements.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a report, checking the schema version before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch {
                expected: REPORT_SCHEMA_VERSION,
                found: v.schema_version,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
