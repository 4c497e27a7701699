//! Training and scoring of single variants, and parallel execution of a plan.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, EvalEntry, Instance, Origin, Setting};
use crate::error::{Error, Result};
use crate::harness::access::{AccessSummary, CorpusView, Purpose};
use crate::harness::eval::evaluate_mean;
use crate::harness::plan::{ExperimentPlan, Variant, VariantSeeds};
use crate::models::{train, LinearForecaster, LossKind, TrainTrace};
use crate::norm::{fit_dataset_stats, normalize};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: usize,
    pub admitted: usize,
    pub rejected: usize,
    pub rejection_rate: f64,
    pub final_loss: f64,
    pub max_admitted_abs: f64,
}

impl TrainingSummary {
    fn of(trace: &TrainTrace) -> Self {
        TrainingSummary {
            steps: trace.steps.len(),
            admitted: trace.admitted,
            rejected: trace.rejected,
            rejection_rate: trace.rejection_rate(),
            final_loss: trace.steps.last().map_or(f64::NAN, |s| s.loss),
            max_admitted_abs: trace.max_admitted_abs,
        }
    }
}

/// Serializable result of one variant; enough to rebuild the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub variant: Variant,
    pub seeds: VariantSeeds,
    pub rows: Vec<EvalEntry>,
    pub training: TrainingSummary,
    pub access: AccessSummary,
}

#[derive(Debug, Clone)]
pub struct VariantOutcome<S> {
    pub record: VariantRecord,
    pub model: LinearForecaster<S>,
    pub trace: TrainTrace,
}

/// Training rows of one dataset, already normalized for dataset-level
/// schemes. Test rows never enter the pool.
struct PoolEntry<S> {
    name: String,
    rows: Array2<S>,
    horizon: usize,
}

/// Endless stream of training instances: a dataset uniformly at random, then
/// a window start uniformly at random within its training rows.
struct Sampler<'v, 'a, S> {
    pool: &'v [PoolEntry<S>],
    view: &'v CorpusView<'a, S>,
    context_len: usize,
    rng: ChaCha8Rng,
}

impl<S: Scalar> Iterator for Sampler<'_, '_, S> {
    type Item = Instance<S>;

    fn next(&mut self) -> Option<Instance<S>> {
        let p = &self.pool[self.rng.random_range(0..self.pool.len())];
        let l = self.context_len;
        let window = l + p.horizon;
        let start = self.rng.random_range(0..=p.rows.nrows() - window);
        self.view.record(&p.name, start, start + window, Purpose::TrainSample);
        let inst = Instance::new(
            p.rows.slice(s![start..start + l, ..]).to_owned(),
            p.rows.slice(s![start + l..start + window, ..]).to_owned(),
            Origin {
                dataset: p.name.clone(),
                start,
            },
        )
        .expect("pool windows are finite and non-empty");
        Some(inst)
    }
}

/// Trains one variant on every non-withheld dataset and scores it: ID on the
/// training datasets' test rows, then ZS on the withheld dataset. Fails with
/// [`Error::Leakage`] if the access log shows training on test rows or any
/// early touch of the withheld dataset.
pub fn run_variant<S: Scalar>(
    plan: &ExperimentPlan,
    corpus: &[&Dataset<S>],
    variant: &Variant,
) -> Result<VariantOutcome<S>> {
    let view = CorpusView::new(corpus.to_vec());
    let seeds = plan.seeds(variant);
    let l = plan.context_len;
    let horizon_of = |d: &Dataset<S>| {
        plan.horizon_for(d)
            .ok_or_else(|| Error::InvalidPlan(vec![format!("{}: no horizon", d.name())]))
    };
    let training: Vec<&str> = corpus
        .iter()
        .map(|d| d.name())
        .filter(|n| *n != variant.withheld)
        .collect();
    if training.is_empty() {
        return Err(Error::InvalidPlan(vec!["no training datasets remain".into()]));
    }

    let mut pool = Vec::with_capacity(training.len());
    for name in &training {
        let d = view.train_rows(name, Purpose::TrainPool)?;
        let rows = match variant.scheme.dataset_method() {
            Some(method) => {
                let stats = fit_dataset_stats(view.train_rows(name, Purpose::DatasetStats)?, method)?;
                normalize(d.train_rows(), &stats)?
            }
            None => d.train_rows().to_owned(),
        };
        let horizon = horizon_of(d)?;
        if rows.nrows() < l + horizon {
            return Err(Error::WindowTooLong {
                needed: l + horizon,
                available: rows.nrows(),
            });
        }
        pool.push(PoolEntry {
            name: name.to_string(),
            rows,
            horizon,
        });
    }

    let tokenizer = (variant.model == LossKind::TokenCe).then(|| plan.tokenizer.clone());
    let model = LinearForecaster::seeded(
        variant.model,
        l,
        plan.max_horizon(corpus),
        tokenizer,
        seeds.init,
        plan.init_std,
    )?;
    let sampler = Sampler {
        pool: &pool,
        view: &view,
        context_len: l,
        rng: ChaCha8Rng::seed_from_u64(seeds.sampling),
    };
    let (model, trace) = train(model, sampler, variant.scheme, &plan.train)?;
    log::debug!("{variant}: trained {} steps", trace.steps.len());

    let entry = |dataset: &str, setting: Setting, mase: f64| EvalEntry {
        model: variant.model.name().to_string(),
        scheme: variant.scheme,
        dataset: dataset.to_string(),
        setting,
        variant: variant.withheld.clone(),
        mase,
    };
    let mut rows = Vec::with_capacity(corpus.len());
    for name in &training {
        let d = view.eval_rows(name, Purpose::EvalId)?;
        let m = evaluate_mean(&model, variant.scheme, d, horizon_of(d)?, plan.naive_lag.lag(d))?;
        rows.push(entry(name, Setting::ID, m));
    }
    view.begin_zero_shot();
    let d = view.eval_rows(&variant.withheld, Purpose::EvalZs)?;
    let m = evaluate_mean(&model, variant.scheme, d, horizon_of(d)?, plan.naive_lag.lag(d))?;
    rows.push(entry(&variant.withheld, Setting::ZS, m));

    view.check(&variant.withheld)?;
    Ok(VariantOutcome {
        record: VariantRecord {
            variant: variant.clone(),
            seeds,
            rows,
            training: TrainingSummary::of(&trace),
            access: view.summary(),
        },
        model,
        trace,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 or 1 runs variants one after another.
    pub jobs: usize,
    /// Variant ids to skip, typically ones already completed.
    pub skip: BTreeSet<String>,
}

/// Runs every variant of `plan` not listed in `opts.skip`, handing each
/// outcome to `sink` on the calling thread as it completes. Variants are
/// independent, so completion order does not affect their results. The first
/// error stops the scheduling of new variants and is returned once running
/// ones finish.
pub fn run_plan<S, F>(plan: &ExperimentPlan, corpus: &[&Dataset<S>], opts: &RunOptions, mut sink: F) -> Result<()>
where
    S: Scalar,
    F: FnMut(VariantOutcome<S>) -> Result<()>,
{
    plan.validate(corpus)?;
    let pending: Vec<Variant> = plan
        .variants()
        .into_iter()
        .filter(|v| !opts.skip.contains(&v.id()))
        .collect();
    let jobs = opts.jobs.clamp(1, pending.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, stop, pending) = (&next, &stop, &pending);
            scope.spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(v) = pending.get(i) else { break };
                    let out = run_variant(plan, corpus, v).map_err(|e| (v.clone(), e));
                    if tx.send(out).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut first_err = None;
        for msg in rx {
            let res = msg
                .map_err(|(v, e)| {
                    log::error!("{v}: {e}");
                    e
                })
                .and_then(&mut sink);
            if let Err(e) = res {
                stop.store(true, Ordering::SeqCst);
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    })
}
