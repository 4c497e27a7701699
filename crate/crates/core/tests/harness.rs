use proptest::prelude::*;
use tsnorm::data::{generate_synthetic, load_csv, write_csv_to, Split, SyntheticSpec};
use tsnorm::harness::{
    evaluate, run_variant, DataSource, ExperimentPlan, Purpose, RunReport, Variant,
};
use tsnorm::models::LossKind;
use tsnorm::{Dataset, DatasetF32, DatasetF64, Scheme, Setting};

fn tiny_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        data: DataSource::Synthetic(SyntheticSpec { n_datasets: 3, length: 600, ..Default::default() }),
        context_len: 48,
        withheld: vec!["synth_2".into()],
        model_kinds: vec![LossKind::Mse],
        seed: 3,
        ..Default::default()
    };
    plan.train.steps = 40;
    plan
}

fn corpus<S: tsnorm::Scalar>(plan: &ExperimentPlan) -> Vec<Dataset<S>> {
    plan.data.load(plan.seed, std::path::Path::new(".")).unwrap()
}

fn variant(scheme: Scheme) -> Variant {
    Variant { model: LossKind::Mse, scheme, withheld: "synth_2".into() }
}

#[test]
fn f32_variant_runs_end_to_end() {
    let plan = tiny_plan();
    let loaded: Vec<DatasetF32> = corpus(&plan);
    let refs: Vec<&DatasetF32> = loaded.iter().collect();
    plan.validate(&refs).unwrap();
    for scheme in [Scheme::RevIN, Scheme::Hybrid, Scheme::Raw] {
        let out = run_variant(&plan, &refs, &variant(scheme)).unwrap();
        assert!(out.model.is_finite());
        assert_eq!(out.record.rows.len(), 3);
        assert!(out.record.rows.iter().all(|r| r.mase.is_finite() && r.mase > 0.0));
    }
}

#[test]
fn f32_and_f64_agree_on_instance_normalized_runs() {
    let plan = tiny_plan();
    let a: Vec<DatasetF32> = corpus(&plan);
    let b: Vec<DatasetF64> = corpus(&plan);
    let ra = run_variant(&plan, &a.iter().collect::<Vec<_>>(), &variant(Scheme::RevIN)).unwrap();
    let rb = run_variant(&plan, &b.iter().collect::<Vec<_>>(), &variant(Scheme::RevIN)).unwrap();
    for (x, y) in ra.record.rows.iter().zip(&rb.record.rows) {
        assert!((x.mase - y.mase).abs() <= 1e-3 * y.mase, "{} vs {}", x.mase, y.mase);
    }
}

#[test]
fn hybrid_and_revin_score_a_model_identically() {
    let plan = tiny_plan();
    let loaded: Vec<DatasetF64> = corpus(&plan);
    let refs: Vec<&DatasetF64> = loaded.iter().collect();
    let model = run_variant(&plan, &refs, &variant(Scheme::Hybrid)).unwrap().model;
    for d in &loaded {
        let h = plan.horizon_for(d).unwrap();
        let x = evaluate(&model, Scheme::Hybrid, d, h, d.seasonal_period()).unwrap();
        let y = evaluate(&model, Scheme::RevIN, d, h, d.seasonal_period()).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn training_reads_stay_inside_training_rows() {
    let plan = tiny_plan();
    let loaded: Vec<DatasetF64> = corpus(&plan);
    let refs: Vec<&DatasetF64> = loaded.iter().collect();
    for scheme in Scheme::ALL {
        let rec = run_variant(&plan, &refs, &variant(scheme)).unwrap().record;
        let zs_seq = rec.access.zs_phase_seq.expect("zero-shot phase recorded");
        for e in &rec.access.extents {
            let d = loaded.iter().find(|d| d.name() == e.dataset).unwrap();
            match e.purpose {
                Purpose::DatasetStats | Purpose::TrainPool | Purpose::TrainSample => {
                    assert_ne!(e.dataset, "synth_2", "{scheme}: withheld data used in training");
                    assert!(e.max_row_end <= d.split_index(), "{scheme}: {e:?}");
                }
                Purpose::EvalId => assert_ne!(e.dataset, "synth_2"),
                Purpose::EvalZs => {
                    assert_eq!(e.dataset, "synth_2");
                    assert!(e.first_seq >= zs_seq);
                    assert!(e.min_row >= d.split_index());
                }
            }
        }
        let samples = rec.access.extents.iter().filter(|e| e.purpose == Purpose::TrainSample);
        let expected = plan.train.steps * plan.train.batch_size;
        assert!(samples.map(|e| e.count).sum::<usize>() >= expected);
        assert_eq!(rec.access.extents.iter().any(|e| e.purpose == Purpose::DatasetStats), scheme.dataset_method().is_some());
    }
}

#[test]
fn schemes_share_initialization_and_sampling_seeds() {
    let plan = tiny_plan();
    let a = plan.seeds(&variant(Scheme::RevIN));
    let b = plan.seeds(&variant(Scheme::Raw));
    assert_eq!(a, b);
    let other = plan.seeds(&Variant { withheld: "synth_1".into(), ..variant(Scheme::RevIN) });
    assert_ne!(a.sampling, other.sampling);
    let gauss = plan.seeds(&Variant { model: LossKind::GaussianNll, ..variant(Scheme::RevIN) });
    assert_ne!(a.init, gauss.init);
    assert_eq!(a.sampling, gauss.sampling);
}

#[test]
fn report_ignores_record_order() {
    let plan = ExperimentPlan { schemes: vec![Scheme::RevIN, Scheme::Raw], ..tiny_plan() };
    let loaded: Vec<DatasetF64> = corpus(&plan);
    let refs: Vec<&DatasetF64> = loaded.iter().collect();
    let records: Vec<_> = plan.variants().iter().map(|v| run_variant(&plan, &refs, v).unwrap().record).collect();
    let fwd = RunReport::build(&plan, records.clone()).unwrap().to_json().unwrap();
    let rev = RunReport::build(&plan, records.into_iter().rev().collect()).unwrap().to_json().unwrap();
    assert_eq!(fwd, rev);
    let back = RunReport::from_json(&fwd).unwrap();
    assert_eq!(back.to_json().unwrap(), fwd);
    assert!(back.rows.iter().any(|r| r.setting == Setting::ZS));
}

#[test]
fn synthetic_corpus_matches_plan_loader() {
    let plan = tiny_plan();
    let DataSource::Synthetic(spec) = &plan.data else { unreachable!() };
    let direct: Vec<DatasetF64> = generate_synthetic(&SyntheticSpec { seed: plan.seed, ..spec.clone() }).unwrap();
    assert_eq!(direct, corpus::<f64>(&plan));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_bitwise(
        (rows, cols, cells) in (8usize..30, 1usize..4)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(-1e12f64..1e12, r * c)))
    ) {
        let values = ndarray::Array2::from_shape_vec((rows, cols), cells).unwrap();
        let d = Dataset::new("rt", values, "1h", 2, rows / 2).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        std::fs::write(&path, buf).unwrap();
        let back: DatasetF64 = load_csv(&path, "rt", "1h", 2, Split::TrainRows(rows / 2)).unwrap();
        prop_assert!(back.values().iter().zip(d.values().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
