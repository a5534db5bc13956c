use std::collections::BTreeMap;
use std::sync::Arc;

use editscore_core::dataset::{encode_png, load_manifest, write_manifest, ImageProvider};
use editscore_core::metrics::ScorerRegistry;
use editscore_core::model::{load_checkpoint, save_checkpoint, ModelConfig};
use editscore_core::rating::{ManualClock, NextSample, RatingService, RatingSubmission, MIN_DWELL_MS};
use editscore_core::subjective::{
    aggregate_mos, bt500_screen, read_mos_table, read_score_rows, write_score_rows, zscore_normalize, ScoreMatrix,
    DEFAULT_DIMS, DIM_OVERALL,
};
use editscore_core::synth::{synth_dataset, synth_ratings};
use editscore_core::training::{prepare_items, run_cross_validation, LossConfig, TrainConfig};

/// Synthetic study written to disk, read back, screened, aggregated, scored and trained on.
#[test]
fn disk_round_trip_from_ratings_to_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_dataset(24, 32, 12);
    for c in ds.cases.cases() {
        for r in [&c.source_image, &c.edited_image] {
            std::fs::write(dir.path().join(r), encode_png(&ds.images.load(r).unwrap()).unwrap()).unwrap();
        }
    }
    let manifest = dir.path().join("manifest.jsonl");
    write_manifest(&ds.cases, &manifest).unwrap();
    let cases = load_manifest(&manifest).unwrap();
    assert_eq!(cases.cases(), ds.cases.cases());
    let images = cases.image_provider();

    let ratings = dir.path().join("ratings.csv");
    write_score_rows(&synth_ratings(&ds.truth, 20, 1, 3), std::fs::File::create(&ratings).unwrap()).unwrap();
    let rows = read_score_rows(&ratings).unwrap();
    let zm = zscore_normalize(&ScoreMatrix::from_rows(&rows).unwrap()).unwrap();
    let screening = bt500_screen(&zm).unwrap();
    // Whether the adversary is rejected also depends on the balance of its outliers;
    // it must at least stand out and no consistent rater may be dropped.
    assert!(screening.rejected.iter().all(|r| r == "adversary0"));
    let adv = screening.observer("adversary0").unwrap().outlier_fraction();
    assert!(screening.observers.iter().all(|o| o.rater_id == "adversary0" || o.outlier_fraction() < adv));
    let mos = aggregate_mos(&zm, &screening.kept).unwrap();
    let mos_path = dir.path().join("mos.csv");
    mos.write_csv(std::fs::File::create(&mos_path).unwrap()).unwrap();
    let mos = read_mos_table(&mos_path).unwrap();
    assert_eq!(mos.len(), 24);

    let target = mos.column(DIM_OVERALL).unwrap();
    let registry = ScorerRegistry::builtin();
    let scorers = registry.select(&registry.names()).unwrap();
    let report = editscore_core::metrics::run_baselines(&cases, &target, &scorers, &images, None);
    assert_eq!(report.rows.len(), scorers.len());
    assert!(report.failures.is_empty());
    // Pixel fidelity tracks the noise that drives overall quality.
    let psnr = report.row("psnr").unwrap().summary.as_ref().unwrap().srocc;
    assert!(psnr > 0.3, "psnr srocc {psnr}");

    let cfg = ModelConfig::stub();
    let items = prepare_items(cases.cases(), &target, &images, &cfg).unwrap();
    let tc = TrainConfig { lr: 1e-2, batch_size: 4, stage1_epochs: 10, stage2_epochs: 5, ..TrainConfig::default() };
    let cv = run_cross_validation(&items, &cfg, &tc, &LossConfig::default(), 3, None, "disk").unwrap();
    assert!(!cv.report.partial);
    assert_eq!(cv.report.folds.len(), 3);
    let model = cv.models[0].as_ref().unwrap();
    let ck = dir.path().join("fold0.json");
    save_checkpoint(model, &ck).unwrap();
    let back = load_checkpoint(&ck).unwrap();
    for it in &items {
        assert_eq!(back.predict(&it.features).unwrap(), model.predict(&it.features).unwrap());
    }
}

/// A rating service restarted mid-study resumes from its journal and exports the same rows.
#[test]
fn rating_service_resumes_from_journal() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let ds = synth_dataset(6, 8, 4);
    let clock = ManualClock::new(0);
    let raters = ["a", "b"];
    let scores: BTreeMap<String, i64> = DEFAULT_DIMS.iter().map(|d| (d.to_string(), 7)).collect();

    let rate = |svc: &RatingService, id: &str, n: usize| {
        for _ in 0..n {
            match svc.next_sample(id).unwrap() {
                NextSample::Case(p) => {
                    clock.advance(MIN_DWELL_MS);
                    let sub = RatingSubmission { case_id: p.case_id, scores: scores.clone(), client_dwell_ms: None };
                    svc.submit_rating(id, sub).unwrap();
                }
                NextSample::Break { break_until, .. } => clock.set(break_until),
                NextSample::Done { .. } => return,
            }
        }
    };

    let first = RatingService::new(&ds.cases, raters, Arc::new(clock.clone())).unwrap().with_journal(&journal).unwrap();
    let sa = first.create_session("a", 1).unwrap().session_id;
    let sb = first.create_session("b", 2).unwrap().session_id;
    rate(&first, &sa, 3);
    rate(&first, &sb, 6);
    // Serve one case to "a" and leave it pending across the restart.
    let NextSample::Case(pending) = first.next_sample(&sa).unwrap() else { panic!("expected a case") };
    drop(first);

    let second = RatingService::new(&ds.cases, raters, Arc::new(clock.clone())).unwrap().with_journal(&journal).unwrap();
    assert_eq!(second.session(&sa).unwrap().cursor, 3);
    assert!(second.create_session("a", 9).is_err());
    let NextSample::Case(again) = second.next_sample(&sa).unwrap() else { panic!("expected the pending case") };
    assert_eq!(again.case_id, pending.case_id);
    assert_eq!(again.served_at, pending.served_at);
    rate(&second, &sa, 10);
    assert!(matches!(second.next_sample(&sa).unwrap(), NextSample::Done { completed: 6, total: 6 }));
    let exported = second.export_rows().unwrap();
    assert_eq!(exported.len(), 2 * 6 * 3);

    let third = RatingService::new(&ds.cases, raters, Arc::new(clock.clone())).unwrap().with_journal(&journal).unwrap();
    assert_eq!(third.export_rows().unwrap(), exported);
}
