mod common;

use std::collections::BTreeMap;

use editscore_core::model::{
    group_of, load_checkpoint, save_checkpoint, Checkpoint, EditQualityModel, FusionMode, Matrix, ModelConfig,
};
use editscore_core::synth::synth_dataset;
use editscore_core::training::{prepare_items, total_loss, total_loss_grad, LossConfig, TrainItem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::reference_forward;

fn items(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<TrainItem> {
    let ds = synth_dataset(n, 16, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: BTreeMap<String, f64> = ds.cases.case_ids().map(|c| (c.to_string(), rng.gen_range(1.0..10.0))).collect();
    prepare_items(ds.cases.cases(), &targets, &ds.images, cfg).unwrap()
}

fn loss(model: &EditQualityModel, items: &[TrainItem], lc: &LossConfig) -> f64 {
    let p: Vec<f64> = items.iter().map(|it| model.predict(&it.features).unwrap()).collect();
    let t: Vec<f64> = items.iter().map(|it| it.target).collect();
    total_loss(&p, &t, lc)
}

fn variants() -> Vec<ModelConfig> {
    let stub = ModelConfig::stub();
    let mut out = Vec::new();
    for fusion in [FusionMode::Concat, FusionMode::Attention, FusionMode::Identity] {
        for shared in [true, false] {
            out.push(ModelConfig { fusion, shared_source_encoder: shared, ..stub.clone() });
        }
    }
    out.push(ModelConfig { use_text_branch: false, ..stub.clone() });
    out.push(ModelConfig { use_source_branch: false, ..stub });
    out
}

/// Every parameter group gets a nonzero analytic gradient that matches central differences.
#[test]
fn gradients_match_finite_differences_per_group() {
    let lc = LossConfig::default();
    for (vi, cfg) in variants().into_iter().enumerate() {
        let mut model = EditQualityModel::new(cfg.clone(), vi as u64).unwrap();
        let batch = items(&cfg, 5, 30 + vi as u64);
        let p: Vec<f64> = batch.iter().map(|it| model.predict(&it.features).unwrap()).collect();
        let t: Vec<f64> = batch.iter().map(|it| it.target).collect();
        let (_, dl) = total_loss_grad(&p, &t, &lc);
        let mut grads: Vec<Matrix> = model.params().iter().map(|(_, m)| Matrix::zeros(m.rows, m.cols)).collect();
        for (it, g) in batch.iter().zip(&dl) {
            model.accumulate_gradient(&it.features, *g, &mut grads).unwrap();
        }
        let mut norms: BTreeMap<String, f64> = BTreeMap::new();
        for pid in 0..grads.len() {
            let group = group_of(model.params().name(pid)).to_string();
            *norms.entry(group).or_default() += grads[pid].data.iter().map(|g| g * g).sum::<f64>();
            // A handful of entries per tensor keeps this quick; the acceptance suite covers all of them.
            let len = grads[pid].data.len();
            for k in [0, len / 2, len - 1] {
                let orig = model.params().value(pid).data[k];
                let h = 1e-5;
                model.params_mut().value_mut(pid).data[k] = orig + h;
                let up = loss(&model, &batch, &lc);
                model.params_mut().value_mut(pid).data[k] = orig - h;
                let down = loss(&model, &batch, &lc);
                model.params_mut().value_mut(pid).data[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads[pid].data[k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-5);
                assert!(rel < 1e-4, "variant {vi} {}[{k}]: {an} vs {fd}", model.params().name(pid));
            }
        }
        for (group, n) in norms {
            assert!(n > 0.0, "variant {vi}: group {group} receives no gradient");
        }
    }
}

#[test]
fn source_branch_is_live() {
    let on = ModelConfig::stub();
    let off = ModelConfig { use_source_branch: false, ..on.clone() };
    let batch = items(&on, 8, 3);
    let m_on = EditQualityModel::new(on, 11).unwrap();
    let m_off = EditQualityModel::new(off, 11).unwrap();
    let differs = batch
        .iter()
        .any(|it| m_on.predict(&it.features).unwrap() != m_off.predict(&it.features).unwrap());
    assert!(differs, "toggling the source branch changed no prediction");

    // With the branch on, the source image matters; with it off, it does not.
    let mut swapped = batch[0].features.clone();
    swapped.source = batch[1].features.source.clone();
    assert_ne!(m_on.predict(&batch[0].features).unwrap(), m_on.predict(&swapped).unwrap());
    assert_eq!(m_off.predict(&batch[0].features).unwrap(), m_off.predict(&swapped).unwrap());
}

#[test]
fn text_branch_reads_the_prompt() {
    let cfg = ModelConfig::stub();
    let batch = items(&cfg, 4, 5);
    let m = EditQualityModel::new(cfg.clone(), 2).unwrap();
    let no_text = EditQualityModel::new(ModelConfig { use_text_branch: false, ..cfg }, 2).unwrap();
    let mut other = batch[0].features.clone();
    other.tokens = vec![1, 2, 3];
    assert_ne!(m.predict(&batch[0].features).unwrap(), m.predict(&other).unwrap());
    assert_eq!(no_text.predict(&batch[0].features).unwrap(), no_text.predict(&other).unwrap());
}

#[test]
fn checkpoint_file_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    for (vi, cfg) in variants().into_iter().enumerate() {
        let m = EditQualityModel::new(cfg.clone(), 100 + vi as u64).unwrap();
        let path = dir.path().join(format!("m{vi}.json"));
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        for it in items(&cfg, 3, vi as u64) {
            assert_eq!(back.predict(&it.features).unwrap().to_bits(), m.predict(&it.features).unwrap().to_bits());
        }
    }
}

#[test]
fn checkpoint_with_wrong_shapes_is_rejected() {
    let m = EditQualityModel::new(ModelConfig::stub(), 0).unwrap();
    let mut ck = Checkpoint::from_model(&m);
    ck.config.quality_out += 1;
    assert!(ck.into_model().is_err());
    assert!(Checkpoint::from_json("{}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_matches_reference(seed in any::<u64>(), variant in 0usize..8, data_seed in 0u64..1000) {
        let cfg = variants()[variant].clone();
        let m = EditQualityModel::new(cfg.clone(), seed).unwrap();
        for it in items(&cfg, 2, data_seed) {
            let got = m.predict(&it.features).unwrap();
            let want = reference_forward(&m, &it.features);
            prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn prediction_is_deterministic_in_seed(seed in any::<u64>()) {
        let cfg = ModelConfig::stub();
        let a = EditQualityModel::new(cfg.clone(), seed).unwrap();
        let b = EditQualityModel::new(cfg, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
