//! Training-step contracts on a synthetic miniature task.

mod common;

use common::{miniature, Miniature};
use zdda::datasets::{corrupt_for_test, LabeledDataset, NoiseModel, NoiseSpec};
use zdda::eval::{evaluate, evaluate_dual, noise_grid_eval, NaiveFusion, DEFAULT_LEVELS};
use zdda::model::network::{build_branch, build_classifier, BranchTag, ClassifierKind, SplitNetworkSpec};
use zdda::model::train::{train_supervised, TrainHyper};
use zdda::model::BranchState;
use zdda::pipeline::{
    assemble_fusion, assemble_zdda2, pretrain_target, step1_align, step2_joint, step3_fusion, FusionAugment,
    FusionMode, FusionStates, Provenance, ZddaArtifacts,
};
use zdda::{seed, ZddaError};

fn hyper(bs: usize, lr: f64, it: usize, seed: u64) -> TrainHyper {
    let mut h = TrainHyper::new(bs, lr, it, seed);
    h.monitor_every = 0;
    h
}

fn pretrained_t(m: &Miniature) -> BranchState {
    let ti_target = m.pairs.target_dataset().unwrap();
    pretrain_target(&ti_target, &SplitNetworkSpec::lenet(3), &hyper(16, 0.01, 20, 1)).unwrap().0
}

fn s1_init(seed: u64) -> BranchState {
    build_branch::<f32>(&SplitNetworkSpec::lenet(1), seed, BranchTag::S1).unwrap()
}

#[test]
fn step1_leaves_t_untouched_and_rejects_unfrozen_t() {
    let m = miniature(6, 2);
    let t = pretrained_t(&m);
    assert!(t.frozen);
    let before = t.checksum();
    let (s1, rec) = step1_align(&m.pairs, &t, s1_init(2), &hyper(8, 1e-4, 10, 3)).unwrap();
    assert_eq!(t.checksum(), before);
    assert_eq!(rec.step, "step1");
    assert_ne!(s1.checksum(), s1_init(2).checksum());

    let mut loose = t.clone();
    loose.frozen = false;
    let err = step1_align(&m.pairs, &loose, s1_init(2), &hyper(8, 1e-4, 1, 3)).unwrap_err();
    assert!(matches!(err, ZddaError::ContractViolation(_)));
    let empty = m.pairs.select(&[]);
    let err = step1_align(&empty, &t, s1_init(2), &hyper(8, 1e-4, 1, 3)).unwrap_err();
    assert!(matches!(err, ZddaError::Capacity(_)));
}

#[test]
fn step1_zero_iterations_and_degenerate_target() {
    let m = miniature(6, 2);
    let t = pretrained_t(&m);
    let (s1, _) = step1_align(&m.pairs, &t, s1_init(4), &hyper(8, 1e-4, 0, 3)).unwrap();
    assert!(s1.params.bitwise_eq(&s1_init(4).params));

    let mut zero_t = t.clone();
    for p in zero_t.params.iter_mut() {
        p.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let (_, rec) = step1_align(&m.pairs, &zero_t, s1_init(4), &hyper(8, 1e-4, 40, 3)).unwrap();
    assert!(
        rec.log.final_monitor_loss < rec.log.initial_monitor_loss,
        "{} -> {}",
        rec.log.initial_monitor_loss,
        rec.log.final_monitor_loss
    );
}

#[test]
fn lineage_is_bitwise_at_step_starts() {
    let m = miniature(6, 2);
    let t = pretrained_t(&m);
    let (s1, _) = step1_align(&m.pairs, &t, s1_init(5), &hyper(8, 1e-4, 5, 3)).unwrap();
    let (s2, head, rec2) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &hyper(8, 1e-5, 0, 6)).unwrap();
    assert!(s2.params.bitwise_eq(&s1.params));
    assert_eq!(s2.tag, BranchTag::S2);
    assert!(s2.lineage.last().unwrap().contains("s1->s2"));
    assert_eq!(rec2.inputs["s1"], s1.checksum());
    assert_eq!(head.class_count, 10);

    let (f, _) = step3_fusion(&m.tr_source, &s2, &s1, FusionAugment { p_train: 0.0, copies: 10 }, &hyper(8, 1e-3, 0, 7)).unwrap();
    assert!(f.s3.params.bitwise_eq(&s2.params));
    assert!(f.s4.params.bitwise_eq(&s1.params));
    assert!(f.s4.frozen && !f.s3.frozen);
    let fresh = build_classifier::<f32>(ClassifierKind::JOINT, 1000, 10, seed::derive(7, "init/joint")).unwrap();
    assert_eq!(f.joint.checksum(), fresh.checksum());
}

#[test]
fn frozen_branches_survive_steps_two_and_three() {
    let m = miniature(6, 2);
    let t = pretrained_t(&m);
    let t_sum = t.checksum();
    let (s1, _) = step1_align(&m.pairs, &t, s1_init(5), &hyper(8, 1e-4, 5, 3)).unwrap();
    let (s2, _, _) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &hyper(8, 1e-5, 5, 6)).unwrap();
    assert_eq!(t.checksum(), t_sum);
    assert_ne!(s2.checksum(), s1.checksum());
    let (f, _) = step3_fusion(&m.tr_source, &s2, &s1, FusionAugment::default(), &hyper(8, 1e-3, 5, 7)).unwrap();
    assert_eq!(f.s4.checksum(), s1.checksum());
    assert_ne!(f.s3.checksum(), s2.checksum());
}

#[test]
fn step2_without_softmax_leaves_the_head_at_init() {
    let m = miniature(6, 2);
    let t = pretrained_t(&m);
    let (s1, _) = step1_align(&m.pairs, &t, s1_init(5), &hyper(8, 1e-4, 3, 3)).unwrap();
    let mut h = hyper(8, 1e-4, 6, 8);
    h.loss_weights.softmax = 0.0;
    let (s2, head, _) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &h).unwrap();
    let fresh = build_classifier::<f32>(ClassifierKind::Source, 500, 10, seed::derive(8, "init/source-head")).unwrap();
    assert_eq!(head.checksum(), fresh.checksum());
    // the same update as step 1 on the pair stream with step 2's sampler
    assert_ne!(s2.checksum(), s1.checksum());
}

#[test]
fn step2_without_l2_matches_supervised_training() {
    let m = miniature(30, 10);
    let t = pretrained_t(&m);
    let s1 = s1_init(5);
    let mut h = hyper(16, 0.01, 120, 9);
    h.loss_weights.l2 = 0.0;
    h.loss_weights.softmax = 1.0;
    let (s2, head, _) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &h).unwrap();
    let test_src = m.test_pairs.source_dataset().unwrap();
    let (c_src, _) = assemble_zdda2(&s2, &t, &head).unwrap();
    let joint_acc = evaluate(&c_src, &test_src).unwrap().overall_accuracy;

    let mut b = s1.derive(BranchTag::Reference);
    let mut c = build_classifier::<f32>(ClassifierKind::Source, 500, 10, 10).unwrap();
    train_supervised(&mut b, &mut c, &m.tr_source, &hyper(16, 0.01, 120, 9)).unwrap();
    let (c_ref, _) = assemble_zdda2(&b, &t, &c).unwrap();
    let ref_acc = evaluate(&c_ref, &test_src).unwrap().overall_accuracy;
    assert!(joint_acc >= ref_acc - 0.02, "{joint_acc} vs {ref_acc}");
}

fn tiny_artifacts(m: &Miniature, iters: usize) -> ZddaArtifacts {
    let ti_target = m.pairs.target_dataset().unwrap();
    let (t, r0) = pretrain_target(&ti_target, &SplitNetworkSpec::lenet(3), &hyper(16, 0.01, iters, 1)).unwrap();
    let (s1, r1) = step1_align(&m.pairs, &t, s1_init(2), &hyper(16, 1e-4, iters, 2)).unwrap();
    let (s2, head, r2) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &hyper(16, 1e-5, iters, 3)).unwrap();
    let (f, r3) = step3_fusion(&m.tr_source, &s2, &s1, FusionAugment::default(), &hyper(16, 1e-2, iters, 4)).unwrap();
    ZddaArtifacts {
        t,
        s1,
        s2,
        source_classifier: head,
        fusion: Some(f),
        provenance: Provenance {
            steps: vec![r0, r1, r2, r3],
            ..Default::default()
        },
    }
}

#[test]
fn three_step_run_is_bitwise_deterministic_and_round_trips() {
    let m = miniature(6, 2);
    let a = tiny_artifacts(&m, 50);
    let b = tiny_artifacts(&m, 50);
    assert_eq!(a.checksums(), b.checksums());
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    let back = ZddaArtifacts::load(dir.path()).unwrap();
    assert_eq!(back.checksums(), a.checksums());
    assert_eq!(back.provenance, a.provenance);
    assert!(back.t.frozen && back.fusion.as_ref().unwrap().s4.frozen);
}

#[test]
fn assemblies_wire_and_reject_as_documented() {
    let m = miniature(6, 4);
    let a = tiny_artifacts(&m, 5);
    let (c_src, c_tgt) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier).unwrap();
    assert!(std::ptr::eq(c_src.head, c_tgt.head));
    let test_src = m.test_pairs.source_dataset().unwrap();
    assert!(matches!(evaluate(&c_tgt, &test_src), Err(ZddaError::Dimension(_))));

    assert!(matches!(assemble_fusion(&a, FusionMode::Train), Err(ZddaError::Configuration(_))));
    let mut no_fusion = a.clone();
    no_fusion.fusion = None;
    assert!(matches!(assemble_fusion(&no_fusion, FusionMode::TestDual), Err(ZddaError::Configuration(_))));

    let wide = build_classifier::<f32>(ClassifierKind::Source, 7, 10, 0).unwrap();
    assert!(matches!(assemble_zdda2(&a.s2, &a.t, &wide), Err(ZddaError::Dimension(_))));

    // source-only fusion never looks at the target stream
    let solo = assemble_fusion(&a, FusionMode::TestSourceOnly).unwrap();
    let test_tgt = m.test_pairs.target_dataset().unwrap();
    let clean = evaluate_dual(&solo, &test_src, &test_tgt).unwrap();
    let noisy_tgt = corrupt_for_test(&test_tgt, &NoiseSpec::new(NoiseModel::BlackImage, 1.0, 3).unwrap()).unwrap();
    assert_eq!(evaluate_dual(&solo, &test_src, &noisy_tgt).unwrap(), clean);
}

fn corrupted(ds: &LabeledDataset, model: NoiseModel, p: f64, seed: u64) -> LabeledDataset {
    corrupt_for_test(ds, &NoiseSpec::new(model, p / 100.0, seed).unwrap()).unwrap()
}

#[test]
fn grid_cells_match_direct_evaluation() {
    let m = miniature(6, 6);
    let a = tiny_artifacts(&m, 10);
    let (c_src, c_tgt) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier).unwrap();
    let dual = assemble_fusion(&a, FusionMode::TestDual).unwrap();
    let (src, tgt) = (m.test_pairs.source_dataset().unwrap(), m.test_pairs.target_dataset().unwrap());
    for model in [NoiseModel::BlackImage, NoiseModel::BlackRectangle] {
        let g = noise_grid_eval(&dual, &c_src, &c_tgt, &m.test_pairs, &DEFAULT_LEVELS, &DEFAULT_LEVELS, model, 17).unwrap();
        g.check_complete().unwrap();
        let naive = NaiveFusion {
            source: &c_src,
            target: &c_tgt,
        };
        // clean cell, then a few corrupted cells recomputed from scratch
        assert_eq!(g.accuracy["zdda3"][0][0], evaluate_dual(&dual, &src, &tgt).unwrap().overall_accuracy);
        assert_eq!(g.accuracy["naive"][0][0], evaluate_dual(&naive, &src, &tgt).unwrap().overall_accuracy);
        for (i, j) in [(0, 3), (2, 0), (4, 5)] {
            let cell = seed::cell(17, i, j);
            let s = corrupted(&src, model, DEFAULT_LEVELS[i], seed::derive(cell, "source"));
            let t = corrupted(&tgt, model, DEFAULT_LEVELS[j], seed::derive(cell, "target"));
            let z = evaluate_dual(&dual, &s, &t).unwrap().overall_accuracy;
            let n = evaluate_dual(&naive, &s, &t).unwrap().overall_accuracy;
            assert_eq!(g.accuracy["zdda3"][i][j], z, "zdda3 cell ({i},{j})");
            assert_eq!(g.accuracy["naive"][i][j], n, "naive cell ({i},{j})");
            assert_eq!(g.diff[i][j], z - n);
        }
    }
}

#[test]
fn fusion_states_need_a_frozen_s4() {
    let m = miniature(4, 2);
    let a = tiny_artifacts(&m, 2);
    let FusionStates { mut s3, s4, mut joint } = a.fusion.clone().unwrap();
    let mut loose = s4.clone();
    loose.frozen = false;
    let feats = loose.forward_features_batched(m.tr_source.images()).unwrap();
    let err = zdda::pipeline::train_fusion(&mut s3, &loose, &mut joint, &m.tr_source, &feats, &hyper(4, 1e-3, 1, 0)).unwrap_err();
    assert!(matches!(err, ZddaError::ContractViolation(_)));
}
