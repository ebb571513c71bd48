//! The three training steps and target pretraining.

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datasets::{blacken_augment, DualDomainPairSet, ImageTensor, LabeledDataset};
use crate::error::{Result, ZddaError};
use crate::model::loss::{l2_alignment_loss, softmax_cross_entropy};
use crate::model::network::{
    build_branch, build_classifier, BranchState, BranchTag, ClassifierKind, ClassifierState,
    SplitNetworkSpec,
};
use crate::model::train::{
    gather, split_holdout, supervised_loss, train_supervised, CurveRecorder, EpochSampler, TrainHyper,
    TrainLog,
};
use crate::seed;

/// What a step consumed and produced, for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub hyper: TrainHyper,
    /// Input names mapped to dataset names or parameter checksums.
    pub inputs: BTreeMap<String, String>,
    /// Output names mapped to parameter checksums.
    pub outputs: BTreeMap<String, String>,
    pub log: TrainLog,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl StepRecord {
    fn new(step: &str, hyper: &TrainHyper) -> Self {
        Self {
            step: step.into(),
            hyper: hyper.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            log: TrainLog::default(),
            metrics: BTreeMap::new(),
        }
    }

    fn input(mut self, k: &str, v: impl Into<String>) -> Self {
        self.inputs.insert(k.into(), v.into());
        self
    }
}

/// Which side of the pair is trained during alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignSide {
    /// Train `s1`, keep `t` fixed.
    #[default]
    Source,
    /// Train `t` toward a fixed `s1`.
    Target,
}

fn require_frozen(b: &BranchState, what: &str) -> Result<()> {
    if b.frozen {
        Ok(())
    } else {
        Err(ZddaError::ContractViolation(format!(
            "{what} ({}) must be frozen",
            b.tag.as_str()
        )))
    }
}

fn require_trainable(b: &BranchState, what: &str) -> Result<()> {
    if b.frozen {
        Err(ZddaError::ContractViolation(format!(
            "{what} ({}) is frozen",
            b.tag.as_str()
        )))
    } else {
        Ok(())
    }
}

/// Supervised pretraining of the target-modality branch on labeled colored
/// task-irrelevant data. Returns `t` frozen.
pub fn pretrain_target(
    ti_target: &LabeledDataset,
    spec: &SplitNetworkSpec,
    hyper: &TrainHyper,
) -> Result<(BranchState, StepRecord)> {
    if spec.input_channels != 3 {
        return Err(ZddaError::Configuration("target branch takes 3-channel input".into()));
    }
    let mut t = build_branch::<f32>(spec, seed::derive(hyper.seed, "init/t"), BranchTag::T)?;
    let mut head = build_classifier::<f32>(
        ClassifierKind::Source,
        spec.feature_dim,
        ti_target.class_count(),
        seed::derive(hyper.seed, "init/t-head"),
    )?;
    let log = train_supervised(&mut t, &mut head, ti_target, hyper)?;
    let t = t.freeze();
    let mut rec = StepRecord::new("pretrain_t", hyper).input("data", ti_target.name());
    rec.outputs.insert("t".into(), t.checksum());
    rec.log = log;
    Ok((t, rec))
}

fn l2_on_rows(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> Result<f64> {
    Ok(l2_alignment_loss(a, b)?.0 as f64)
}

/// Trains `student` so its features on `student_inputs[i]` match the fixed
/// `teacher` features on `teacher_inputs[i]`.
fn align(
    student: &mut BranchState,
    student_inputs: &[ImageTensor],
    teacher: &BranchState,
    teacher_inputs: &[ImageTensor],
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    hyper.validate()?;
    require_frozen(teacher, "alignment reference")?;
    require_trainable(student, "aligned branch")?;
    if student_inputs.is_empty() {
        return Err(ZddaError::Capacity("alignment needs at least one pair".into()));
    }
    if student.feature_dim() != teacher.feature_dim() {
        return Err(ZddaError::Dimension(format!(
            "feature widths {} and {} differ",
            student.feature_dim(),
            teacher.feature_dim()
        )));
    }
    // the teacher is frozen, so its features are computed once
    let targets = teacher.forward_features_batched(teacher_inputs)?;
    let (pool, monitor) = split_holdout(student_inputs.len(), seed::derive(hyper.seed, "holdout"));
    let mon_inputs = gather(student_inputs, &monitor);
    let mon_targets = targets.select(Axis(0), &monitor);
    let monitor_loss = |s: &BranchState| -> Result<f64> {
        if monitor.is_empty() {
            return Ok(0.0);
        }
        let f = s.forward_features_batched(&mon_inputs)?;
        l2_on_rows(f.view(), mon_targets.view())
    };
    let mut rec = CurveRecorder::new(hyper.monitor_every, monitor_loss(student)?);
    let mut sampler = EpochSampler::new(pool, seed::derive(hyper.seed, "batches"));
    let mut opt = hyper.optimizer::<f32>(1);
    for it in 1..=hyper.iterations {
        let idx = sampler.next_batch(hyper.batch_size);
        let (f, trace) = student.forward_traced(&gather(student_inputs, &idx))?;
        let (loss, grad, _) = l2_alignment_loss(f.view(), targets.select(Axis(0), &idx).view())?;
        let grads = student.backward(trace, grad.view());
        opt.step(&mut [student], &[&grads])?;
        rec.record(it, hyper.iterations, loss as f64, || monitor_loss(student))?;
    }
    Ok(rec.log)
}

/// Step 1: align a source branch to the frozen target branch on
/// task-irrelevant pairs.
pub fn step1_align(
    pairs: &DualDomainPairSet,
    t: &BranchState,
    s1_init: BranchState,
    hyper: &TrainHyper,
) -> Result<(BranchState, StepRecord)> {
    let mut s1 = s1_init;
    s1.tag = BranchTag::S1;
    let rec = StepRecord::new("step1", hyper)
        .input("pairs", pairs.name())
        .input("t", t.checksum())
        .input("s1_init", s1.checksum());
    let log = align(&mut s1, pairs.source_images(), t, pairs.target_images(), hyper)?;
    let mut rec = rec;
    rec.outputs.insert("s1".into(), s1.checksum());
    rec.log = log;
    Ok((s1, rec))
}

/// Step 1 with the roles swapped: `t` is trained toward a fixed `s1`.
/// Returns `(s1, t)` with `t` frozen afterwards.
pub fn step1_align_target(
    pairs: &DualDomainPairSet,
    t_init: BranchState,
    s1: BranchState,
    hyper: &TrainHyper,
) -> Result<(BranchState, BranchState, StepRecord)> {
    let s1 = s1.freeze();
    let mut t = t_init;
    t.frozen = false;
    let rec = StepRecord::new("step1", hyper)
        .input("pairs", pairs.name())
        .input("t_init", t.checksum())
        .input("s1", s1.checksum());
    let log = align(&mut t, pairs.target_images(), &s1, pairs.source_images(), hyper)?;
    let mut rec = rec;
    let mut s1 = s1;
    s1.frozen = false;
    let t = t.freeze();
    rec.outputs.insert("t".into(), t.checksum());
    rec.log = log;
    Ok((s1, t, rec))
}

/// The step-2 source branch. The task-relevant and task-irrelevant roles
/// read the same parameters, so an update through either is seen by both.
#[derive(Debug, Clone)]
pub struct SharedBranch {
    state: BranchState,
}

impl SharedBranch {
    pub fn new(state: BranchState) -> Self {
        Self { state }
    }

    /// Role fed task-relevant labeled source images.
    pub fn task_role(&self) -> &BranchState {
        &self.state
    }

    /// Role fed the source half of task-irrelevant pairs.
    pub fn pair_role(&self) -> &BranchState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut BranchState {
        &mut self.state
    }

    pub fn into_inner(self) -> BranchState {
        self.state
    }
}

/// Step 2: joint training of `s2` (initialized from `s1`) and the source
/// classifier on weighted softmax + L2 losses.
pub fn step2_joint(
    tr_source: &LabeledDataset,
    pairs: &DualDomainPairSet,
    t: &BranchState,
    s1: &BranchState,
    hyper: &TrainHyper,
) -> Result<(BranchState, ClassifierState, StepRecord)> {
    hyper.validate()?;
    require_frozen(t, "target branch")?;
    if tr_source.is_empty() || pairs.is_empty() {
        return Err(ZddaError::Capacity("step 2 needs labeled data and pairs".into()));
    }
    let mut shared = SharedBranch::new(s1.derive(BranchTag::S2));
    let mut head = build_classifier::<f32>(
        ClassifierKind::Source,
        s1.feature_dim(),
        tr_source.class_count(),
        seed::derive(hyper.seed, "init/source-head"),
    )?;
    let mut rec = StepRecord::new("step2", hyper)
        .input("tr_source", tr_source.name())
        .input("pairs", pairs.name())
        .input("t", t.checksum())
        .input("s1", s1.checksum());
    let ws = hyper.loss_weights.softmax as f32;
    let wl = hyper.loss_weights.l2 as f32;

    let targets = t.forward_features_batched(pairs.target_images())?;
    let (tr_pool, tr_mon) = split_holdout(tr_source.len(), seed::derive(hyper.seed, "holdout/tr"));
    let (ti_pool, ti_mon) = split_holdout(pairs.len(), seed::derive(hyper.seed, "holdout/ti"));
    let mon_tr = gather(tr_source.images(), &tr_mon);
    let mon_tr_labels: Vec<usize> = tr_mon.iter().map(|&i| tr_source.labels()[i]).collect();
    let mon_ti = gather(pairs.source_images(), &ti_mon);
    let mon_targets = targets.select(Axis(0), &ti_mon);
    let terms = |b: &BranchState, h: &ClassifierState| -> Result<(f64, f64)> {
        let sm = supervised_loss(b, h, &mon_tr, &mon_tr_labels)?;
        let l2 = if ti_mon.is_empty() {
            0.0
        } else {
            l2_on_rows(b.forward_features_batched(&mon_ti)?.view(), mon_targets.view())?
        };
        Ok((sm, l2))
    };
    let (sm0, l20) = terms(shared.task_role(), &head)?;
    rec.metrics.insert("initial_softmax".into(), sm0);
    rec.metrics.insert("initial_l2".into(), l20);
    let weighted = (hyper.loss_weights.softmax * sm0, hyper.loss_weights.l2 * l20);
    if weighted.0 > 0.0 && weighted.1 > 0.0 {
        let ratio = (weighted.0 / weighted.1).log10().abs();
        rec.metrics.insert("initial_weighted_log10_ratio".into(), ratio);
        if ratio > 2.0 {
            log::warn!(
                "step 2 weighted losses differ by {ratio:.1} orders of magnitude ({:.3e} vs {:.3e})",
                weighted.0,
                weighted.1
            );
        }
    }
    let composite = |(sm, l2): (f64, f64)| hyper.loss_weights.softmax * sm + hyper.loss_weights.l2 * l2;
    let mut curve = CurveRecorder::new(hyper.monitor_every, composite((sm0, l20)));
    let mut tr_sampler = EpochSampler::new(tr_pool, seed::derive(hyper.seed, "batches/tr"));
    let mut ti_sampler = EpochSampler::new(ti_pool, seed::derive(hyper.seed, "batches/ti"));
    let mut opt = hyper.optimizer::<f32>(2);
    for it in 1..=hyper.iterations {
        let tr_idx = tr_sampler.next_batch(hyper.batch_size);
        let ti_idx = ti_sampler.next_batch(hyper.batch_size);
        let mut bgrads = shared.state_mut().params.zeros_like();
        let mut hgrads = head.params.zeros_like();
        let mut total = 0.0f64;
        if ws != 0.0 {
            let labels: Vec<usize> = tr_idx.iter().map(|&i| tr_source.labels()[i]).collect();
            let (f, btrace) = shared.task_role().forward_traced(&gather(tr_source.images(), &tr_idx))?;
            let (logits, htrace) = head.forward_traced(f.view())?;
            let (loss, dlogits) = softmax_cross_entropy(logits.view(), &labels)?;
            let (hg, df) = head.backward(htrace, (dlogits * ws).view());
            hgrads = hg;
            bgrads.add_assign(&shared.task_role().backward(btrace, df.view()));
            total += hyper.loss_weights.softmax * loss as f64;
        }
        if wl != 0.0 {
            let (f, btrace) = shared.pair_role().forward_traced(&gather(pairs.source_images(), &ti_idx))?;
            let (loss, grad, _) = l2_alignment_loss(f.view(), targets.select(Axis(0), &ti_idx).view())?;
            bgrads.add_assign(&shared.pair_role().backward(btrace, (grad * wl).view()));
            total += hyper.loss_weights.l2 * loss as f64;
        }
        opt.step(&mut [shared.state_mut(), &mut head], &[&bgrads, &hgrads])?;
        curve.record(it, hyper.iterations, total, || {
            terms(shared.task_role(), &head).map(composite)
        })?;
    }
    let s2 = shared.into_inner();
    let (sm1, l21) = terms(&s2, &head)?;
    rec.metrics.insert("final_softmax".into(), sm1);
    rec.metrics.insert("final_l2".into(), l21);
    rec.outputs.insert("s2".into(), s2.checksum());
    rec.outputs.insert("source_classifier".into(), head.checksum());
    rec.log = curve.log;
    Ok((s2, head, rec))
}

/// Blackening applied to the two step-3 streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionAugment {
    /// Percentage of augmented images replaced by black images.
    pub p_train: f64,
    pub copies: usize,
}

impl Default for FusionAugment {
    fn default() -> Self {
        Self {
            p_train: 20.0,
            copies: 10,
        }
    }
}

/// Features of a frozen branch over a blacken-augmented dataset, computed
/// from the clean originals plus one all-zero image.
fn augmented_features(
    branch: &BranchState,
    clean: &LabeledDataset,
    augmented: &LabeledDataset,
) -> Result<Array2<f32>> {
    let base = branch.forward_features_batched(clean.images())?;
    let (c, h, w) = clean.image_shape().unwrap_or((1, 1, 1));
    let zero = branch.forward_features(&[ImageTensor::zeros(c, h, w)])?;
    let n = clean.len();
    let mut out = Array2::zeros((augmented.len(), branch.feature_dim()));
    for (i, im) in augmented.images().iter().enumerate() {
        let src = if im.is_all_zero() {
            zero.row(0)
        } else {
            base.row(i % n)
        };
        out.row_mut(i).assign(&src);
    }
    Ok(out)
}

/// Trains `s3` and the joint classifier on index-aligned inputs
/// `(stream_a[i] -> s3, stream_b[i] -> s4)` with `s4` fixed.
pub fn train_fusion(
    s3: &mut BranchState,
    s4: &BranchState,
    joint: &mut ClassifierState,
    stream_a: &LabeledDataset,
    s4_features: &Array2<f32>,
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    hyper.validate()?;
    require_frozen(s4, "simulated target branch")?;
    require_trainable(s3, "fusion source branch")?;
    if stream_a.is_empty() {
        return Err(ZddaError::Capacity("fusion training set is empty".into()));
    }
    if s4_features.nrows() != stream_a.len() {
        return Err(ZddaError::Consistency("fusion streams differ in length".into()));
    }
    let fd = s3.feature_dim();
    if joint.input_dim != fd + s4.feature_dim() {
        return Err(ZddaError::Dimension(format!(
            "joint classifier takes {} features, branches give {}",
            joint.input_dim,
            fd + s4.feature_dim()
        )));
    }
    let (pool, monitor) = split_holdout(stream_a.len(), seed::derive(hyper.seed, "holdout"));
    let mon_a = gather(stream_a.images(), &monitor);
    let mon_b = s4_features.select(Axis(0), &monitor);
    let mon_labels: Vec<usize> = monitor.iter().map(|&i| stream_a.labels()[i]).collect();
    let monitor_loss = |s3: &BranchState, joint: &ClassifierState| -> Result<f64> {
        if monitor.is_empty() {
            return Ok(0.0);
        }
        let fa = s3.forward_features_batched(&mon_a)?;
        let logits = joint.forward_logits(concatenate![Axis(1), fa, mon_b].view())?;
        Ok(softmax_cross_entropy(logits.view(), &mon_labels)?.0 as f64)
    };
    let mut curve = CurveRecorder::new(hyper.monitor_every, monitor_loss(s3, joint)?);
    let mut sampler = EpochSampler::new(pool, seed::derive(hyper.seed, "batches"));
    let mut opt = hyper.optimizer::<f32>(2);
    for it in 1..=hyper.iterations {
        let idx = sampler.next_batch(hyper.batch_size);
        let labels: Vec<usize> = idx.iter().map(|&i| stream_a.labels()[i]).collect();
        let (fa, trace) = s3.forward_traced(&gather(stream_a.images(), &idx))?;
        let fb = s4_features.select(Axis(0), &idx);
        let (logits, jtrace) = joint.forward_traced(concatenate![Axis(1), fa, fb].view())?;
        let (loss, dlogits) = softmax_cross_entropy(logits.view(), &labels)?;
        let (jgrads, dcat) = joint.backward(jtrace, dlogits.view());
        let sgrads = s3.backward(trace, dcat.slice(s![.., ..fd]));
        opt.step(&mut [s3, joint], &[&sgrads, &jgrads])?;
        curve.record(it, hyper.iterations, loss as f64, || monitor_loss(s3, joint))?;
    }
    Ok(curve.log)
}

/// Outputs of step 3.
#[derive(Debug, Clone)]
pub struct FusionStates {
    pub s3: BranchState,
    pub s4: BranchState,
    pub joint: ClassifierState,
}

/// Step 3: fusion training with `s3 <- s2`, `s4 <- s1` (frozen) and a fresh
/// joint classifier, each branch fed its own blackened copy of `tr_source`.
pub fn step3_fusion(
    tr_source: &LabeledDataset,
    s2: &BranchState,
    s1: &BranchState,
    augment: FusionAugment,
    hyper: &TrainHyper,
) -> Result<(FusionStates, StepRecord)> {
    let mut s3 = s2.derive(BranchTag::S3);
    let s4 = s1.derive(BranchTag::S4).freeze();
    let mut joint = build_classifier::<f32>(
        ClassifierKind::JOINT,
        s3.feature_dim() + s4.feature_dim(),
        tr_source.class_count(),
        seed::derive(hyper.seed, "init/joint"),
    )?;
    let stream_a = blacken_augment(
        tr_source,
        augment.p_train,
        augment.copies,
        seed::derive(hyper.seed, "augment/a"),
    )?;
    let stream_b = blacken_augment(
        tr_source,
        augment.p_train,
        augment.copies,
        seed::derive(hyper.seed, "augment/b"),
    )?;
    let fb = augmented_features(&s4, tr_source, &stream_b)?;
    let mut rec = StepRecord::new("step3", hyper)
        .input("tr_source", tr_source.name())
        .input("s2", s2.checksum())
        .input("s1", s1.checksum());
    rec.metrics.insert("p_train".into(), augment.p_train);
    rec.metrics.insert("copies".into(), augment.copies as f64);
    rec.log = train_fusion(&mut s3, &s4, &mut joint, &stream_a, &fb, hyper)?;
    rec.outputs.insert("s3".into(), s3.checksum());
    rec.outputs.insert("s4".into(), s4.checksum());
    rec.outputs.insert("joint_classifier".into(), joint.checksum());
    Ok((FusionStates { s3, s4, joint }, rec))
}
