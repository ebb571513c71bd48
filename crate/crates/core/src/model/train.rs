//! Mini-batch training loop for one branch plus a classifier head.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::softmax_cross_entropy;
use super::network::{BranchState, ClassifierState};
use super::optim::MomentumSgd;
use super::params::Real;
use crate::datasets::{ImageTensor, LabeledDataset};
use crate::error::{Result, ZddaError};
use crate::seed;

/// Weights of the two loss terms in the joint step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub softmax: f64,
    pub l2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            softmax: 1e3,
            l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// L2 penalty coefficient added to every gradient (`g + wd * w`).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub weight_decay: f64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub seed: u64,
    /// Monitoring cadence in iterations (0 disables intermediate points).
    #[serde(default = "default_monitor_every")]
    pub monitor_every: usize,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn default_momentum() -> f64 {
    0.9
}

fn default_monitor_every() -> usize {
    500
}

impl TrainHyper {
    pub fn new(batch_size: usize, learning_rate: f64, iterations: usize, seed: u64) -> Self {
        Self {
            batch_size,
            learning_rate,
            iterations,
            momentum: default_momentum(),
            weight_decay: 0.0,
            loss_weights: LossWeights::default(),
            seed,
            monitor_every: default_monitor_every(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ZddaError::Configuration("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ZddaError::Configuration(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ZddaError::Configuration(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ZddaError::Configuration(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub(crate) fn optimizer<T: Real>(&self, slots: usize) -> MomentumSgd<T> {
        let mut opt = MomentumSgd::new(T::from_f64(self.learning_rate), T::from_f64(self.momentum), slots);
        opt.weight_decay = T::from_f64(self.weight_decay);
        opt
    }
}

/// Cycles through a pool of indices in seeded-shuffled epochs.
pub struct EpochSampler {
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(pool: Vec<usize>, seed: u64) -> Self {
        Self {
            pool,
            order: Vec::new(),
            pos: 0,
            rng: seed::rng(seed),
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.clone_from(&self.pool);
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// Seeded split of `0..n` into a training pool and a monitoring set of
/// `min(512, n / 10)` items (empty below 10 items).
pub fn split_holdout(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let m = (n / 10).min(512);
    let mut monitor = idx.split_off(n - m);
    monitor.sort_unstable();
    idx.sort_unstable();
    (idx, monitor)
}

pub(crate) fn gather(images: &[ImageTensor], idx: &[usize]) -> Vec<ImageTensor> {
    idx.iter().map(|&i| images[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    /// Mean training loss since the previous point.
    pub train_loss: f64,
    pub monitor_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_monitor_loss: f64,
    pub final_monitor_loss: f64,
    pub curve: Vec<CurvePoint>,
}

impl TrainLog {
    pub fn improved(&self) -> bool {
        self.final_monitor_loss <= self.initial_monitor_loss
    }
}

/// Records monitoring points at a fixed cadence.
pub(crate) struct CurveRecorder {
    every: usize,
    sum: f64,
    count: usize,
    pub log: TrainLog,
}

impl CurveRecorder {
    pub fn new(every: usize, initial: f64) -> Self {
        Self {
            every,
            sum: 0.0,
            count: 0,
            log: TrainLog {
                initial_monitor_loss: initial,
                final_monitor_loss: initial,
                curve: Vec::new(),
            },
        }
    }

    /// Adds one iteration's loss; calls `monitor` when a point is due.
    pub fn record(
        &mut self,
        iteration: usize,
        total: usize,
        loss: f64,
        monitor: impl FnOnce() -> Result<f64>,
    ) -> Result<()> {
        self.sum += loss;
        self.count += 1;
        let due = iteration == total || (self.every > 0 && iteration % self.every == 0);
        if due {
            let m = monitor()?;
            self.log.curve.push(CurvePoint {
                iteration,
                train_loss: self.sum / self.count as f64,
                monitor_loss: m,
            });
            self.log.final_monitor_loss = m;
            self.sum = 0.0;
            self.count = 0;
        }
        Ok(())
    }
}

/// Softmax loss of `classifier . branch` on a fixed set, chunked.
pub fn supervised_loss<T: Real>(
    branch: &BranchState<T>,
    classifier: &ClassifierState<T>,
    images: &[ImageTensor],
    labels: &[usize],
) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (imgs, labs) in images.chunks(256).zip(labels.chunks(256)) {
        let f = branch.forward_features(imgs)?;
        let logits = classifier.forward_logits(f.view())?;
        let (l, _) = softmax_cross_entropy(logits.view(), labs)?;
        total += l.to_f64() * imgs.len() as f64;
    }
    Ok(total / images.len() as f64)
}

/// Supervised training of a branch and its classifier head.
///
/// A seeded monitoring subset (see [`split_holdout`]) is held out of the
/// training pool; its loss is tracked in the returned log.
pub fn train_supervised<T: Real>(
    branch: &mut BranchState<T>,
    classifier: &mut ClassifierState<T>,
    ds: &LabeledDataset,
    hyper: &TrainHyper,
) -> Result<TrainLog> {
    hyper.validate()?;
    if ds.is_empty() {
        return Err(ZddaError::Capacity(format!("{} is empty", ds.name())));
    }
    if ds.class_count() != classifier.class_count {
        return Err(ZddaError::Consistency(format!(
            "{} has {} classes, classifier has {}",
            ds.name(),
            ds.class_count(),
            classifier.class_count
        )));
    }
    if branch.frozen || classifier.frozen {
        return Err(ZddaError::ContractViolation("cannot train a frozen state".into()));
    }
    let (pool, monitor) = split_holdout(ds.len(), seed::derive(hyper.seed, "holdout"));
    let mon_images = gather(ds.images(), &monitor);
    let mon_labels: Vec<usize> = monitor.iter().map(|&i| ds.labels()[i]).collect();
    let initial = supervised_loss(branch, classifier, &mon_images, &mon_labels)?;
    let mut rec = CurveRecorder::new(hyper.monitor_every, initial);
    let mut sampler = EpochSampler::new(pool, seed::derive(hyper.seed, "batches"));
    let mut opt = hyper.optimizer::<T>(2);
    for it in 1..=hyper.iterations {
        let idx = sampler.next_batch(hyper.batch_size);
        let imgs = gather(ds.images(), &idx);
        let labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let (feat, btrace) = branch.forward_traced(&imgs)?;
        let (logits, ctrace) = classifier.forward_traced(feat.view())?;
        let (loss, dlogits) = softmax_cross_entropy(logits.view(), &labels)?;
        let (cgrads, dfeat) = classifier.backward(ctrace, dlogits.view());
        let bgrads = branch.backward(btrace, dfeat.view());
        opt.step(&mut [branch, classifier], &[&bgrads, &cgrads])?;
        rec.record(it, hyper.iterations, loss.to_f64(), || {
            supervised_loss(branch, classifier, &mon_images, &mon_labels)
        })?;
        log::debug!("supervised it {it} loss {:.5}", loss.to_f64());
    }
    Ok(rec.log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_cycles_whole_epochs() {
        let mut s = EpochSampler::new((0..5).collect(), 3);
        let mut first: Vec<usize> = s.next_batch(5);
        first.sort_unstable();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.next_batch(7).len(), 7);
        let mut a = EpochSampler::new((0..50).collect(), 9);
        let mut b = EpochSampler::new((0..50).collect(), 9);
        assert_eq!(a.next_batch(40), b.next_batch(40));
    }

    #[test]
    fn holdout_is_disjoint_and_sized() {
        let (pool, mon) = split_holdout(100, 1);
        assert_eq!(mon.len(), 10);
        assert_eq!(pool.len(), 90);
        assert!(mon.iter().all(|m| !pool.contains(m)));
        assert_eq!(split_holdout(9, 1).1.len(), 0);
        assert_eq!(split_holdout(100_000, 1).1.len(), 512);
    }

    #[test]
    fn zero_weight_decay_is_not_serialized() {
        let mut h = TrainHyper::new(32, 1e-4, 10, 1);
        assert!(!serde_json::to_string(&h).unwrap().contains("weight_decay"));
        h.weight_decay = 5e-4;
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("weight_decay"));
        let back: TrainHyper = serde_json::from_str(&s).unwrap();
        assert_eq!(back.weight_decay, 5e-4);
        h.weight_decay = -1.0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn hyper_validation() {
        assert!(TrainHyper::new(0, 0.1, 1, 0).validate().is_err());
        assert!(TrainHyper::new(1, 0.0, 1, 0).validate().is_err());
        assert!(TrainHyper::new(32, 0.01, 0, 0).validate().is_ok());
    }
}
