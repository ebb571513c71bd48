//! Pairing, augmentation, corruption and subsampling. Every function here is
//! a pure function of its inputs and seed.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{DualDomainPairSet, ImageTensor, LabeledDataset, NoiseModel, NoiseSpec};
use crate::error::{Result, ZddaError};
use crate::seed;

/// Round-half-up of a non-negative expected count.
pub fn rounded_count(expected: f64) -> usize {
    (expected + 0.5).floor().max(0.0) as usize
}

/// Pair a gray dataset with its colorized counterpart.
pub fn make_pair_set(gray: &LabeledDataset, colored: &LabeledDataset) -> Result<DualDomainPairSet> {
    if gray.len() != colored.len() {
        return Err(ZddaError::Consistency(format!(
            "{} has {} items, {} has {}",
            gray.name(),
            gray.len(),
            colored.name(),
            colored.len()
        )));
    }
    if let Some(i) = (0..gray.len()).find(|&i| gray.labels()[i] != colored.labels()[i]) {
        return Err(ZddaError::Consistency(format!(
            "label mismatch at index {i}: {} vs {}",
            gray.labels()[i],
            colored.labels()[i]
        )));
    }
    DualDomainPairSet::new(
        gray.name(),
        gray.images().to_vec(),
        colored.images().to_vec(),
        Some((gray.labels().to_vec(), gray.class_count())),
    )
}

/// Concatenate `copies` copies of `ds` and blacken a seeded `p_train` percent
/// of the result. Labels are untouched.
pub fn blacken_augment(
    ds: &LabeledDataset,
    p_train: f64,
    copies: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(0.0..=100.0).contains(&p_train) {
        return Err(ZddaError::Configuration(format!(
            "p_train {p_train} outside [0, 100]"
        )));
    }
    if copies == 0 {
        return Err(ZddaError::Configuration("copies must be at least 1".into()));
    }
    let n = ds.len();
    let size = n * copies;
    let mut images: Vec<ImageTensor> = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..copies {
        images.extend_from_slice(ds.images());
        labels.extend_from_slice(ds.labels());
    }
    if let Some((c, h, w)) = ds.image_shape() {
        let count = rounded_count(p_train / 100.0 * size as f64).min(size);
        let black = ImageTensor::zeros(c, h, w);
        let mut rng = seed::rng(seed);
        for i in index::sample(&mut rng, size, count) {
            images[i] = black.clone();
        }
    }
    LabeledDataset::new(
        format!("{}-x{copies}-p{p_train}", ds.name()),
        ds.class_count(),
        images,
        labels,
    )
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub y: usize,
    pub x: usize,
    pub height: usize,
    pub width: usize,
}

/// Which images a noise spec corrupts, and how.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionPlan {
    /// Sorted indices of corrupted images.
    pub indices: Vec<usize>,
    /// One rectangle per index for the rectangle model, empty otherwise.
    pub rects: Vec<Rect>,
}

fn side_bounds(side: usize) -> (usize, usize) {
    let lo = ((side as f64) * 0.25).ceil().max(1.0) as usize;
    let hi = ((side as f64) * 0.75).floor() as usize;
    (lo.min(side), hi.max(lo).min(side))
}

/// Draw the corruption plan for `n` images of size `h x w`.
pub fn plan_corruption(n: usize, h: usize, w: usize, noise: &NoiseSpec) -> CorruptionPlan {
    let count = rounded_count(noise.probability * n as f64).min(n);
    let mut rng = seed::rng(noise.seed);
    let mut indices = index::sample(&mut rng, n, count).into_vec();
    indices.sort_unstable();
    let rects = match noise.model {
        NoiseModel::BlackImage => Vec::new(),
        NoiseModel::BlackRectangle => {
            let (hlo, hhi) = side_bounds(h);
            let (wlo, whi) = side_bounds(w);
            indices
                .iter()
                .map(|_| {
                    let height = rng.random_range(hlo..=hhi);
                    let width = rng.random_range(wlo..=whi);
                    let y = rng.random_range(0..=h - height);
                    let x = rng.random_range(0..=w - width);
                    Rect {
                        y,
                        x,
                        height,
                        width,
                    }
                })
                .collect()
        }
    };
    CorruptionPlan { indices, rects }
}

/// Zero `rect` in every channel of `image`.
pub fn black_out(image: &ImageTensor, rect: Rect) -> ImageTensor {
    let mut out = image.clone();
    let (c, h, w) = image.shape();
    let data = out.data_mut();
    for ch in 0..c {
        for y in rect.y..rect.y + rect.height {
            let row = (ch * h + y) * w;
            data[row + rect.x..row + rect.x + rect.width].fill(0.0);
        }
    }
    out
}

/// Apply a corruption plan to a dataset.
pub fn apply_corruption(ds: &LabeledDataset, plan: &CorruptionPlan) -> Result<LabeledDataset> {
    let Some((c, h, w)) = ds.image_shape() else {
        return Ok(ds.clone());
    };
    let mut images = ds.images().to_vec();
    if plan.rects.is_empty() {
        let black = ImageTensor::zeros(c, h, w);
        for &i in &plan.indices {
            images[i] = black.clone();
        }
    } else {
        for (&i, &r) in plan.indices.iter().zip(&plan.rects) {
            images[i] = black_out(&images[i], r);
        }
    }
    LabeledDataset::new(ds.name(), ds.class_count(), images, ds.labels().to_vec())
}

/// Corrupt a seeded fraction of a test set.
pub fn corrupt_for_test(ds: &LabeledDataset, noise: &NoiseSpec) -> Result<LabeledDataset> {
    let (_, h, w) = ds.image_shape().unwrap_or((1, 0, 0));
    apply_corruption(ds, &plan_corruption(ds.len(), h, w, noise))
}

/// Exactly `per_class` seeded items from every class, ordered by class and
/// then by draw order.
pub fn subsample(ds: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut chosen = Vec::with_capacity(per_class * ds.class_count());
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class {
            return Err(ZddaError::Capacity(format!(
                "{}: class {class} has {} items, {per_class} requested",
                ds.name(),
                members.len()
            )));
        }
        chosen.extend(
            index::sample(&mut rng, members.len(), per_class)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    Ok(ds.select(&chosen))
}

/// Same as [`subsample`] for a labeled pair set.
pub fn subsample_pairs(
    pairs: &DualDomainPairSet,
    per_class: usize,
    seed: u64,
) -> Result<DualDomainPairSet> {
    let labels = pairs
        .labels()
        .ok_or_else(|| ZddaError::Consistency("subsampling needs labeled pairs".into()))?;
    let k = pairs.class_count().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut chosen = Vec::new();
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class {
            return Err(ZddaError::Capacity(format!(
                "{}: class {class} has {} pairs, {per_class} requested",
                pairs.name(),
                members.len()
            )));
        }
        chosen.extend(
            index::sample(&mut rng, members.len(), per_class)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    Ok(pairs.select(&chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_ds(n: usize, classes: usize, c: usize, side: usize, seed_: u64) -> LabeledDataset {
        let mut rng = seed::rng(seed_);
        let images = (0..n)
            .map(|_| {
                ImageTensor::new(
                    c,
                    side,
                    side,
                    (0..c * side * side)
                        .map(|_| rng.random_range(0.01f32..1.0))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        LabeledDataset::new("r", classes, images, (0..n).map(|i| i % classes).collect()).unwrap()
    }

    #[test]
    fn blacken_counts_are_exact() {
        let ds = random_ds(100, 10, 1, 4, 1);
        let out = blacken_augment(&ds, 20.0, 10, 3).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(out.images().iter().filter(|im| im.is_all_zero()).count(), 200);
        for i in 0..1000 {
            assert_eq!(out.labels()[i], ds.labels()[i % 100]);
        }
    }

    #[test]
    fn blacken_extremes() {
        let ds = random_ds(7, 3, 1, 4, 2);
        let none = blacken_augment(&ds, 0.0, 2, 0).unwrap();
        assert_eq!(&none.images()[..7], ds.images());
        assert_eq!(&none.images()[7..], ds.images());
        let all = blacken_augment(&ds, 100.0, 3, 0).unwrap();
        assert!(all.images().iter().all(ImageTensor::is_all_zero));
        assert_eq!(all.labels().len(), 21);
        assert!(blacken_augment(&ds, 101.0, 1, 0).is_err());
        assert!(blacken_augment(&ds, 10.0, 0, 0).is_err());
    }

    #[test]
    fn corrupt_probability_extremes() {
        let ds = random_ds(20, 2, 3, 6, 3);
        let spec = NoiseSpec::new(NoiseModel::BlackImage, 0.0, 9).unwrap();
        assert_eq!(corrupt_for_test(&ds, &spec).unwrap(), ds);
        let spec = NoiseSpec::new(NoiseModel::BlackImage, 1.0, 9).unwrap();
        assert!(corrupt_for_test(&ds, &spec)
            .unwrap()
            .images()
            .iter()
            .all(ImageTensor::is_all_zero));
    }

    #[test]
    fn rectangle_sizes_respect_bounds() {
        let plan = plan_corruption(
            500,
            28,
            28,
            &NoiseSpec::new(NoiseModel::BlackRectangle, 1.0, 4).unwrap(),
        );
        for r in &plan.rects {
            assert!((7..=21).contains(&r.height) && (7..=21).contains(&r.width));
            assert!(r.y + r.height <= 28 && r.x + r.width <= 28);
        }
    }

    #[test]
    fn subsample_selects_per_class() {
        let ds = random_ds(60, 10, 1, 2, 5);
        let s = subsample(&ds, 4, 1).unwrap();
        assert_eq!(s.len(), 40);
        assert_eq!(s.class_histogram(), vec![4; 10]);
        assert_eq!(s, subsample(&ds, 4, 1).unwrap());
        assert!(matches!(subsample(&ds, 7, 1), Err(ZddaError::Capacity(_))));
        // class-major ordering
        assert!(s.labels().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pair_set_checks_lineage() {
        let g = random_ds(4, 2, 1, 3, 6);
        let c = random_ds(4, 2, 3, 3, 7);
        let pairs = make_pair_set(&g, &c).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs.labels().unwrap(), g.labels());
        let shifted = LabeledDataset::new("s", 2, c.images().to_vec(), vec![1, 0, 1, 0]).unwrap();
        assert!(matches!(
            make_pair_set(&g, &shifted),
            Err(ZddaError::Consistency(_))
        ));
        let short = c.select(&[0, 1]);
        assert!(matches!(make_pair_set(&g, &short), Err(ZddaError::Consistency(_))));
        let empty = g.select(&[]);
        assert!(make_pair_set(&empty, &c.select(&[])).unwrap().is_empty());
    }
}
