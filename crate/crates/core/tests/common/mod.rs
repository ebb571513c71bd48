//! Synthetic data roots for integration tests.
#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use zdda::datasets::idx::{write_images, write_labels};
use zdda::datasets::{ImageTensor, LabeledDataset};
use zdda::seed;

pub const SIDE: usize = 28;

/// Gray 28x28 image with a class-dependent bar plus pixel noise. `vertical`
/// selects the family: vertical bars for one, horizontal for the other.
pub fn pattern(class: usize, vertical: bool, rng: &mut impl Rng) -> ImageTensor {
    let mut data = vec![0f32; SIDE * SIDE];
    let pos = 2 + 2 * class + rng.random_range(0..2);
    let extent = rng.random_range(14..24);
    let start = rng.random_range(0..=SIDE - extent);
    for a in start..start + extent {
        for b in pos..pos + 3 {
            let (y, x) = if vertical { (a, b) } else { (b, a) };
            data[y * SIDE + x] = rng.random_range(0.7..1.0);
        }
    }
    for v in &mut data {
        if rng.random::<f32>() < 0.05 {
            *v = rng.random_range(0.0..0.5);
        }
    }
    // quantize to bytes so IDX round trips are exact
    for v in &mut data {
        *v = (*v * 255.0).round() / 255.0;
    }
    ImageTensor::new(1, SIDE, SIDE, data).unwrap()
}

pub fn synthetic_gray(name: &str, classes: usize, per_class: usize, vertical: bool, seed: u64) -> LabeledDataset {
    let mut rng = seed::rng(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..classes * per_class {
        let c = i % classes;
        images.push(pattern(c, vertical, &mut rng));
        labels.push(c);
    }
    LabeledDataset::new(name, classes, images, labels).unwrap()
}

fn write_family(root: &Path, family: &str, vertical: bool, train: usize, test: usize, seed: u64) {
    let dir = root.join(family);
    std::fs::create_dir_all(&dir).unwrap();
    for (split, per_class, s) in [("train", train, seed), ("t10k", test, seed + 1)] {
        let ds = synthetic_gray(family, 10, per_class, vertical, s);
        write_images(&dir.join(format!("{split}-images-idx3-ubyte")), ds.images()).unwrap();
        write_labels(&dir.join(format!("{split}-labels-idx1-ubyte")), ds.labels()).unwrap();
    }
}

/// Writes `mnist` and `fashion` IDX files plus four background PNGs.
pub fn synthetic_root(root: &Path, train_per_class: usize, test_per_class: usize) {
    write_family(root, "mnist", true, train_per_class, test_per_class, 11);
    write_family(root, "fashion", false, train_per_class, test_per_class, 21);
    let bg = root.join("backgrounds");
    std::fs::create_dir_all(&bg).unwrap();
    let mut rng = seed::rng(5);
    for k in 0..4 {
        let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
        let img = image::RgbImage::from_fn(48, 48, |x, y| {
            let mut px = |c: usize| {
                let v = base[c] + 0.3 * ((x as f32 / 48.0) - (y as f32 / 48.0)) * (c as f32 - 1.0)
                    + 0.1 * rng.random::<f32>();
                (v.clamp(0.0, 1.0) * 255.0) as u8
            };
            image::Rgb([px(0), px(1), px(2)])
        });
        img.save(bg.join(format!("bg{k}.png"))).unwrap();
    }
}

/// In-memory miniature task: gray "digits" (vertical bars) as T-R source,
/// colorized "clothes" (horizontal bars) as T-I pairs, and colorized test
/// pairs of the task.
pub struct Miniature {
    pub tr_source: LabeledDataset,
    pub pairs: zdda::datasets::DualDomainPairSet,
    pub test_pairs: zdda::datasets::DualDomainPairSet,
}

pub fn backgrounds(count: usize, seed: u64) -> Vec<ImageTensor> {
    let mut rng = seed::rng(seed);
    (0..count)
        .map(|_| {
            let data = (0..3 * 40 * 40).map(|_| rng.random::<f32>()).collect();
            ImageTensor::new(3, 40, 40, data).unwrap()
        })
        .collect()
}

pub fn miniature(train_per_class: usize, test_per_class: usize) -> Miniature {
    use zdda::datasets::{colorize_dataset, make_pair_set};
    let bg = backgrounds(4, 3);
    let tr_source = synthetic_gray("digits", 10, train_per_class, true, 1);
    let ti_gray = synthetic_gray("clothes", 10, train_per_class, false, 2);
    let ti_col = colorize_dataset(&ti_gray, &bg, 4).unwrap();
    let test_gray = synthetic_gray("digits-test", 10, test_per_class, true, 5);
    let test_col = colorize_dataset(&test_gray, &bg, 6).unwrap();
    Miniature {
        tr_source,
        pairs: make_pair_set(&ti_gray, &ti_col).unwrap(),
        test_pairs: make_pair_set(&test_gray, &test_col).unwrap(),
    }
}
