//! Colored ("-M") dataset synthesis: every gray image is blended with a
//! random crop of a color photograph by per-channel absolute difference.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::{ImageTensor, LabeledDataset};
use crate::error::{Result, ZddaError};
use crate::seed;

/// Identifier of the blend recorded in synthesized-dataset manifests.
pub const BLEND_ABS_DIFF: &str = "abs_diff_v1";

/// `out[c][y][x] = |patch[c][y][x] - gray[y][x]|`
pub fn colorize(gray: &ImageTensor, patch: &ImageTensor) -> Result<ImageTensor> {
    if gray.channels() != 1 || patch.channels() != 3 {
        return Err(ZddaError::Dimension(format!(
            "colorize needs a 1-channel image and a 3-channel patch, got {} and {}",
            gray.channels(),
            patch.channels()
        )));
    }
    if (gray.height(), gray.width()) != (patch.height(), patch.width()) {
        return Err(ZddaError::Dimension(format!(
            "image is {}x{}, patch is {}x{}",
            gray.height(),
            gray.width(),
            patch.height(),
            patch.width()
        )));
    }
    let plane = gray.height() * gray.width();
    let g = gray.data();
    let out: Vec<f32> = patch
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - g[i % plane]).abs())
        .collect();
    ImageTensor::new(3, gray.height(), gray.width(), out)
}

/// Where a synthesized image's patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropDraw {
    pub background: usize,
    pub y: usize,
    pub x: usize,
}

/// Cut an `h x w` window out of a color image.
pub fn crop(image: &ImageTensor, y: usize, x: usize, h: usize, w: usize) -> Result<ImageTensor> {
    if y + h > image.height() || x + w > image.width() {
        return Err(ZddaError::Dimension(format!(
            "crop {h}x{w} at ({y}, {x}) exceeds {}x{} image",
            image.height(),
            image.width()
        )));
    }
    let mut out = Vec::with_capacity(image.channels() * h * w);
    let src = image.data();
    for c in 0..image.channels() {
        for row in y..y + h {
            let start = (c * image.height() + row) * image.width() + x;
            out.extend_from_slice(&src[start..start + w]);
        }
    }
    ImageTensor::new(image.channels(), h, w, out)
}

/// Colorize every image of a gray dataset, recording each crop draw.
pub fn colorize_dataset_with_draws(
    ds: &LabeledDataset,
    backgrounds: &[ImageTensor],
    seed: u64,
) -> Result<(LabeledDataset, Vec<CropDraw>)> {
    let Some((c, h, w)) = ds.image_shape() else {
        return Ok((
            LabeledDataset::new(format!("{}-m", ds.name()), ds.class_count(), vec![], vec![])?,
            vec![],
        ));
    };
    if c != 1 {
        return Err(ZddaError::Dimension(format!(
            "{} is not a gray dataset",
            ds.name()
        )));
    }
    if backgrounds.is_empty() {
        return Err(ZddaError::Capacity("empty background corpus".into()));
    }
    for (i, bg) in backgrounds.iter().enumerate() {
        if bg.channels() != 3 {
            return Err(ZddaError::Dimension(format!("background {i} is not color")));
        }
        if bg.height() < h || bg.width() < w {
            return Err(ZddaError::Dimension(format!(
                "background {i} is {}x{}, smaller than the {h}x{w} crop",
                bg.height(),
                bg.width()
            )));
        }
    }
    let mut rng = seed::rng(seed);
    let mut images = Vec::with_capacity(ds.len());
    let mut draws = Vec::with_capacity(ds.len());
    for gray in ds.images() {
        let background = rng.random_range(0..backgrounds.len());
        let bg = &backgrounds[background];
        let y = rng.random_range(0..=bg.height() - h);
        let x = rng.random_range(0..=bg.width() - w);
        let patch = crop(bg, y, x, h, w)?;
        images.push(colorize(gray, &patch)?);
        draws.push(CropDraw { background, y, x });
    }
    let out = LabeledDataset::new(
        format!("{}-m", ds.name()),
        ds.class_count(),
        images,
        ds.labels().to_vec(),
    )?;
    Ok((out, draws))
}

/// Colorize every image of a gray dataset; deterministic in `seed`.
pub fn colorize_dataset(
    ds: &LabeledDataset,
    backgrounds: &[ImageTensor],
    seed: u64,
) -> Result<LabeledDataset> {
    colorize_dataset_with_draws(ds, backgrounds, seed).map(|(d, _)| d)
}

/// How the background corpus is shared between training and test synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSplit {
    /// Alternate files (sorted by name) between the train and test halves.
    #[default]
    Disjoint,
    /// Both halves use every file.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusPart {
    Train,
    Test,
}

/// Color photographs from a directory, in file-name order.
#[derive(Debug, Clone)]
pub struct BackgroundCorpus {
    pub root: PathBuf,
    pub names: Vec<String>,
    pub images: Vec<ImageTensor>,
    /// SHA-256 over file names and contents.
    pub hash: String,
}

impl BackgroundCorpus {
    pub fn load(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| ZddaError::io(dir, e))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| {
                        matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg")
                    })
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(ZddaError::Resolution(format!(
                "no PNG/JPEG images under {}",
                dir.display()
            )));
        }
        let mut hasher = Sha256::new();
        let mut names = Vec::new();
        let mut images = Vec::new();
        for f in &files {
            let bytes = std::fs::read(f).map_err(|e| ZddaError::io(f, e))?;
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            hasher.update(name.as_bytes());
            hasher.update(&bytes);
            let rgb = image::load_from_memory(&bytes)?.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let mut chw = vec![0f32; 3 * h * w];
            for (x, y, px) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    chw[(c * h + y as usize) * w + x as usize] = px[c] as f32 / 255.0;
                }
            }
            images.push(ImageTensor::new(3, h, w, chw)?);
            names.push(name);
        }
        Ok(Self {
            root: dir.to_path_buf(),
            names,
            images,
            hash: hex::encode(hasher.finalize()),
        })
    }

    /// Backgrounds assigned to one part of the corpus.
    pub fn part(&self, split: CorpusSplit, part: CorpusPart) -> Vec<ImageTensor> {
        match split {
            CorpusSplit::Shared => self.images.clone(),
            CorpusSplit::Disjoint if self.images.len() < 2 => self.images.clone(),
            CorpusSplit::Disjoint => {
                let parity = match part {
                    CorpusPart::Train => 0,
                    CorpusPart::Test => 1,
                };
                self.images
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % 2 == parity)
                    .map(|(_, im)| im.clone())
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_image(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> ImageTensor {
        ImageTensor::new(c, h, w, (0..c * h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn zero_gray_returns_patch() {
        let mut rng = seed::rng(1);
        let patch = random_image(&mut rng, 3, 4, 4);
        assert_eq!(colorize(&ImageTensor::zeros(1, 4, 4), &patch).unwrap(), patch);
    }

    #[test]
    fn gray_equal_to_patch_channels_gives_black() {
        let mut rng = seed::rng(2);
        let gray = random_image(&mut rng, 1, 4, 4);
        let mut rep = Vec::new();
        for _ in 0..3 {
            rep.extend_from_slice(gray.data());
        }
        let patch = ImageTensor::new(3, 4, 4, rep).unwrap();
        assert!(colorize(&gray, &patch).unwrap().is_all_zero());
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let err = colorize(&ImageTensor::zeros(1, 4, 4), &ImageTensor::zeros(3, 4, 5));
        assert!(matches!(err, Err(ZddaError::Dimension(_))));
        let err = colorize(&ImageTensor::zeros(3, 4, 4), &ImageTensor::zeros(3, 4, 4));
        assert!(matches!(err, Err(ZddaError::Dimension(_))));
    }

    #[test]
    fn single_black_image_becomes_its_crop() {
        let mut rng = seed::rng(3);
        let bg = random_image(&mut rng, 3, 9, 11);
        let ds = LabeledDataset::new("z", 1, vec![ImageTensor::zeros(1, 4, 4)], vec![0]).unwrap();
        let (out, draws) = colorize_dataset_with_draws(&ds, &[bg.clone()], 5).unwrap();
        let d = draws[0];
        assert_eq!(out.images()[0], crop(&bg, d.y, d.x, 4, 4).unwrap());
    }

    #[test]
    fn small_background_is_rejected() {
        let ds = LabeledDataset::new("z", 1, vec![ImageTensor::zeros(1, 4, 4)], vec![0]).unwrap();
        let err = colorize_dataset(&ds, &[ImageTensor::zeros(3, 3, 8)], 0);
        assert!(matches!(err, Err(ZddaError::Dimension(_))));
    }

    #[test]
    fn disjoint_split_partitions_corpus() {
        let corpus = BackgroundCorpus {
            root: PathBuf::new(),
            names: vec!["a".into(), "b".into(), "c".into()],
            images: (0..3)
                .map(|i| ImageTensor::new(3, 1, 1, vec![i as f32 / 4.0; 3]).unwrap())
                .collect(),
            hash: String::new(),
        };
        assert_eq!(corpus.part(CorpusSplit::Disjoint, CorpusPart::Train).len(), 2);
        assert_eq!(corpus.part(CorpusSplit::Disjoint, CorpusPart::Test).len(), 1);
        assert_eq!(corpus.part(CorpusSplit::Shared, CorpusPart::Test).len(), 3);
    }
}
