use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ZddaError};

/// A channel-major (CHW) image with values in `[0, 1]`.
///
/// Pixel storage is reference counted: cloning an image or a dataset shares
/// the buffer, and mutation goes through copy-on-write.
#[derive(Debug, Clone)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Arc<Vec<f32>>,
}

impl PartialEq for ImageTensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && (Arc::ptr_eq(&self.data, &other.data) || self.data == other.data)
    }
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(ZddaError::Dimension(format!(
                "images carry 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(ZddaError::Dimension(format!(
                "buffer of {} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ZddaError::Consistency(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data: Arc::new(data),
        })
    }

    /// An all-zero ("black") image.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: Arc::new(vec![0.0; channels * height * width]),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Mutable pixel access; clones the buffer if it is shared.
    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Whether two images share one pixel buffer.
    pub fn shares_buffer(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
    }

    /// Channel mean of a color image; gray images are returned unchanged.
    pub fn to_gray(&self) -> ImageTensor {
        if self.channels == 1 {
            return self.clone();
        }
        let plane = self.height * self.width;
        let mut out = vec![0.0f32; plane];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(&self.data[c * plane..(c + 1) * plane]) {
                *o += *v;
            }
        }
        for o in &mut out {
            *o = (*o / self.channels as f32).clamp(0.0, 1.0);
        }
        ImageTensor {
            channels: 1,
            height: self.height,
            width: self.width,
            data: Arc::new(out),
        }
    }

    /// Quantize to bytes (`round(v * 255)`), channel-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_bytes(channels: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }
}

/// Images with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    class_count: usize,
    images: Vec<ImageTensor>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        class_count: usize,
        images: Vec<ImageTensor>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let name = name.into();
        if images.len() != labels.len() {
            return Err(ZddaError::Consistency(format!(
                "{name}: {} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(ZddaError::Consistency(format!(
                "{name}: label {l} outside 0..{class_count}"
            )));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().find(|im| im.shape() != first.shape()) {
                return Err(ZddaError::Dimension(format!(
                    "{name}: mixed image shapes {:?} and {:?}",
                    first.shape(),
                    bad.shape()
                )));
            }
        }
        Ok(Self {
            name,
            class_count,
            images,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Shape shared by every image, `None` when empty.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(ImageTensor::shape)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            class_count: self.class_count,
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Every image converted to one channel.
    pub fn to_gray(&self) -> LabeledDataset {
        LabeledDataset {
            name: format!("{}-gray", self.name),
            class_count: self.class_count,
            images: self.images.iter().map(ImageTensor::to_gray).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// SHA-256 over class count, labels and quantized pixels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.class_count as u64).to_le_bytes());
        for (im, &l) in self.images.iter().zip(&self.labels) {
            let (c, y, x) = im.shape();
            for d in [c, y, x, l] {
                h.update((d as u64).to_le_bytes());
            }
            h.update(im.to_bytes());
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn into_parts(self) -> (String, usize, Vec<ImageTensor>, Vec<usize>) {
        (self.name, self.class_count, self.images, self.labels)
    }
}

/// Index-aligned gray/color pairs depicting identical content.
///
/// The pairs come from a dataset unrelated to the task of interest; labels,
/// when present, are only used to pretrain the target branch.
#[derive(Debug, Clone, PartialEq)]
pub struct DualDomainPairSet {
    name: String,
    source_images: Vec<ImageTensor>,
    target_images: Vec<ImageTensor>,
    labels: Option<Vec<usize>>,
    class_count: Option<usize>,
}

impl DualDomainPairSet {
    pub fn new(
        name: impl Into<String>,
        source_images: Vec<ImageTensor>,
        target_images: Vec<ImageTensor>,
        labels: Option<(Vec<usize>, usize)>,
    ) -> Result<Self> {
        let name = name.into();
        if source_images.len() != target_images.len() {
            return Err(ZddaError::Consistency(format!(
                "{name}: {} source images but {} target images",
                source_images.len(),
                target_images.len()
            )));
        }
        if let Some((labels, _)) = &labels {
            if labels.len() != source_images.len() {
                return Err(ZddaError::Consistency(format!(
                    "{name}: {} labels for {} pairs",
                    labels.len(),
                    source_images.len()
                )));
            }
        }
        if source_images.iter().any(|im| im.channels() != 1) {
            return Err(ZddaError::Dimension(format!(
                "{name}: source side must be gray"
            )));
        }
        if target_images.iter().any(|im| im.channels() != 3) {
            return Err(ZddaError::Dimension(format!(
                "{name}: target side must be color"
            )));
        }
        let (labels, class_count) = match labels {
            Some((l, k)) => (Some(l), Some(k)),
            None => (None, None),
        };
        Ok(Self {
            name,
            source_images,
            target_images,
            labels,
            class_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.source_images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_images.is_empty()
    }

    pub fn source_images(&self) -> &[ImageTensor] {
        &self.source_images
    }

    pub fn target_images(&self) -> &[ImageTensor] {
        &self.target_images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> Option<usize> {
        self.class_count
    }

    /// Pairs at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> DualDomainPairSet {
        DualDomainPairSet {
            name: self.name.clone(),
            source_images: indices.iter().map(|&i| self.source_images[i].clone()).collect(),
            target_images: indices.iter().map(|&i| self.target_images[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            class_count: self.class_count,
        }
    }

    /// The source side as a labeled dataset. Fails without labels.
    pub fn source_dataset(&self) -> Result<LabeledDataset> {
        self.side(&self.source_images, "gray")
    }

    /// The target side as a labeled dataset. Fails without labels.
    pub fn target_dataset(&self) -> Result<LabeledDataset> {
        self.side(&self.target_images, "color")
    }

    fn side(&self, images: &[ImageTensor], suffix: &str) -> Result<LabeledDataset> {
        match (&self.labels, self.class_count) {
            (Some(l), Some(k)) => LabeledDataset::new(
                format!("{}/{suffix}", self.name),
                k,
                images.to_vec(),
                l.clone(),
            ),
            _ => Err(ZddaError::Consistency(format!(
                "{}: pair set carries no labels",
                self.name
            ))),
        }
    }
}

/// Corruption model applied at test time (and, for black images, in
/// fusion training augmentation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Replace the whole image with zeros.
    BlackImage,
    /// Zero one axis-aligned rectangle of random position and size.
    BlackRectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    /// Fraction of images corrupted, in `[0, 1]`.
    pub probability: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(model: NoiseModel, probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(ZddaError::Configuration(format!(
                "noise probability {probability} outside [0, 1]"
            )));
        }
        Ok(Self {
            model,
            probability,
            seed,
        })
    }
}
