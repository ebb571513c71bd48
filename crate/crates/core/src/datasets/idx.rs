//! IDX reader/writer (the MNIST family's container format).
//!
//! Images: magic `0x00000803` with dims `[n, h, w]` (gray) or `0x00000804`
//! with dims `[n, c, h, w]` (channel-major color). Labels: `0x00000801`
//! with dims `[n]`. All unsigned bytes, big-endian header. Gzip-compressed
//! files are detected by their magic bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::types::{ImageTensor, LabeledDataset};
use crate::error::{Result, ZddaError};

pub const IMAGES_GRAY_MAGIC: u32 = 0x0000_0803;
pub const IMAGES_COLOR_MAGIC: u32 = 0x0000_0804;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| ZddaError::io(path, e))?;
    let mut raw = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut raw)
        .map_err(|e| ZddaError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| ZddaError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| ZddaError::format(path, "truncated header"))
}

/// Raw decoded image file: `(channels, height, width, pixels)` per item.
pub fn read_images(path: &Path) -> Result<Vec<ImageTensor>> {
    let bytes = read_all(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    let (channels, header) = match magic {
        IMAGES_GRAY_MAGIC => (1usize, 16usize),
        IMAGES_COLOR_MAGIC => (be_u32(&bytes, 8, path)? as usize, 20usize),
        other => {
            return Err(ZddaError::format(
                path,
                format!("bad image magic {other:#010x}"),
            ))
        }
    };
    let n = be_u32(&bytes, 4, path)? as usize;
    let (h, w) = if magic == IMAGES_GRAY_MAGIC {
        (be_u32(&bytes, 8, path)? as usize, be_u32(&bytes, 12, path)? as usize)
    } else {
        (be_u32(&bytes, 12, path)? as usize, be_u32(&bytes, 16, path)? as usize)
    };
    let item = channels * h * w;
    let payload = &bytes[header.min(bytes.len())..];
    if payload.len() != n * item {
        return Err(ZddaError::format(
            path,
            format!(
                "expected {} payload bytes for {n} images of {channels}x{h}x{w}, found {}",
                n * item,
                payload.len()
            ),
        ));
    }
    payload
        .chunks_exact(item.max(1))
        .take(n)
        .map(|chunk| ImageTensor::from_bytes(channels, h, w, chunk))
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_all(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(ZddaError::format(
            path,
            format!("bad label magic {magic:#010x}"),
        ));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(ZddaError::format(
            path,
            format!("header announces {n} labels, payload holds {}", payload.len()),
        ));
    }
    Ok(payload.to_vec())
}

/// Load an image/label IDX pair. Pixel bytes are scaled by 1/255; the
/// class count is one more than the largest label.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(ZddaError::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            images_path.display(),
            images.len(),
            labels_path.display(),
            labels.len()
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::new(name, class_count, images, labels)
}

/// Write images; gray sets use the 3-dim layout, color sets the 4-dim one.
pub fn write_images(path: &Path, images: &[ImageTensor]) -> Result<()> {
    let (c, h, w) = images.first().map_or((1, 0, 0), ImageTensor::shape);
    let mut out = BufWriter::new(File::create(path).map_err(|e| ZddaError::io(path, e))?);
    let mut header = Vec::with_capacity(20);
    if c == 1 {
        header.extend(IMAGES_GRAY_MAGIC.to_be_bytes());
        header.extend((images.len() as u32).to_be_bytes());
    } else {
        header.extend(IMAGES_COLOR_MAGIC.to_be_bytes());
        header.extend((images.len() as u32).to_be_bytes());
        header.extend((c as u32).to_be_bytes());
    }
    header.extend((h as u32).to_be_bytes());
    header.extend((w as u32).to_be_bytes());
    out.write_all(&header).map_err(|e| ZddaError::io(path, e))?;
    for im in images {
        out.write_all(&im.to_bytes())
            .map_err(|e| ZddaError::io(path, e))?;
    }
    out.flush().map_err(|e| ZddaError::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend(LABELS_MAGIC.to_be_bytes());
    bytes.extend((labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l)
            .map_err(|_| ZddaError::Consistency(format!("label {l} does not fit in a byte")))?;
        bytes.push(b);
    }
    std::fs::write(path, bytes).map_err(|e| ZddaError::io(path, e))
}
