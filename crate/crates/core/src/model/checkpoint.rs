//! Single-file parameter archives.
//!
//! ```text
//! b"ZDDACKPT" | u32 LE version | u64 LE header length | JSON header | LE values
//! ```
//!
//! Values follow the header's parameter order, each array row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{BranchState, BranchTag, ClassifierKind, ClassifierState, SplitNetworkSpec};
use super::params::{ParamSet, Real};
use crate::error::{Result, ZddaError};

const MAGIC: &[u8; 8] = b"ZDDACKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Body {
    Branch {
        spec: SplitNetworkSpec,
        tag: BranchTag,
        lineage: Vec<String>,
    },
    Classifier {
        classifier: ClassifierKind,
        input_dim: usize,
        class_count: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dtype: String,
    frozen: bool,
    #[serde(flatten)]
    body: Body,
    arrays: Vec<ArrayMeta>,
}

fn write_archive<T: Real>(path: &Path, header: &Header, params: &ParamSet<T>) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(20 + json.len() + params.total_len() * T::BYTES);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in params.iter() {
        for &v in &p.data {
            v.write_le(&mut buf);
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ZddaError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| ZddaError::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| ZddaError::io(&tmp, e))?;
    f.sync_all().map_err(|e| ZddaError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ZddaError::io(path, e))
}

fn read_archive<T: Real>(path: &Path) -> Result<(Header, ParamSet<T>)> {
    let bytes = fs::read(path).map_err(|e| ZddaError::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(ZddaError::format(path, "not a checkpoint archive"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(ZddaError::format(path, format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes
        .get(20..20 + hlen)
        .ok_or_else(|| ZddaError::format(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.dtype != T::DTYPE {
        return Err(ZddaError::format(
            path,
            format!("stored as {}, requested {}", header.dtype, T::DTYPE),
        ));
    }
    let mut payload = &bytes[20 + hlen..];
    let mut params = ParamSet::new();
    for a in &header.arrays {
        let len: usize = a.shape.iter().product();
        let need = len * T::BYTES;
        if payload.len() < need {
            return Err(ZddaError::format(path, format!("truncated array {}", a.name)));
        }
        let data = payload[..need].chunks_exact(T::BYTES).map(T::read_le).collect();
        payload = &payload[need..];
        params.push(a.name.clone(), a.shape.clone(), data);
    }
    if !payload.is_empty() {
        return Err(ZddaError::format(path, "trailing bytes after payload"));
    }
    Ok((header, params))
}

fn metas<T: Real>(params: &ParamSet<T>) -> Vec<ArrayMeta> {
    params
        .iter()
        .map(|p| ArrayMeta {
            name: p.name.clone(),
            shape: p.shape.clone(),
        })
        .collect()
}

pub fn save_branch<T: Real>(path: &Path, branch: &BranchState<T>) -> Result<()> {
    let header = Header {
        dtype: T::DTYPE.into(),
        frozen: branch.frozen,
        body: Body::Branch {
            spec: branch.spec.clone(),
            tag: branch.tag,
            lineage: branch.lineage.clone(),
        },
        arrays: metas(&branch.params),
    };
    write_archive(path, &header, &branch.params)
}

pub fn load_branch<T: Real>(path: &Path) -> Result<BranchState<T>> {
    let (header, params) = read_archive::<T>(path)?;
    match header.body {
        Body::Branch { spec, tag, lineage } => {
            let fresh = super::network::build_branch::<T>(&spec, 0, tag)?;
            fresh.params.check_layout(&params, &path.display().to_string())?;
            Ok(BranchState {
                spec,
                params,
                frozen: header.frozen,
                tag,
                lineage,
            })
        }
        Body::Classifier { .. } => Err(ZddaError::format(path, "holds a classifier, not a branch")),
    }
}

pub fn save_classifier<T: Real>(path: &Path, classifier: &ClassifierState<T>) -> Result<()> {
    let header = Header {
        dtype: T::DTYPE.into(),
        frozen: classifier.frozen,
        body: Body::Classifier {
            classifier: classifier.kind,
            input_dim: classifier.input_dim,
            class_count: classifier.class_count,
        },
        arrays: metas(&classifier.params),
    };
    write_archive(path, &header, &classifier.params)
}

pub fn load_classifier<T: Real>(path: &Path) -> Result<ClassifierState<T>> {
    let (header, params) = read_archive::<T>(path)?;
    match header.body {
        Body::Classifier {
            classifier,
            input_dim,
            class_count,
        } => {
            let fresh = super::network::build_classifier::<T>(classifier, input_dim, class_count, 0)?;
            fresh.params.check_layout(&params, &path.display().to_string())?;
            Ok(ClassifierState {
                kind: classifier,
                input_dim,
                class_count,
                params,
                frozen: header.frozen,
            })
        }
        Body::Branch { .. } => Err(ZddaError::format(path, "holds a branch, not a classifier")),
    }
}
