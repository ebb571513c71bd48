//! Mean cross-label cosine similarity under a word-embedding table.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Result, ZddaError};

/// Word vectors normalized to unit length at load time.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

fn normalized(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
    }
    v
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Builds a table from raw vectors; each is normalized.
    pub fn from_vectors(entries: impl IntoIterator<Item = (String, Vec<f32>)>) -> Result<Self> {
        let mut t = Self::default();
        for (w, v) in entries {
            t.insert(w, v)?;
        }
        Ok(t)
    }

    fn insert(&mut self, word: String, v: Vec<f32>) -> Result<()> {
        if self.dim == 0 {
            self.dim = v.len();
        } else if v.len() != self.dim {
            return Err(ZddaError::Dimension(format!(
                "vector for {word:?} has {} components, table has {}",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(word, normalized(v));
        Ok(())
    }

    /// Loads a table, picking the format from the extension: `.bin` is the
    /// binary word2vec layout, anything else is `word v1 ... vd` text.
    /// With `only`, words outside the set are skipped.
    pub fn load(path: &Path, only: Option<&HashSet<String>>) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "bin") {
            Self::load_binary(path, only)
        } else {
            Self::load_text(path, only)
        }
    }

    pub fn load_text(path: &Path, only: Option<&HashSet<String>>) -> Result<Self> {
        let f = File::open(path).map_err(|e| ZddaError::io(path, e))?;
        let mut t = Self::default();
        for (ln, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| ZddaError::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            // optional "count dim" header line
            if ln == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if only.is_some_and(|o| !o.contains(word)) {
                continue;
            }
            let v = rest
                .iter()
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| ZddaError::format(path, format!("line {}: {e}", ln + 1)))?;
            t.insert(word.to_string(), v)?;
        }
        Ok(t)
    }

    pub fn load_binary(path: &Path, only: Option<&HashSet<String>>) -> Result<Self> {
        let f = File::open(path).map_err(|e| ZddaError::io(path, e))?;
        let mut r = BufReader::with_capacity(1 << 20, f);
        let mut header = String::new();
        r.read_line(&mut header).map_err(|e| ZddaError::io(path, e))?;
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(count)), Some(Ok(dim))) = (it.next(), it.next()) else {
            return Err(ZddaError::format(path, "missing `count dim` header"));
        };
        let mut t = Self {
            dim,
            vectors: HashMap::new(),
        };
        let mut word = Vec::new();
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            word.clear();
            loop {
                let mut b = [0u8; 1];
                r.read_exact(&mut b).map_err(|e| ZddaError::io(path, e))?;
                match b[0] {
                    b' ' => break,
                    b'\n' if word.is_empty() => {}
                    c => word.push(c),
                }
            }
            r.read_exact(&mut buf).map_err(|e| ZddaError::io(path, e))?;
            let w = String::from_utf8_lossy(&word).into_owned();
            if only.is_some_and(|o| !o.contains(&w)) {
                continue;
            }
            let v = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            t.insert(w, v)?;
        }
        Ok(t)
    }

    /// Unit vector for a label: the normalized mean of its words.
    fn label_vector(&self, label: &str, missing: &mut Vec<String>) -> Option<Vec<f64>> {
        let words: Vec<&str> = label.split([' ', '_']).filter(|w| !w.is_empty()).collect();
        let mut acc = vec![0f64; self.dim];
        let mut ok = !words.is_empty();
        for w in &words {
            match self.get(w).or_else(|| self.get(&w.to_lowercase())) {
                Some(v) => acc.iter_mut().zip(v).for_each(|(a, &x)| *a += x as f64),
                None => {
                    missing.push(w.to_string());
                    ok = false;
                }
            }
        }
        if !ok {
            return None;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(acc.into_iter().map(|x| if norm > 0.0 { x / norm } else { 0.0 }).collect())
    }
}

/// Words needed to embed the given labels.
pub fn label_words<'a>(labels: impl IntoIterator<Item = &'a str>) -> HashSet<String> {
    labels
        .into_iter()
        .flat_map(|l| l.split([' ', '_']).filter(|w| !w.is_empty()))
        .flat_map(|w| [w.to_string(), w.to_lowercase()])
        .collect()
}

/// Mean cosine similarity over all `(a, b)` pairs, one label from each list.
pub fn semantic_similarity(labels_a: &[String], labels_b: &[String], emb: &EmbeddingTable) -> Result<f64> {
    if labels_a.is_empty() || labels_b.is_empty() {
        return Err(ZddaError::Capacity("similarity needs non-empty label lists".into()));
    }
    let mut missing = Vec::new();
    let va: Vec<_> = labels_a.iter().map(|l| emb.label_vector(l, &mut missing)).collect();
    let vb: Vec<_> = labels_b.iter().map(|l| emb.label_vector(l, &mut missing)).collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(ZddaError::Vocabulary { missing });
    }
    let mut cosines: Vec<f64> = Vec::with_capacity(va.len() * vb.len());
    for a in va.iter().flatten() {
        for b in vb.iter().flatten() {
            cosines.push(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0));
        }
    }
    // fixed summation order makes the result symmetric in its arguments
    cosines.sort_by(f64::total_cmp);
    Ok(cosines.iter().sum::<f64>() / cosines.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_vectors([
            ("cat".to_string(), vec![3.0, 4.0, 0.0]),
            ("dog".to_string(), vec![4.0, 3.0, 0.0]),
            ("room".to_string(), vec![0.0, 0.0, 2.0]),
            ("dining".to_string(), vec![0.0, 1.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn identity_and_orthogonal() {
        let t = table();
        let s = |a: &[&str], b: &[&str]| {
            let a: Vec<String> = a.iter().map(|s| s.to_string()).collect();
            let b: Vec<String> = b.iter().map(|s| s.to_string()).collect();
            semantic_similarity(&a, &b, &t)
        };
        assert!((s(&["cat"], &["cat"]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s(&["cat"], &["room"]).unwrap(), 0.0);
        assert!((s(&["cat"], &["dog"]).unwrap() - 0.96).abs() < 1e-6);
        let multi = s(&["dining room"], &["room"]).unwrap();
        assert!(multi > 0.9 && multi < 1.0);
        match s(&["cat", "zebra"], &["yak"]) {
            Err(ZddaError::Vocabulary { missing }) => assert_eq!(missing, vec!["yak", "zebra"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_and_binary_formats_agree() {
        let dir = tempfile::tempdir().unwrap();
        let txt = dir.path().join("v.txt");
        std::fs::write(&txt, "2 3\ncat 3 4 0\ndog 4 3 0\n").unwrap();
        let bin = dir.path().join("v.bin");
        let mut bytes = b"2 3\n".to_vec();
        for (w, v) in [("cat", [3f32, 4.0, 0.0]), ("dog", [4.0, 3.0, 0.0])] {
            bytes.extend_from_slice(w.as_bytes());
            bytes.push(b' ');
            v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
            bytes.push(b'\n');
        }
        std::fs::write(&bin, bytes).unwrap();
        let a = EmbeddingTable::load(&txt, None).unwrap();
        let b = EmbeddingTable::load(&bin, None).unwrap();
        assert_eq!(a.get("cat"), b.get("cat"));
        assert_eq!(a.get("cat").unwrap(), &[0.6, 0.8, 0.0]);
        let only: HashSet<String> = ["dog".to_string()].into();
        assert_eq!(EmbeddingTable::load(&bin, Some(&only)).unwrap().len(), 1);
    }
}
