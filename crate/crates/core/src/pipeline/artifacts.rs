use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::steps::{FusionStates, StepRecord};
use crate::error::{Result, ZddaError};
use crate::model::checkpoint::{load_branch, load_classifier, save_branch, save_classifier};
use crate::model::network::{BranchState, ClassifierState};

/// Seeds, hyperparameters and inputs of each executed step, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub steps: Vec<StepRecord>,
    /// Dataset names mapped to manifest or content hashes.
    #[serde(default)]
    pub datasets: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn step(&self, name: &str) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.step == name)
    }
}

#[derive(Debug, Clone)]
pub struct ZddaArtifacts {
    pub t: BranchState,
    pub s1: BranchState,
    pub s2: BranchState,
    pub source_classifier: ClassifierState,
    pub fusion: Option<FusionStates>,
    pub provenance: Provenance,
}

const FILES: [&str; 4] = ["t.ckpt", "s1.ckpt", "s2.ckpt", "source_classifier.ckpt"];
const FUSION_FILES: [&str; 3] = ["s3.ckpt", "s4.ckpt", "joint_classifier.ckpt"];

impl ZddaArtifacts {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| ZddaError::io(dir, e))?;
        save_branch(&dir.join(FILES[0]), &self.t)?;
        save_branch(&dir.join(FILES[1]), &self.s1)?;
        save_branch(&dir.join(FILES[2]), &self.s2)?;
        save_classifier(&dir.join(FILES[3]), &self.source_classifier)?;
        if let Some(f) = &self.fusion {
            save_branch(&dir.join(FUSION_FILES[0]), &f.s3)?;
            save_branch(&dir.join(FUSION_FILES[1]), &f.s4)?;
            save_classifier(&dir.join(FUSION_FILES[2]), &f.joint)?;
        }
        let path = dir.join("provenance.json");
        let json = serde_json::to_string_pretty(&self.provenance)?;
        fs::write(&path, json).map_err(|e| ZddaError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("provenance.json");
        let text = fs::read_to_string(&path).map_err(|e| ZddaError::io(&path, e))?;
        let provenance: Provenance = serde_json::from_str(&text)?;
        let fusion = if dir.join(FUSION_FILES[0]).is_file() {
            Some(FusionStates {
                s3: load_branch(&dir.join(FUSION_FILES[0]))?,
                s4: load_branch(&dir.join(FUSION_FILES[1]))?,
                joint: load_classifier(&dir.join(FUSION_FILES[2]))?,
            })
        } else {
            None
        };
        Ok(Self {
            t: load_branch(&dir.join(FILES[0]))?,
            s1: load_branch(&dir.join(FILES[1]))?,
            s2: load_branch(&dir.join(FILES[2]))?,
            source_classifier: load_classifier(&dir.join(FILES[3]))?,
            fusion,
            provenance,
        })
    }

    /// Checksum of every stored state, keyed by role.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("t".into(), self.t.checksum());
        m.insert("s1".into(), self.s1.checksum());
        m.insert("s2".into(), self.s2.checksum());
        m.insert("source_classifier".into(), self.source_classifier.checksum());
        if let Some(f) = &self.fusion {
            m.insert("s3".into(), f.s3.checksum());
            m.insert("s4".into(), f.s4.checksum());
            m.insert("joint_classifier".into(), f.joint.checksum());
        }
        m
    }
}
