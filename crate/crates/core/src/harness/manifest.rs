//! Text manifests listing a domain's feature files.
//!
//! ```text
//! #classes=8
//! videos/a_0001.tmnf	3	arid
//! videos/a_0002.tmnf	-1	arid
//! ```
//!
//! Relative paths resolve against the manifest's directory. Target-train
//! manifests carry the label `-1` on every record.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::features::load_features;
use crate::error::{Error, Result};
use crate::temporal::FrameFeatureSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestRole {
    Source,
    TargetTrain,
    TargetTest,
}

impl FromStr for ManifestRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Self::Source),
            "target-train" => Ok(Self::TargetTrain),
            "target-test" => Ok(Self::TargetTest),
            other => Err(Error::Config(format!("unknown manifest role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub feature_path: String,
    pub label: Option<usize>,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub class_count: usize,
    pub records: Vec<ManifestRecord>,
    pub role: ManifestRole,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        for (i, rec) in self.records.iter().enumerate() {
            match (self.role, rec.label) {
                (ManifestRole::TargetTrain, Some(_)) => {
                    return Err(Error::Data(format!(
                        "record {i}: target-train manifests must not carry labels"
                    )))
                }
                (ManifestRole::Source | ManifestRole::TargetTest, None) => {
                    return Err(Error::Data(format!("record {i}: missing label")))
                }
                (_, Some(label)) if label >= self.class_count => {
                    return Err(Error::Label {
                        row: i,
                        label,
                        classes: self.class_count,
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, role: ManifestRole) -> Result<Self> {
        let mut lines = text.split_inclusive('\n');
        let mut offset = 0u64;
        let header = lines.next().ok_or_else(|| Error::Format {
            offset: 0,
            reason: "empty manifest".into(),
        })?;
        let class_count = header
            .trim_end()
            .strip_prefix("#classes=")
            .and_then(|k| k.parse::<usize>().ok())
            .ok_or_else(|| Error::Format {
                offset: 0,
                reason: "first line must be `#classes=<K>`".into(),
            })?;
        offset += header.len() as u64;

        let mut records = Vec::new();
        for line in lines {
            let at = offset;
            offset += line.len() as u64;
            let content = line.trim_end_matches(['\n', '\r']);
            if content.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split('\t').collect();
            let [path, label, domain] = fields[..] else {
                return Err(Error::Format {
                    offset: at,
                    reason: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            };
            let label: i64 = label.parse().map_err(|_| Error::Format {
                offset: at,
                reason: format!("invalid label `{label}`"),
            })?;
            let label = match label {
                -1 => None,
                l if l >= 0 => Some(l as usize),
                l => {
                    return Err(Error::Format {
                        offset: at,
                        reason: format!("invalid label {l}"),
                    })
                }
            };
            records.push(ManifestRecord {
                feature_path: path.to_string(),
                label,
                domain: domain.to_string(),
            });
        }
        let manifest = Self {
            class_count,
            records,
            role,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn read(path: &Path, role: ManifestRole) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, role)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#classes={}\n", self.class_count);
        for r in &self.records {
            let label = r.label.map_or(-1, |l| l as i64);
            let _ = writeln!(out, "{}\t{}\t{}", r.feature_path, label, r.domain);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// A copy with labels stripped, for use as an adaptation target.
    pub fn unlabeled(&self) -> Self {
        Self {
            class_count: self.class_count,
            records: self
                .records
                .iter()
                .map(|r| ManifestRecord {
                    label: None,
                    ..r.clone()
                })
                .collect(),
            role: ManifestRole::TargetTrain,
        }
    }

    pub fn domain_name(&self) -> String {
        self.records.first().map(|r| r.domain.clone()).unwrap_or_default()
    }
}

/// Feature sequences of one domain, loaded into memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub domain: String,
    pub class_count: usize,
    pub videos: Vec<FrameFeatureSequence<f32>>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }
}

pub fn resolve(base: &Path, feature_path: &str) -> PathBuf {
    let p = Path::new(feature_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads every feature file of a manifest; `base` anchors relative paths.
pub fn load_dataset(manifest: &Manifest, base: &Path) -> Result<Dataset> {
    manifest.validate()?;
    let videos = manifest
        .records
        .iter()
        .map(|r| load_features(&resolve(base, &r.feature_path)))
        .collect::<Result<Vec<_>>>()?;
    let labels = match manifest.role {
        ManifestRole::TargetTrain => None,
        _ => Some(manifest.records.iter().map(|r| r.label.expect("validated")).collect()),
    };
    Ok(Dataset {
        domain: manifest.domain_name(),
        class_count: manifest.class_count,
        videos,
        labels,
    })
}

/// Reads a manifest file and loads its features.
pub fn load_manifest_dataset(path: &Path, role: ManifestRole) -> Result<Dataset> {
    let manifest = Manifest::read(path, role)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_dataset(&manifest, base)
}
