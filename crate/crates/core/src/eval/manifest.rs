//! Quality manifests: CSV with header `image_path,mos`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// As written in the CSV; relative paths resolve against the manifest
    /// directory.
    pub image_path: String,
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub base: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(base: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        for e in &entries {
            if e.image_path.is_empty() {
                return Err(invalid("manifest entry with an empty image path"));
            }
            if !e.mos.is_finite() {
                return Err(invalid(format!("non-finite MOS for {}", e.image_path)));
            }
        }
        Ok(Self {
            base: base.into(),
            entries,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let entries = rdr.deserialize().collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        if entries.is_empty() {
            return Err(Error::InsufficientData(format!("{} lists no images", path.display())));
        }
        Self::new(path.parent().map(Path::to_path_buf).unwrap_or_default(), entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self, i: usize) -> PathBuf {
        self.base.join(&self.entries[i].image_path)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mos).collect()
    }

    /// `(min, max)` of the MOS values.
    pub fn score_range(&self) -> (f64, f64) {
        self.entries.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.mos), hi.max(e.mos))
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            base: self.base.clone(),
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            dir.path(),
            vec![
                ManifestEntry {
                    image_path: "a.png".into(),
                    mos: 0.1 + 0.2,
                },
                ManifestEntry {
                    image_path: "sub/b, c.png".into(),
                    mos: -3.25e-7,
                },
            ],
        )
        .unwrap();
        let p = dir.path().join("m.csv");
        m.write(&p).unwrap();
        assert_eq!(DatasetManifest::read(&p).unwrap(), m);
        assert_eq!(m.path(0), dir.path().join("a.png"));
        assert_eq!(m.score_range(), (-3.25e-7, 0.1 + 0.2));
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "image_path,mos\n").unwrap();
        assert!(matches!(DatasetManifest::read(&p), Err(Error::InsufficientData(_))));
    }
}
