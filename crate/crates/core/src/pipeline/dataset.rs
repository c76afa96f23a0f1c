use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::hierarchy::deserialize_hierarchy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    /// Hierarchy directory, relative to the manifest file.
    pub hierarchy: PathBuf,
    pub split: Split,
}

/// JSON list of scene hierarchies and their split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    pub scenes: Vec<SceneEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        if m.classes == 0 {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        Ok(m)
    }

    pub fn scenes_in(&self, split: Split) -> impl Iterator<Item = &SceneEntry> {
        self.scenes.iter().filter(move |s| s.split == split)
    }
}

/// Reads the manifest and deserializes every hierarchy of `split`.
pub fn load_dataset(manifest: &Path, split: Split) -> Result<(DatasetManifest, Vec<Sample>)> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io_path(manifest, e))?;
    let m = DatasetManifest::parse(&text)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let samples = m
        .scenes_in(split)
        .map(|s| {
            Ok(Sample::new(
                s.name.clone(),
                deserialize_hierarchy(&base.join(&s.hierarchy))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_hierarchy, serialize_hierarchy, HierarchyConfig};

    #[test]
    fn parse_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = crate::synthetic::random_mesh(60, 1);
        let h = build_hierarchy(&mesh, &HierarchyConfig::vc_cells(&[0.05, 0.2])).unwrap();
        serialize_hierarchy(&h, &dir.path().join("a"), true).unwrap();
        let text = r#"{"classes": 3, "scenes": [
            {"name": "a", "hierarchy": "a", "split": "train"},
            {"name": "b", "hierarchy": "missing", "split": "test"}]}"#;
        let path = dir.path().join("dataset.json");
        std::fs::write(&path, text).unwrap();
        let (m, train) = load_dataset(&path, Split::Train).unwrap();
        assert_eq!(m.scenes.len(), 2);
        assert_eq!(train.len(), 1);
        assert_eq!(train[0].hierarchy.vertex_counts(), h.vertex_counts());
        assert!(load_dataset(&path, Split::Test).is_err());
        assert!(DatasetManifest::parse(r#"{"classes": 0, "scenes": []}"#).is_err());
        assert!(DatasetManifest::parse(
            r#"{"classes": 2, "scenes": [{"name": "x", "hierarchy": "x", "split": "dev"}]}"#
        )
        .is_err());
    }
}
