//! Paired dataset directory layout: `<root>/low/*.png` and
//! `<root>/normal/*.png`, paired by identical filename.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lde_core::data::ImagePair;

use crate::png_io::{load_png, save_png};

fn png_files(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    if !dir.is_dir() {
        bail!("missing directory {}", dir.display());
    }
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().map(|e| e == "png").unwrap_or(false) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Load every matched pair, sorted by filename. Unpaired files and pairs
/// with mismatched extents are skipped with a warning; empty results are an
/// error.
pub fn load_dataset(root: &Path) -> Result<Vec<ImagePair>> {
    let lows = png_files(&root.join("low"))?;
    let normals = png_files(&root.join("normal"))?;

    let mut pairs = Vec::new();
    for (id, low_path) in &lows {
        let Some(normal_path) = normals.get(id) else {
            eprintln!("warning: {} has no normal-light counterpart, skipping", low_path.display());
            continue;
        };
        let low = load_png(low_path)?;
        let normal = load_png(normal_path)?;
        if low.shape != normal.shape {
            eprintln!(
                "warning: pair '{id}' has mismatched extents {:?} vs {:?}, skipping",
                low.shape, normal.shape
            );
            continue;
        }
        pairs.push(ImagePair::new(low, normal, id.clone())?);
    }
    for id in normals.keys() {
        if !lows.contains_key(id) {
            eprintln!("warning: normal/{id}.png has no low-light counterpart, skipping");
        }
    }
    if pairs.is_empty() {
        bail!("no usable pairs under {}", root.display());
    }
    Ok(pairs)
}

/// Write a dataset in the layout `load_dataset` reads.
pub fn save_dataset(root: &Path, pairs: &[ImagePair]) -> Result<()> {
    fs::create_dir_all(root.join("low"))?;
    fs::create_dir_all(root.join("normal"))?;
    for pair in pairs {
        save_png(&pair.low, &root.join("low").join(format!("{}.png", pair.id)))?;
        save_png(&pair.normal, &root.join("normal").join(format!("{}.png", pair.id)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lde_core::data::synth_dataset;

    #[test]
    fn roundtrip_and_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = synth_dataset(3, 16, 9).unwrap();
        save_dataset(dir.path(), &pairs).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        let ids: Vec<&str> = back.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, vec!["synth000", "synth001", "synth002"]);
    }

    #[test]
    fn unpaired_files_skip_with_warning_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = synth_dataset(2, 16, 9).unwrap();
        save_dataset(dir.path(), &pairs).unwrap();
        std::fs::remove_file(dir.path().join("normal/synth001.png")).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].id, "synth000");
    }

    #[test]
    fn missing_subdirectory_is_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("low")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
