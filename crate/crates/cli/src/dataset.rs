use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fredsr::imaging::{read_image, Image};
use fredsr::training::Pair;
use log::warn;

/// A prepared `<name>_hr` / `<name>_lr` pair on disk.
#[derive(Debug)]
pub struct NamedPair {
    pub name: String,
    pub pair: Pair,
}

/// Files in `dir`, sorted by name, so every command sees a stable order.
pub fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn split_role(path: &Path) -> Option<(String, bool)> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if ext != "png" && ext != "ppm" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    if let Some(name) = stem.strip_suffix("_hr") {
        Some((name.to_string(), true))
    } else {
        stem.strip_suffix("_lr").map(|name| (name.to_string(), false))
    }
}

/// Loads every complete pair in `dir`. Unpaired or unreadable files are
/// reported and left out.
pub fn load_pairs(dir: &Path) -> Result<Vec<NamedPair>> {
    let mut slots: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for path in sorted_files(dir)? {
        if let Some((name, is_hr)) = split_role(&path) {
            let slot = slots.entry(name).or_default();
            if is_hr {
                slot.0 = Some(path);
            } else {
                slot.1 = Some(path);
            }
        }
    }
    let mut pairs = Vec::new();
    for (name, slot) in slots {
        let (Some(hr), Some(lr)) = slot else {
            warn!("excluding unpaired image {name}");
            continue;
        };
        match (read_image(&hr), read_image(&lr)) {
            (Ok(hr), Ok(lr)) => pairs.push(NamedPair { name, pair: Pair { lr, hr } }),
            (Err(e), _) | (_, Err(e)) => warn!("excluding {name}: {e}"),
        }
    }
    Ok(pairs)
}

pub fn dims(img: &Image) -> String {
    format!("{}x{}", img.width(), img.height())
}
