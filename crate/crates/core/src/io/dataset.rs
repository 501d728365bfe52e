//! `root/rgb/NAME.ppm` paired with `root/cubes/NAME.hsc`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{read_cube, read_rgb};
use crate::error::{Error, Result};
use crate::raster::Sample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPaths {
    pub stem: String,
    pub rgb: PathBuf,
    pub cube: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairList {
    /// Sorted by stem.
    pub pairs: Vec<PairPaths>,
    /// Stems present on only one side, as `rgb/NAME.ppm` or `cubes/NAME.hsc`.
    pub unmatched: Vec<String>,
}

fn stems(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// A pair that failed to load: its stem and the error.
pub type SkippedPair = (String, Error);

/// Matches inputs to targets by file stem.
pub fn pair_dataset(root: impl AsRef<Path>) -> Result<PairList> {
    let root = root.as_ref();
    let rgb = stems(&root.join("rgb"), "ppm")?;
    let mut cubes = stems(&root.join("cubes"), "hsc")?;
    let mut list = PairList::default();
    for (stem, rgb_path) in rgb {
        match cubes.remove(&stem) {
            Some(cube) => list.pairs.push(PairPaths { stem, rgb: rgb_path, cube }),
            None => list.unmatched.push(format!("rgb/{stem}.ppm")),
        }
    }
    list.unmatched.extend(cubes.into_keys().map(|s| format!("cubes/{s}.hsc")));
    if list.pairs.is_empty() {
        return Err(Error::Config(format!(
            "no matching rgb/NAME.ppm and cubes/NAME.hsc pairs under {}",
            root.display()
        )));
    }
    Ok(list)
}

pub fn load_sample(p: &PairPaths) -> Result<Sample> {
    Sample::new(p.stem.clone(), read_rgb(&p.rgb)?, read_cube(&p.cube)?)
}

/// Loads every pair. With `skip_unreadable`, failures are returned as
/// `(stem, error)` warnings instead of aborting.
pub fn load_pairs(pairs: &[PairPaths], skip_unreadable: bool) -> Result<(Vec<Sample>, Vec<SkippedPair>)> {
    let mut samples = Vec::with_capacity(pairs.len());
    let mut skipped = Vec::new();
    for p in pairs {
        match load_sample(p) {
            Ok(s) => samples.push(s),
            Err(e) if skip_unreadable => skipped.push((p.stem.clone(), e)),
            Err(e) => return Err(e),
        }
    }
    Ok((samples, skipped))
}
