//! Reading generated datasets back from disk.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use css_core::mixgen::{read_index, source_file, IndexEntry, MIXTURE_FILE};
use css_core::{read_wav, AudioBuffer, GroundTruth};

use crate::errors::DataError;

/// One indexed conversation and the directory holding its files.
#[derive(Debug, Clone)]
pub struct Entry {
    pub index: IndexEntry,
    pub dir: PathBuf,
}

pub fn load_index(path: &Path) -> Result<Vec<Entry>> {
    let root = path.parent().unwrap_or(Path::new("."));
    let entries = read_index(path).with_context(|| format!("reading index {}", path.display()))?;
    if entries.is_empty() {
        return Err(DataError(format!("{} lists no conversations", path.display())).into());
    }
    Ok(entries
        .into_iter()
        .map(|index| {
            let manifest = root.join(&index.manifest);
            let dir = manifest.parent().map_or_else(|| root.join(&index.id), Path::to_path_buf);
            Entry { index, dir }
        })
        .collect())
}

impl Entry {
    pub fn mixture(&self) -> Result<AudioBuffer<f64>> {
        let path = self.dir.join(MIXTURE_FILE);
        read_wav(&path).with_context(|| format!("reading {}", path.display()))
    }

    pub fn clean(&self, channels: usize) -> Result<GroundTruth<f64>> {
        let sources = (0..channels)
            .map(|c| {
                let path = self.dir.join(source_file(c));
                read_wav::<f64>(&path)
                    .map(AudioBuffer::into_samples)
                    .with_context(|| format!("reading {}", path.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundTruth::new(sources))
    }
}

/// Estimate files of one conversation in an output directory.
pub fn estimate_paths(out: &Path, id: &str, channels: usize) -> Vec<PathBuf> {
    (0..channels).map(|c| out.join(id).join(source_file(c))).collect()
}

/// Keeps at most `limit` entries per target overlap, in index order.
pub fn limit_per_overlap(entries: Vec<Entry>, limit: Option<usize>) -> Vec<Entry> {
    let Some(limit) = limit else {
        return entries;
    };
    let mut seen: Vec<(u64, usize)> = Vec::new();
    entries
        .into_iter()
        .filter(|e| {
            let key = e.index.target_overlap.to_bits();
            match seen.iter_mut().find(|(k, _)| *k == key) {
                Some((_, n)) if *n >= limit => false,
                Some((_, n)) => {
                    *n += 1;
                    true
                }
                None => {
                    seen.push((key, 1));
                    limit > 0
                }
            }
        })
        .collect()
}
