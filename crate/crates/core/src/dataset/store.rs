use std::sync::Arc;

use super::format::{read_recording, Recording};
use super::manifest::{Manifest, Split};
use crate::error::{Error, Result};
use crate::motion::{resample, window, zscore_apply, DimensionStats, ShortPolicy, TARGET_FPS};
use crate::{Sequence, Window};

/// Resample to 30 fps, cut the first 30 s, and convert to the network scalar.
pub fn prepare_window(seq: &Sequence, policy: ShortPolicy) -> Result<Window> {
    let uniform = resample(seq, TARGET_FPS as f64)?;
    Ok(window(&uniform, policy)?.cast())
}

/// A manifest with one loaded window per entry, shared cheaply between samplers.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: Manifest,
    windows: Vec<Arc<Window>>,
}

impl Dataset {
    pub fn from_parts(manifest: Manifest, windows: Vec<Arc<Window>>) -> Result<Self> {
        if manifest.len() != windows.len() {
            return Err(Error::shape(manifest.len(), windows.len()));
        }
        Ok(Self { manifest, windows })
    }

    /// Reads every recording listed in the manifest.
    pub fn load(manifest: &Manifest, policy: ShortPolicy) -> Result<Self> {
        let mut windows = Vec::with_capacity(manifest.len());
        for e in manifest.entries() {
            let r = read_recording(&e.path).map_err(|i| Error::Ingest(vec![i]))?;
            if r.meta != e.meta {
                return Err(Error::InvalidInput(format!(
                    "{} does not match its manifest entry",
                    e.path.display()
                )));
            }
            windows.push(Arc::new(prepare_window(&r.sequence, policy)?));
        }
        Self::from_parts(manifest.clone(), windows)
    }

    /// Windows from in-memory recordings aligned with the manifest.
    pub fn from_recordings(manifest: &Manifest, recordings: &[Recording], policy: ShortPolicy) -> Result<Self> {
        if manifest.len() != recordings.len() {
            return Err(Error::shape(manifest.len(), recordings.len()));
        }
        let windows = recordings
            .iter()
            .map(|r| prepare_window(&r.sequence, policy).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(manifest.clone(), windows)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn windows(&self) -> &[Arc<Window>] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices.iter().map(|&i| self.manifest.entries()[i].clone()).collect();
        let windows = indices.iter().map(|&i| self.windows[i].clone()).collect();
        Self::from_parts(Manifest::new(entries)?, windows)
    }

    pub fn subset(&self, split: Split) -> Result<Self> {
        self.select(&self.manifest.indices_in(split))
    }

    pub fn with_manifest(&self, manifest: Manifest) -> Result<Self> {
        if manifest.entries().iter().zip(self.manifest.entries()).any(|(a, b)| a.meta != b.meta) {
            return Err(Error::InvalidInput("manifest does not describe these windows".into()));
        }
        Self::from_parts(manifest, self.windows.clone())
    }

    pub fn fit_stats(&self) -> Result<DimensionStats> {
        DimensionStats::fit_arrays(self.windows.iter().map(|w| w.view()))
    }

    pub fn zscored(&self, stats: &DimensionStats) -> Result<Self> {
        let windows = self
            .windows
            .iter()
            .map(|w| zscore_apply(w, stats).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(self.manifest.clone(), windows)
    }
}
