use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::{read_recording, recording_files, RecordingMeta};
use crate::error::{Error, IngestIssue, Result};
use crate::persist::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
    Session1,
    Session2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub meta: RecordingMeta,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Validated list of recordings with optional split labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest")]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct RawManifest {
    entries: Vec<ManifestEntry>,
}

impl TryFrom<RawManifest> for Manifest {
    type Error = Error;

    fn try_from(raw: RawManifest) -> Result<Self> {
        Manifest::new(raw.entries)
    }
}

/// Result of scanning a directory: everything valid plus everything rejected.
#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub manifest: Manifest,
    pub issues: Vec<IngestIssue>,
}

impl IngestOutcome {
    /// Fails when any record was rejected.
    pub fn strict(self) -> Result<Manifest> {
        if self.issues.is_empty() {
            Ok(self.manifest)
        } else {
            Err(Error::Ingest(self.issues))
        }
    }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.meta.user_id.as_str(), e.meta.recording_id.as_str())) {
                return Err(Error::InvalidInput(format!(
                    "duplicate recording {} for user {}",
                    e.meta.recording_id, e.meta.user_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn users(&self) -> Vec<String> {
        let s: BTreeSet<&str> = self.entries.iter().map(|e| e.meta.user_id.as_str()).collect();
        s.into_iter().map(String::from).collect()
    }

    pub fn activities(&self) -> Vec<String> {
        let s: BTreeSet<&str> = self.entries.iter().map(|e| e.meta.activity_id.as_str()).collect();
        s.into_iter().map(String::from).collect()
    }

    /// Entry indices grouped by user, users sorted.
    pub fn by_user(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            m.entry(e.meta.user_id.as_str()).or_default().push(i);
        }
        m
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].split == Some(split)).collect()
    }

    pub fn with_splits(&self, splits: &[Option<Split>]) -> Result<Self> {
        if splits.len() != self.entries.len() {
            return Err(Error::shape(self.entries.len(), splits.len()));
        }
        let mut m = self.clone();
        for (e, s) in m.entries.iter_mut().zip(splits) {
            e.split = *s;
        }
        Ok(m)
    }

    /// Scans `dir` for recordings, keeping valid ones and reporting the rest.
    pub fn ingest(dir: impl AsRef<Path>) -> Result<IngestOutcome> {
        let dir = dir.as_ref();
        let mut entries = Vec::new();
        let mut issues = Vec::new();
        let mut seen = HashSet::new();
        for path in recording_files(dir)? {
            match read_recording(&path) {
                Ok(r) => {
                    if seen.insert((r.meta.user_id.clone(), r.meta.recording_id.clone())) {
                        entries.push(ManifestEntry { meta: r.meta, path, split: None });
                    } else {
                        issues.push(IngestIssue {
                            path,
                            line: Some(1),
                            reason: format!("duplicate recording {} for user {}", r.meta.recording_id, r.meta.user_id),
                        });
                    }
                }
                Err(issue) => issues.push(issue),
            }
        }
        if entries.is_empty() && issues.is_empty() {
            log::warn!("no recordings found in {}", dir.display());
        }
        for i in &issues {
            log::warn!("rejected {i}");
        }
        Ok(IngestOutcome { manifest: Manifest::new(entries)?, issues })
    }

    /// Writes JSON; paths under the manifest's directory are stored relative to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut m = self.clone();
        for e in &mut m.entries {
            if let Ok(rel) = e.path.strip_prefix(base) {
                e.path = rel.to_path_buf();
            }
        }
        write_atomic(path, &serde_json::to_vec_pretty(&m)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_slice(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }
}

/// Per user, marks `test` recordings as test and `validation` as validation; the rest train.
pub fn assign_holdout(m: &Manifest, validation: usize, test: usize, seed: u64) -> Result<Manifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![None; m.len()];
    for (user, mut idx) in m.by_user() {
        if idx.len() < validation + test + 1 {
            return Err(Error::Split(format!(
                "user {user} has {} recordings, needs at least {}",
                idx.len(),
                validation + test + 1
            )));
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            splits[i] = Some(if k < test {
                Split::Test
            } else if k < test + validation {
                Split::Validation
            } else {
                Split::Train
            });
        }
    }
    m.with_splits(&splits)
}

/// Bounds on how many recordings a user must have to take part in a session split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eligibility {
    pub min_recordings: Option<usize>,
    pub max_recordings: Option<usize>,
}

/// Two disjoint sessions per user, session 1 strictly earlier by `created_at`.
pub fn split_sessions(m: &Manifest, users: usize, per_session: usize, seed: u64) -> Result<Manifest> {
    split_sessions_with(m, users, per_session, Eligibility::default(), seed)
}

pub fn split_sessions_with(
    m: &Manifest,
    users: usize,
    per_session: usize,
    elig: Eligibility,
    seed: u64,
) -> Result<Manifest> {
    if per_session == 0 || users == 0 {
        return Err(Error::Split("users and per-session count must be positive".into()));
    }
    let need = (2 * per_session).max(elig.min_recordings.unwrap_or(0));
    let by_user = m.by_user();
    let mut eligible = Vec::new();
    let mut short = Vec::new();
    for (u, idx) in &by_user {
        let n = idx.len();
        if n >= need && elig.max_recordings.is_none_or(|mx| n <= mx) {
            eligible.push(*u);
        } else {
            short.push(format!("{u} ({n})"));
        }
    }
    if eligible.len() < users {
        return Err(Error::Split(format!(
            "{} eligible users, {users} requested; ineligible: {}",
            eligible.len(),
            short.join(", ")
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(users);
    eligible.sort_unstable();
    let mut splits = vec![None; m.len()];
    for u in eligible {
        let mut idx = by_user[u].clone();
        idx.shuffle(&mut rng);
        idx.truncate(2 * per_session);
        let e = m.entries();
        idx.sort_by(|&a, &b| {
            (e[a].meta.created_at, &e[a].meta.recording_id).cmp(&(e[b].meta.created_at, &e[b].meta.recording_id))
        });
        for (k, i) in idx.into_iter().enumerate() {
            splits[i] = Some(if k < per_session { Split::Session1 } else { Split::Session2 });
        }
    }
    m.with_splits(&splits)
}
