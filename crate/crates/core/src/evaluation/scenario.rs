use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::featurize_summary_stats;
use super::forest::{ForestConfig, RandomForest, TabularClassifier};
use super::identification::{eval_identification, FunnelIdentifier, LinkabilityReport, TabularIdentifier, WindowIdentifier};
use crate::dataset::{assign_holdout, Dataset, Manifest, Split};
use crate::error::{Error, Result};
use crate::models::{ClassifierConfig, ModelBundle, NoiseVector};
use crate::motion::FeatureSubset;
use crate::runtime::mask_window;
use crate::training::{train_identifier, TrainConfig};
use crate::{Weight, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Trains on unmodified session 1.
    Oblivious,
    /// Trains on session 1 passed through the same defense.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defense {
    None,
    DeepMotionMasking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifierKind {
    LstmFunnel,
    SummaryStatsTabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AdversaryScenario {
    pub kind: AdversaryKind,
    pub defense: Defense,
    pub identifier: IdentifierKind,
}

impl AdversaryScenario {
    /// Row label in the results grid.
    pub fn row(&self) -> &'static str {
        match (self.defense, self.kind) {
            (Defense::None, _) => "Unmodified",
            (Defense::DeepMotionMasking, AdversaryKind::Oblivious) => "Deep motion masking (oblivious)",
            (Defense::DeepMotionMasking, AdversaryKind::Adaptive) => "Deep motion masking (adaptive)",
        }
    }

    /// Column label in the results grid.
    pub fn column(&self) -> &'static str {
        match self.identifier {
            IdentifierKind::LstmFunnel => "LSTM funnel",
            IdentifierKind::SummaryStatsTabular => "Summary statistics (forest)",
        }
    }

    /// The unmodified, oblivious and adaptive rows for both identifiers.
    pub fn grid() -> Vec<Self> {
        let mut out = Vec::new();
        for identifier in [IdentifierKind::LstmFunnel, IdentifierKind::SummaryStatsTabular] {
            for (kind, defense) in [
                (AdversaryKind::Oblivious, Defense::None),
                (AdversaryKind::Oblivious, Defense::DeepMotionMasking),
                (AdversaryKind::Adaptive, Defense::DeepMotionMasking),
            ] {
                out.push(Self { kind, defense, identifier });
            }
        }
        out
    }
}

impl fmt::Display for AdversaryScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.row(), self.column())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub forest: ForestConfig,
    /// Session-1 recordings per user held out for early stopping of the funnel.
    pub validation_per_user: usize,
    /// Drives session noise and holdout selection.
    pub seed: u64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            classifier: ClassifierConfig::default(),
            forest: ForestConfig::default(),
            validation_per_user: 1,
            seed: 0,
        }
    }
}

/// Motion-space windows of the two sessions, checked for leakage.
#[derive(Debug, Clone)]
pub struct Sessions {
    session1: Dataset,
    session2: Dataset,
}

impl Sessions {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        if ds.windows().iter().any(|w| w.is_zscored()) {
            return Err(Error::InvalidInput("sessions hold motion-space windows".into()));
        }
        let s1 = ds.subset(Split::Session1)?;
        let s2 = ds.subset(Split::Session2)?;
        if s1.is_empty() || s2.is_empty() {
            return Err(Error::Split("both sessions need recordings".into()));
        }
        let ids1: BTreeSet<&str> = s1.manifest().entries().iter().map(|e| e.meta.recording_id.as_str()).collect();
        if let Some(e) = s2.manifest().entries().iter().find(|e| ids1.contains(e.meta.recording_id.as_str())) {
            return Err(Error::Leakage(format!("recording {} appears in both sessions", e.meta.recording_id)));
        }
        let digests: BTreeMap<[u8; 32], &str> = s1
            .manifest()
            .entries()
            .iter()
            .zip(s1.windows())
            .map(|(e, w)| (window_digest(w), e.meta.recording_id.as_str()))
            .collect();
        for (e, w) in s2.manifest().entries().iter().zip(s2.windows()) {
            if let Some(other) = digests.get(&window_digest(w)) {
                return Err(Error::Leakage(format!(
                    "session-2 recording {} duplicates session-1 recording {other}",
                    e.meta.recording_id
                )));
            }
        }
        let users1: BTreeSet<String> = s1.manifest().users().into_iter().collect();
        if let Some(u) = s2.manifest().users().into_iter().find(|u| !users1.contains(u)) {
            return Err(Error::Split(format!("user {u} has no session-1 recordings")));
        }
        Ok(Self { session1: s1, session2: s2 })
    }

    pub fn session1(&self) -> &Dataset {
        &self.session1
    }

    pub fn session2(&self) -> &Dataset {
        &self.session2
    }
}

fn window_digest(w: &Window) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in w.view().iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// One noise vector per user for the given session; the same seed gives the same noise.
pub fn session_noise(seed: u64, session: u64, user: &str, dim: usize) -> NoiseVector<Weight> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv(user) ^ session.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    NoiseVector::sample(&mut rng, dim)
}

/// Session windows after the defense; each user's recordings share one noise vector.
fn defended(ds: &Dataset, defense: Defense, bundle: Option<&ModelBundle<Weight>>, seed: u64, session: u64) -> Result<Dataset> {
    match defense {
        Defense::None => Ok(ds.clone()),
        Defense::DeepMotionMasking => {
            let bundle = bundle.ok_or_else(|| Error::Config("deep motion masking needs a trained bundle".into()))?;
            let dim = bundle.anonymizer()?.noise_dim();
            let mut noise: BTreeMap<&str, NoiseVector<Weight>> = BTreeMap::new();
            let windows = ds
                .manifest()
                .entries()
                .iter()
                .zip(ds.windows())
                .map(|(e, w)| {
                    let u = e.meta.user_id.as_str();
                    let n = noise.entry(u).or_insert_with(|| session_noise(seed, session, u, dim));
                    mask_window(bundle, w, n).map(Arc::new)
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::from_parts(ds.manifest().clone(), windows)
        }
    }
}

fn labelled(ds: &Dataset) -> Vec<(Arc<Window>, String)> {
    ds.manifest().entries().iter().zip(ds.windows()).map(|(e, w)| (w.clone(), e.meta.user_id.clone())).collect()
}

/// Trains a scenario's identifier on (possibly defended) session-1 windows.
pub fn train_adversary(
    identifier: IdentifierKind,
    train: &Dataset,
    opts: &ScenarioOptions,
) -> Result<Box<dyn WindowIdentifier>> {
    match identifier {
        IdentifierKind::LstmFunnel => {
            let manifest = Manifest::new(train.manifest().entries().iter().map(|e| {
                let mut e = e.clone();
                e.split = None;
                e
            }).collect())?;
            let held = assign_holdout(&manifest, opts.validation_per_user, 0, opts.seed)?;
            let ds = train.with_manifest(held)?;
            let stats = ds.subset(Split::Train)?.fit_stats()?;
            let mut ccfg = opts.classifier.clone();
            ccfg.encoder.input_dim = FeatureSubset::full().len();
            let (classifier, report) = train_identifier(&ds.zscored(&stats)?, &opts.train, &ccfg, &FeatureSubset::full())?;
            log::info!("{}", report.summary());
            Ok(Box::new(FunnelIdentifier { classifier, stats, subset: FeatureSubset::full() }))
        }
        IdentifierKind::SummaryStatsTabular => {
            let labels = train.manifest().users();
            let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for (e, w) in train.manifest().entries().iter().zip(train.windows()) {
                let f = featurize_summary_stats(&**w);
                for r in f.rows() {
                    rows.extend(r.iter().copied());
                    y.push(index[e.meta.user_id.as_str()]);
                }
            }
            let width = super::features::SUMMARY_FEATURES;
            let x = ndarray::Array2::from_shape_vec((y.len(), width), rows).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut forest = RandomForest::new(ForestConfig { seed: opts.seed, ..opts.forest.clone() });
            forest.fit(&x, &y, labels.len())?;
            Ok(Box::new(TabularIdentifier { model: forest, labels }))
        }
    }
}

/// Trains on session 1 and evaluates on session 2 for one scenario.
pub fn run_scenario(
    s: &AdversaryScenario,
    ds: &Dataset,
    bundle: Option<&ModelBundle<Weight>>,
    opts: &ScenarioOptions,
) -> Result<LinkabilityReport> {
    Ok(run_scenarios(std::slice::from_ref(s), ds, bundle, opts)?.remove(0))
}

/// Several scenarios over the same sessions; adversaries with identical training data are trained once.
pub fn run_scenarios(
    scenarios: &[AdversaryScenario],
    ds: &Dataset,
    bundle: Option<&ModelBundle<Weight>>,
    opts: &ScenarioOptions,
) -> Result<Vec<LinkabilityReport>> {
    let sessions = Sessions::from_dataset(ds)?;
    let mut views: BTreeMap<(Defense, u64), Dataset> = BTreeMap::new();
    let mut view = |defense: Defense, session: u64| -> Result<Dataset> {
        if let Some(d) = views.get(&(defense, session)) {
            return Ok(d.clone());
        }
        let src = if session == 1 { sessions.session1() } else { sessions.session2() };
        let d = defended(src, defense, bundle, opts.seed, session)?;
        views.insert((defense, session), d.clone());
        Ok(d)
    };
    let mut adversaries: BTreeMap<(IdentifierKind, Defense), Box<dyn WindowIdentifier>> = BTreeMap::new();
    let mut out = Vec::new();
    for s in scenarios {
        let train_defense = match s.kind {
            AdversaryKind::Oblivious => Defense::None,
            AdversaryKind::Adaptive => s.defense,
        };
        if !adversaries.contains_key(&(s.identifier, train_defense)) {
            let train = view(train_defense, 1)?;
            adversaries.insert((s.identifier, train_defense), train_adversary(s.identifier, &train, opts)?);
        }
        let test = view(s.defense, 2)?;
        let model = &adversaries[&(s.identifier, train_defense)];
        let mut report = eval_identification(model.as_ref(), &labelled(&test), &s.to_string())?;
        report.scenario = Some(*s);
        log::info!("{s}: per-sample {:.3} per-user {:.3}", report.per_sample_accuracy, report.per_user_accuracy);
        out.push(report);
    }
    Ok(out)
}
