//! Stage functions shared by the command line and the end-to-end tests.
//!
//! Each stage takes the z-scored defense corpus (Train, Validation and Test
//! splits) plus whatever earlier stages produced.

use serde::{Deserialize, Serialize};

use crate::dataset::{sample_action_pairs, sample_anonymizer_pairs, sample_user_pairs, Dataset, PairSample, Split};
use crate::error::{Error, Result};
use crate::models::{
    Anonymizer, AnonymizerConfig, Classifier, ClassifierConfig, EncoderConfig, Normalizer, NormalizerConfig,
    PopulationShift, SimilarityModel,
};
use crate::motion::FeatureSubset;
use crate::training::{
    build_normalizer_pairs, fit_population_shift, pretrain_anonymizer, train_action_similarity, train_anonymizer,
    train_identifier, train_normalizer, train_user_similarity, AnonSets, PairSets, TrainConfig, TrainReport,
};
use crate::Weight;

/// Pairs drawn from each split; half same, half different.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Epoch limits per stage; `None` falls back to `TrainConfig::max_epochs`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageEpochs {
    pub identifier: Option<usize>,
    pub action_similarity: Option<usize>,
    pub user_similarity: Option<usize>,
    pub anonymizer: Option<usize>,
    pub normalizer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub epochs: StageEpochs,
    pub identifier: ClassifierConfig,
    pub similarity: EncoderConfig,
    pub anonymizer: AnonymizerConfig,
    pub normalizer: NormalizerConfig,
    pub action_pairs: PairCounts,
    pub user_pairs: PairCounts,
    /// Anonymizer samples per split; test is unused.
    pub anonymizer_pairs: PairCounts,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            epochs: StageEpochs::default(),
            identifier: ClassifierConfig::default(),
            similarity: EncoderConfig::default(),
            anonymizer: AnonymizerConfig::default(),
            normalizer: NormalizerConfig::default(),
            action_pairs: PairCounts { train: 2000, validation: 400, test: 400 },
            user_pairs: PairCounts { train: 2000, validation: 400, test: 400 },
            anonymizer_pairs: PairCounts { train: 2000, validation: 200, test: 0 },
        }
    }
}

impl PipelineConfig {
    fn stage(&self, limit: Option<usize>) -> TrainConfig {
        let mut t = self.train.clone();
        if let Some(e) = limit {
            t.max_epochs = e;
        }
        t
    }
}

fn pairs_by_split(
    ds: &Dataset,
    counts: PairCounts,
    seed: u64,
    sample: fn(&Dataset, usize, usize, u64) -> Result<Vec<PairSample>>,
) -> Result<PairSets> {
    let draw = |split: Split, n: usize, salt: u64| -> Result<Vec<PairSample>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let sub = ds.subset(split)?;
        sample(&sub, n / 2, n - n / 2, seed.wrapping_add(salt))
    };
    Ok(PairSets {
        train: draw(Split::Train, counts.train, 1)?,
        validation: draw(Split::Validation, counts.validation, 2)?,
        test: draw(Split::Test, counts.test, 3)?,
    })
}

fn require_splits(ds: &Dataset) -> Result<()> {
    if ds.manifest().indices_in(Split::Train).is_empty() {
        return Err(Error::Split("the corpus has no training split; assign a holdout first".into()));
    }
    if ds.windows().iter().any(|w| !w.is_zscored()) {
        return Err(Error::InvalidInput("stages expect a z-scored corpus".into()));
    }
    Ok(())
}

pub fn stage_identifier(ds: &Dataset, cfg: &PipelineConfig) -> Result<(Classifier<Weight>, TrainReport)> {
    require_splits(ds)?;
    train_identifier(ds, &cfg.stage(cfg.epochs.identifier), &cfg.identifier, &FeatureSubset::full())
}

pub fn stage_action_similarity(ds: &Dataset, cfg: &PipelineConfig) -> Result<(SimilarityModel<Weight>, TrainReport)> {
    require_splits(ds)?;
    let pairs = pairs_by_split(ds, cfg.action_pairs, cfg.train.seed, sample_action_pairs)?;
    train_action_similarity(&pairs, &cfg.stage(cfg.epochs.action_similarity), &cfg.similarity)
}

pub fn stage_user_similarity(ds: &Dataset, cfg: &PipelineConfig) -> Result<(SimilarityModel<Weight>, TrainReport)> {
    require_splits(ds)?;
    let pairs = pairs_by_split(ds, cfg.user_pairs, cfg.train.seed, sample_user_pairs)?;
    train_user_similarity(&pairs, &cfg.stage(cfg.epochs.user_similarity), &cfg.similarity)
}

/// Reconstruction pretraining followed by adversarial training.
pub fn stage_anonymizer(
    ds: &Dataset,
    action: &SimilarityModel<Weight>,
    user: &SimilarityModel<Weight>,
    cfg: &PipelineConfig,
) -> Result<(Anonymizer<Weight>, Vec<TrainReport>)> {
    require_splits(ds)?;
    let train = ds.subset(Split::Train)?;
    let (pre, pre_report) = pretrain_anonymizer(train.windows(), &cfg.anonymizer, &cfg.train)?;
    let nd = cfg.anonymizer.noise_dim;
    let seed = cfg.train.seed;
    let n = cfg.anonymizer_pairs;
    let sets = AnonSets {
        train: sample_anonymizer_pairs(&train, n.train, nd, seed.wrapping_add(11))?,
        validation: if n.validation == 0 {
            Vec::new()
        } else {
            sample_anonymizer_pairs(&ds.subset(Split::Validation)?, n.validation, nd, seed.wrapping_add(12))?
        },
    };
    let (anon, report) = train_anonymizer(pre, &sets, action, user, &cfg.stage(cfg.epochs.anonymizer))?;
    Ok((anon, vec![pre_report, report]))
}

/// Population shift on raw anonymizer output, then the normalizer on shifted output.
pub fn stage_normalizer(
    ds: &Dataset,
    anon: &Anonymizer<Weight>,
    cfg: &PipelineConfig,
) -> Result<(PopulationShift, Normalizer<Weight>, TrainReport)> {
    require_splits(ds)?;
    let train = ds.subset(Split::Train)?;
    let raw = build_normalizer_pairs(anon, &PopulationShift::identity(), train.windows(), cfg.train.seed ^ 0x5eed)?;
    let shift = fit_population_shift(
        train.windows().iter().map(|w| w.view()),
        raw.iter().map(|p| p.anonymized.view()),
    )?;
    let mut pairs = raw;
    for p in &mut pairs {
        for row in p.anonymized.rows_mut() {
            shift.apply_row(row);
        }
    }
    let val = ds.subset(Split::Validation)?;
    let val_pairs = build_normalizer_pairs(anon, &shift, val.windows(), cfg.train.seed ^ 0x7a1)?;
    let (norm, report) = train_normalizer(&pairs, &val_pairs, &cfg.normalizer, &cfg.stage(cfg.epochs.normalizer))?;
    Ok((shift, norm, report))
}
