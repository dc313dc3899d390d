use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::identification::{eval_identification, FunnelIdentifier};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::models::ClassifierConfig;
use crate::motion::FeatureSubset;
use crate::training::{train_identifier, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: String,
    pub features: usize,
    pub per_sample_accuracy: f64,
    pub per_user_accuracy: f64,
    pub best_epoch: usize,
}

/// Trains and tests one funnel identifier per feature subset.
///
/// `ds` holds motion-space windows with Train, Validation and Test splits;
/// z-scoring statistics come from the training split.
pub fn ablate_feature_subsets(
    ds: &Dataset,
    subsets: &[FeatureSubset],
    cfg: &TrainConfig,
    base: &ClassifierConfig,
) -> Result<Vec<AblationRow>> {
    if subsets.is_empty() {
        return Err(Error::InvalidInput("no feature subsets to ablate".into()));
    }
    let stats = ds.subset(Split::Train)?.fit_stats()?;
    let z = ds.zscored(&stats)?;
    let test = ds.subset(Split::Test)?;
    let samples: Vec<_> = test
        .manifest()
        .entries()
        .iter()
        .zip(test.windows())
        .map(|(e, w)| (Arc::clone(w), e.meta.user_id.clone()))
        .collect();
    subsets
        .iter()
        .map(|fs| {
            let mut ccfg = base.clone();
            ccfg.encoder.input_dim = fs.len();
            let (classifier, report) = train_identifier(&z, cfg, &ccfg, fs)?;
            let id = FunnelIdentifier { classifier, stats: stats.clone(), subset: fs.clone() };
            let r = eval_identification(&id, &samples, fs.name())?;
            Ok(AblationRow {
                subset: fs.name().to_string(),
                features: fs.len(),
                per_sample_accuracy: r.per_sample_accuracy,
                per_user_accuracy: r.per_user_accuracy,
                best_epoch: report.best_epoch,
            })
        })
        .collect()
}
