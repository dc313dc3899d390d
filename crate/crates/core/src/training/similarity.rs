use std::collections::BTreeMap;

use super::config::{fit, stage_rng, TrainConfig, TrainReport, Validation};
use super::require_zscored_all;
use crate::dataset::{PairLabel, PairSample};
use crate::error::{Error, Result};
use crate::models::{EncoderConfig, SimilarityModel};
use crate::nn::loss::bce_with_logits;
use crate::Weight;

/// Pair pools for one similarity model, disjoint at the recording level.
#[derive(Debug, Clone, Default)]
pub struct PairSets {
    pub train: Vec<PairSample>,
    pub validation: Vec<PairSample>,
    pub test: Vec<PairSample>,
}

/// Fraction of pairs whose thresholded score agrees with the label, and mean BCE.
pub fn pair_accuracy(model: &SimilarityModel<Weight>, pairs: &[PairSample]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs to evaluate".into()));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for p in pairs {
        let ea = model.embed(&p.window_a.view())?;
        let eb = model.embed(&p.window_b.view())?;
        let logit = model.logit_from_distance(ea.distance(&eb));
        let target = p.label.target() as Weight;
        loss += bce_with_logits(logit, target).0 as f64;
        correct += usize::from((logit > 0.0) == (p.label == PairLabel::Same));
    }
    Ok((correct as f64 / pairs.len() as f64, loss / pairs.len() as f64))
}

fn check_balance(stage: &str, pairs: &[PairSample]) -> Result<()> {
    let same = pairs.iter().filter(|p| p.label == PairLabel::Same).count();
    let diff = pairs.len() - same;
    if same == 0 || diff == 0 {
        return Err(Error::Training(format!(
            "{stage}: training pairs need both classes (same {same}, different {diff})"
        )));
    }
    if same.max(diff) > 10 * same.min(diff) {
        log::warn!("{stage}: label imbalance {same}:{diff} exceeds 10:1");
    }
    Ok(())
}

fn train_similarity(
    stage: &str,
    pairs: &PairSets,
    cfg: &TrainConfig,
    model_cfg: &EncoderConfig,
) -> Result<(SimilarityModel<Weight>, TrainReport)> {
    check_balance(stage, &pairs.train)?;
    for set in [&pairs.train, &pairs.validation, &pairs.test] {
        require_zscored_all(set.iter().flat_map(|p| [&*p.window_a, &*p.window_b]))?;
    }
    let mut rng = stage_rng(cfg.seed, stage);
    let mut model = SimilarityModel::new(&mut rng, model_cfg)?;
    let train = &pairs.train;
    let mut report = fit(
        &mut model,
        stage,
        train.len(),
        cfg.max_epochs,
        !pairs.validation.is_empty(),
        cfg,
        &mut rng,
        |m, i, g, _| {
            let p = &train[i];
            let target = p.label.target() as Weight;
            Ok(m.pair_backward(&p.window_a.view(), &p.window_b.view(), target, g)?.0 as f64)
        },
        |m| {
            if pairs.validation.is_empty() {
                return Ok(None);
            }
            let (acc, loss) = pair_accuracy(m, &pairs.validation)?;
            Ok(Some(Validation { metric: acc, loss, extra: BTreeMap::new() }))
        },
    )?;
    report.metrics.insert("train_accuracy".into(), pair_accuracy(&model, train)?.0);
    if !pairs.validation.is_empty() {
        report.metrics.insert("validation_accuracy".into(), pair_accuracy(&model, &pairs.validation)?.0);
    }
    if !pairs.test.is_empty() {
        report.metrics.insert("test_accuracy".into(), pair_accuracy(&model, &pairs.test)?.0);
    }
    Ok((model, report))
}

/// Same-versus-different activity scorer over pairs from different users.
pub fn train_action_similarity(
    pairs: &PairSets,
    cfg: &TrainConfig,
    model_cfg: &EncoderConfig,
) -> Result<(SimilarityModel<Weight>, TrainReport)> {
    train_similarity("action-sim", pairs, cfg, model_cfg)
}

/// Same-versus-different user scorer over pairs of different activities.
pub fn train_user_similarity(
    pairs: &PairSets,
    cfg: &TrainConfig,
    model_cfg: &EncoderConfig,
) -> Result<(SimilarityModel<Weight>, TrainReport)> {
    train_similarity("user-sim", pairs, cfg, model_cfg)
}
