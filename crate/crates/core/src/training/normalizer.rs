use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{fit, stage_rng, TrainConfig, TrainReport, Validation};
use super::require_zscored_all;
use crate::error::{Error, Result};
use crate::models::{Anonymizer, NoiseVector, Normalizer, NormalizerConfig, PopulationShift};
use crate::motion::{DimensionStats, STD_FLOOR};
use crate::nn::loss::mse;
use crate::runtime::anonymize_zscored;
use crate::{Weight, Window};

/// Anonymized input and its original target, both in z-space.
#[derive(Debug, Clone)]
pub struct NormalizerPair {
    pub anonymized: Array2<Weight>,
    pub original: Arc<Window>,
}

/// Runs the deployed anonymizer plus shift over each window with its own random noise.
pub fn build_normalizer_pairs(
    anon: &Anonymizer<Weight>,
    shift: &PopulationShift,
    windows: &[Arc<Window>],
    seed: u64,
) -> Result<Vec<NormalizerPair>> {
    require_zscored_all(windows.iter().map(|w| &**w))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    windows
        .iter()
        .map(|w| {
            let noise = NoiseVector::sample(&mut rng, anon.noise_dim());
            Ok(NormalizerPair { anonymized: anonymize_zscored(anon, shift, &w.view(), &noise)?, original: w.clone() })
        })
        .collect()
}

/// Mean z-space MSE to the originals before and after normalization.
pub fn normalizer_mse(model: &Normalizer<Weight>, pairs: &[NormalizerPair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no normalizer pairs".into()));
    }
    let (mut before, mut after) = (0.0, 0.0);
    for p in pairs {
        before += mse(&p.anonymized.view(), &p.original.view()).0 as f64;
        let y = model.infer(&p.anonymized.view())?;
        after += mse(&y.view(), &p.original.view()).0 as f64;
    }
    let n = pairs.len() as f64;
    Ok((before / n, after / n))
}

/// Regression from anonymized to original motion. The normalizer never sees the noise.
pub fn train_normalizer(
    train: &[NormalizerPair],
    validation: &[NormalizerPair],
    model_cfg: &NormalizerConfig,
    cfg: &TrainConfig,
) -> Result<(Normalizer<Weight>, TrainReport)> {
    let mut rng = stage_rng(cfg.seed, "normalizer");
    let mut model = Normalizer::new(&mut rng, model_cfg)?;
    let mut report = fit(
        &mut model,
        "normalizer",
        train.len(),
        cfg.max_epochs,
        !validation.is_empty(),
        cfg,
        &mut rng,
        |m, i, g, _| {
            let p = &train[i];
            let x = p.anonymized.view();
            let trace = m.forward(&x)?;
            let (loss, d) = mse(&trace.output().view(), &p.original.view());
            m.backward(&x, &trace, &d.view(), g);
            Ok(loss as f64)
        },
        |m| {
            if validation.is_empty() {
                return Ok(None);
            }
            let (before, after) = normalizer_mse(m, validation)?;
            let mut extra = BTreeMap::new();
            extra.insert("improvement".into(), before / after.max(f64::MIN_POSITIVE));
            Ok(Some(Validation { metric: -after, loss: after, extra }))
        },
    )?;
    let eval = if validation.is_empty() { train } else { validation };
    let (before, after) = normalizer_mse(&model, eval)?;
    report.metrics.insert("mse_before".into(), before);
    report.metrics.insert("mse_after".into(), after);
    report.metrics.insert("improvement_factor".into(), before / after.max(f64::MIN_POSITIVE));
    Ok((model, report))
}

/// Affine map taking the anonymized corpus statistics to the original ones.
///
/// Degenerate anonymized dimensions are clamped to the std floor with a warning.
pub fn fit_population_shift<'a>(
    original: impl IntoIterator<Item = ArrayView2<'a, Weight>>,
    anonymized: impl IntoIterator<Item = ArrayView2<'a, Weight>>,
) -> Result<PopulationShift> {
    let original = DimensionStats::fit_arrays(original)?;
    let anonymized = DimensionStats::fit_arrays(anonymized)?;
    for (c, s) in anonymized.std().iter().enumerate() {
        if *s <= STD_FLOOR {
            log::warn!("population shift: anonymized column {c} is constant; std clamped to {STD_FLOOR}");
        }
    }
    Ok(PopulationShift { anonymized, original })
}
