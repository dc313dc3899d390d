use std::collections::BTreeMap;

use ndarray::Array2;

use super::config::{fit, stage_rng, TrainConfig, TrainReport, Validation};
use super::require_zscored_all;
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::models::{Classifier, ClassifierConfig};
use crate::motion::{select_features, FeatureSubset};
use crate::Weight;

struct Labeled {
    x: Vec<Array2<Weight>>,
    y: Vec<usize>,
}

fn labeled(ds: &Dataset, split: Split, users: &[String], fs: &FeatureSubset) -> Result<Labeled> {
    let mut out = Labeled { x: Vec::new(), y: Vec::new() };
    for i in ds.manifest().indices_in(split) {
        let user = &ds.manifest().entries()[i].meta.user_id;
        let Ok(label) = users.binary_search(user) else {
            return Err(Error::InvalidInput(format!("user {user} has no training windows")));
        };
        out.x.push(select_features(&ds.windows()[i], fs)?);
        out.y.push(label);
    }
    Ok(out)
}

fn evaluate(model: &Classifier<Weight>, data: &Labeled) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        let lp = model.log_probabilities(&x.view())?;
        let best = lp.iter().enumerate().fold(0, |b, (i, v)| if *v > lp[b] { i } else { b });
        correct += usize::from(best == y);
        loss -= lp[y] as f64;
    }
    let n = data.x.len().max(1) as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Softmax identifier over the users present in the training split.
///
/// Uses the Train, Validation and Test splits of `ds`; validation accuracy
/// drives early stopping and the learning-rate schedule.
pub fn train_identifier(
    ds: &Dataset,
    cfg: &TrainConfig,
    model_cfg: &ClassifierConfig,
    subset: &FeatureSubset,
) -> Result<(Classifier<Weight>, TrainReport)> {
    require_zscored_all(ds.windows().iter().map(|w| &**w))?;
    if model_cfg.encoder.input_dim != subset.len() {
        return Err(Error::Config(format!(
            "encoder input {} does not match feature subset of {}",
            model_cfg.encoder.input_dim,
            subset.len()
        )));
    }
    let train_idx = ds.manifest().indices_in(Split::Train);
    let mut users: Vec<String> = train_idx.iter().map(|&i| ds.manifest().entries()[i].meta.user_id.clone()).collect();
    users.sort();
    users.dedup();
    if users.len() < 2 {
        return Err(Error::Training(format!("identifier needs at least 2 users, found {}", users.len())));
    }
    let train = labeled(ds, Split::Train, &users, subset)?;
    let val = labeled(ds, Split::Validation, &users, subset)?;
    let test = labeled(ds, Split::Test, &users, subset)?;
    let mut rng = stage_rng(cfg.seed, "identifier");
    let mut model = Classifier::new(&mut rng, model_cfg, users)?;
    let mut report = fit(
        &mut model,
        "identifier",
        train.x.len(),
        cfg.max_epochs,
        !val.x.is_empty(),
        cfg,
        &mut rng,
        |m, i, g, _| Ok(m.loss_backward(&train.x[i].view(), train.y[i], g)?.0 as f64),
        |m| {
            if val.x.is_empty() {
                return Ok(None);
            }
            let (acc, loss) = evaluate(m, &val)?;
            Ok(Some(Validation { metric: acc, loss, extra: BTreeMap::new() }))
        },
    )?;
    let (train_acc, _) = evaluate(&model, &train)?;
    report.metrics.insert("train_accuracy".into(), train_acc);
    if !val.x.is_empty() {
        report.metrics.insert("validation_accuracy".into(), evaluate(&model, &val)?.0);
    }
    if !test.x.is_empty() {
        report.metrics.insert("test_accuracy".into(), evaluate(&model, &test)?.0);
    }
    Ok((model, report))
}
