use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::featurize_summary_stats;
use super::forest::TabularClassifier;
use super::scenario::AdversaryScenario;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::motion::{select_features, zscore_apply, DimensionStats, FeatureSubset};
use crate::{Weight, Window};

/// Anything that yields per-user log-probabilities for a motion-space window.
pub trait WindowIdentifier {
    fn labels(&self) -> &[String];
    fn log_probabilities(&self, w: &Window) -> Result<Vec<f64>>;
}

/// LSTM funnel classifier with its own z-scoring statistics and feature subset.
#[derive(Debug, Clone)]
pub struct FunnelIdentifier {
    pub classifier: Classifier<Weight>,
    pub stats: DimensionStats,
    pub subset: FeatureSubset,
}

impl WindowIdentifier for FunnelIdentifier {
    fn labels(&self) -> &[String] {
        self.classifier.labels()
    }

    fn log_probabilities(&self, w: &Window) -> Result<Vec<f64>> {
        let z = if w.is_zscored() { w.clone() } else { zscore_apply(w, &self.stats)? };
        let x = select_features(&z, &self.subset)?;
        Ok(self.classifier.log_probabilities(&x.view())?.iter().map(|v| *v as f64).collect())
    }
}

/// Tabular model over one-second summary rows; a window sums its chunks' log-probabilities.
pub struct TabularIdentifier<C> {
    pub model: C,
    pub labels: Vec<String>,
}

/// Probability floor before taking logarithms of tabular votes.
const PROB_FLOOR: f64 = 1e-6;

impl<C: TabularClassifier> WindowIdentifier for TabularIdentifier<C> {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn log_probabilities(&self, w: &Window) -> Result<Vec<f64>> {
        let feats = featurize_summary_stats(w);
        let mut lp = vec![0.0; self.labels.len()];
        for row in feats.rows() {
            for (a, p) in lp.iter_mut().zip(self.model.predict_proba(&row)) {
                *a += p.max(PROB_FLOOR).ln();
            }
        }
        Ok(lp)
    }
}

/// Outcome for one user in an identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user: String,
    pub samples: usize,
    pub correct: usize,
    /// Argmax of the summed log-probabilities over this user's windows.
    pub aggregate_prediction: String,
    /// Most frequent wrong per-sample prediction.
    pub most_confused_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkabilityReport {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<AdversaryScenario>,
    pub per_sample_accuracy: f64,
    pub per_user_accuracy: f64,
    pub samples: usize,
    pub users: usize,
    /// One over the number of enrolled users.
    pub chance: f64,
    pub confusion: Vec<UserOutcome>,
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
}

/// Per-user aggregate: argmax of summed log-probabilities for each user's windows.
///
/// Returns `(user label, predicted label)` for every user present in `truth`.
pub fn aggregate_per_user(log_probs: &[Vec<f64>], truth: &[usize]) -> Vec<(usize, usize)> {
    let mut sums: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (lp, &t) in log_probs.iter().zip(truth) {
        let s = sums.entry(t).or_insert_with(|| vec![0.0; lp.len()]);
        s.iter_mut().zip(lp).for_each(|(a, b)| *a += b);
    }
    sums.into_iter().map(|(u, s)| (u, argmax(&s))).collect()
}

/// Per-sample and per-user identification accuracy on labelled windows.
pub fn eval_identification(
    model: &dyn WindowIdentifier,
    samples: &[(Arc<Window>, String)],
    label: &str,
) -> Result<LinkabilityReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let labels = model.labels();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut truth = Vec::with_capacity(samples.len());
    let mut lps = Vec::with_capacity(samples.len());
    for (w, user) in samples {
        let Some(&t) = index.get(user.as_str()) else {
            return Err(Error::InvalidInput(format!("user {user} is not enrolled in the identifier")));
        };
        let lp = model.log_probabilities(w)?;
        if lp.len() != labels.len() {
            return Err(Error::shape(labels.len(), lp.len()));
        }
        truth.push(t);
        lps.push(lp);
    }
    let preds: Vec<usize> = lps.iter().map(|lp| argmax(lp)).collect();
    let correct = preds.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let agg = aggregate_per_user(&lps, &truth);
    let users_right = agg.iter().filter(|(u, p)| u == p).count();
    let confusion = agg
        .iter()
        .map(|&(u, p)| {
            let mut wrong: BTreeMap<usize, usize> = BTreeMap::new();
            let mut n = 0;
            let mut ok = 0;
            for (&t, &q) in truth.iter().zip(&preds) {
                if t == u {
                    n += 1;
                    if q == u {
                        ok += 1;
                    } else {
                        *wrong.entry(q).or_default() += 1;
                    }
                }
            }
            let most = wrong.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(l, _)| labels[*l].clone());
            UserOutcome {
                user: labels[u].clone(),
                samples: n,
                correct: ok,
                aggregate_prediction: labels[p].clone(),
                most_confused_with: most,
            }
        })
        .collect();
    Ok(LinkabilityReport {
        label: label.to_string(),
        scenario: None,
        per_sample_accuracy: correct as f64 / samples.len() as f64,
        per_user_accuracy: users_right as f64 / agg.len() as f64,
        samples: samples.len(),
        users: agg.len(),
        chance: 1.0 / labels.len() as f64,
        confusion,
    })
}
