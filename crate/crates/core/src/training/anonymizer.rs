use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2};

use super::config::{fit, stage_rng, TrainConfig, TrainReport, Validation};
use super::{require_zscored_all, warm_up, weight_digest};
use crate::dataset::AnonTrainSample;
use crate::error::{Error, Result};
use crate::models::{Anonymizer, AnonymizerConfig, NoiseVector, SimilarityModel};
use crate::nn::loss::mse;
use crate::{Weight, Window};

/// Anonymizer pair pools; validation drives the learning-rate schedule only.
#[derive(Debug, Clone, Default)]
pub struct AnonSets {
    pub train: Vec<AnonTrainSample>,
    pub validation: Vec<AnonTrainSample>,
}

/// Forward with first-frame warm-up; returns the trace and the window-aligned output.
fn warm_forward(
    anon: &Anonymizer<Weight>,
    x: &ArrayView2<'_, Weight>,
    noise: &NoiseVector<Weight>,
) -> Result<(Array2<Weight>, crate::models::AnonymizerTrace<Weight>, Array2<Weight>)> {
    let k = anon.kernel() - 1;
    let xw = warm_up(x, k);
    let trace = anon.forward(&xw.view(), noise)?;
    let out = trace.output().slice(s![k.., ..]).to_owned();
    Ok((xw, trace, out))
}

fn warm_backward(
    anon: &Anonymizer<Weight>,
    trace: &crate::models::AnonymizerTrace<Weight>,
    dout: &Array2<Weight>,
    grad: &mut Anonymizer<Weight>,
) {
    let k = anon.kernel() - 1;
    let mut d = Array2::zeros((dout.nrows() + k, dout.ncols()));
    d.slice_mut(s![k.., ..]).assign(dout);
    anon.backward(trace, &d.view(), grad);
}

/// Reconstruction pretraining with fresh random noise per step, for `cfg.pretrain_epochs`.
pub fn pretrain_anonymizer(
    windows: &[Arc<Window>],
    model_cfg: &AnonymizerConfig,
    cfg: &TrainConfig,
) -> Result<(Anonymizer<Weight>, TrainReport)> {
    require_zscored_all(windows.iter().map(|w| &**w))?;
    if windows.is_empty() {
        return Err(Error::InvalidInput("pretraining needs windows".into()));
    }
    let mut rng = stage_rng(cfg.seed, "anonymizer-pretrain");
    let mut model = Anonymizer::new(&mut rng, model_cfg)?;
    let nd = model.noise_dim();
    let mut report = fit(
        &mut model,
        "anonymizer-pretrain",
        windows.len(),
        cfg.pretrain_epochs.max(1),
        false,
        cfg,
        &mut rng,
        |m, i, g, rng| {
            let x = windows[i].view();
            let noise = NoiseVector::sample(rng, nd);
            let (_, trace, out) = warm_forward(m, &x, &noise)?;
            let (loss, d) = mse(&out.view(), &x);
            warm_backward(m, &trace, &d, g);
            Ok(loss as f64)
        },
        |_| Ok(None),
    )?;
    let mut eval_rng = stage_rng(cfg.seed, "anonymizer-pretrain-eval");
    let (mut err, mut var) = (0.0, 0.0);
    for w in windows {
        let noise = NoiseVector::sample(&mut eval_rng, nd);
        let (_, _, out) = warm_forward(&model, &w.view(), &noise)?;
        err += mse(&out.view(), &w.view()).0 as f64;
        var += w.view().mapv(|v| (v * v) as f64).mean().unwrap_or(0.0);
    }
    report.metrics.insert("reconstruction_mse".into(), err / windows.len() as f64);
    report.metrics.insert("relative_mse".into(), err / var.max(f64::MIN_POSITIVE));
    Ok((model, report))
}

/// Per-sample outcome of the adversarial objective.
struct Objective {
    loss: f64,
    action_hits: usize,
    user_hit: bool,
}

struct Frozen<'a> {
    action: &'a SimilarityModel<Weight>,
    user: &'a SimilarityModel<Weight>,
    alpha: Weight,
    beta: Weight,
}

impl Frozen<'_> {
    /// Loss and, when `grad` is given, anonymizer gradients for one sample.
    fn step(
        &self,
        anon: &Anonymizer<Weight>,
        s: &AnonTrainSample,
        input_emb: &(Array1<Weight>, Array1<Weight>),
        grad: Option<&mut Anonymizer<Weight>>,
    ) -> Result<Objective> {
        let (_, ta, out_a) = warm_forward(anon, &s.window_a.view(), &s.noise_a)?;
        let (_, tb, out_b) = warm_forward(anon, &s.window_b.view(), &s.noise_b)?;
        let mut d_a = Array2::<Weight>::zeros(out_a.dim());
        let mut d_b = Array2::<Weight>::zeros(out_b.dim());
        let mut loss = 0.0;
        let mut action_hits = 0;
        let want = grad.is_some();
        for (inp, out, d) in [(&input_emb.0, &out_a, &mut d_a), (&input_emb.1, &out_b, &mut d_b)] {
            let (eo, trace) = self.action.encoder.forward(&out.view())?;
            let h = self.action.head_backward(&inp.view(), &eo.0.view(), 1.0, None);
            loss += (self.alpha * h.loss) as f64;
            action_hits += usize::from(h.logit > 0.0);
            if want && self.alpha > 0.0 {
                let dx = self.action.encoder.backward(&out.view(), &trace, &(h.d_b * self.alpha).view(), None);
                *d += &dx;
            }
        }
        let target: Weight = if s.noise_equal { 1.0 } else { 0.0 };
        let (ua, tua) = self.user.encoder.forward(&out_a.view())?;
        let (ub, tub) = self.user.encoder.forward(&out_b.view())?;
        let h = self.user.head_backward(&ua.0.view(), &ub.0.view(), target, None);
        loss += (self.beta * h.loss) as f64;
        let user_hit = (h.logit > 0.0) == s.noise_equal;
        if let Some(g) = grad {
            if self.beta > 0.0 {
                d_a += &self.user.encoder.backward(&out_a.view(), &tua, &(h.d_a * self.beta).view(), None);
                d_b += &self.user.encoder.backward(&out_b.view(), &tub, &(h.d_b * self.beta).view(), None);
            }
            warm_backward(anon, &ta, &d_a, g);
            warm_backward(anon, &tb, &d_b, g);
        }
        Ok(Objective { loss, action_hits, user_hit })
    }
}

fn input_embeddings(
    action: &SimilarityModel<Weight>,
    samples: &[AnonTrainSample],
) -> Result<Vec<(Array1<Weight>, Array1<Weight>)>> {
    samples
        .iter()
        .map(|s| Ok((action.embed(&s.window_a.view())?.0, action.embed(&s.window_b.view())?.0)))
        .collect()
}

fn evaluate(
    frozen: &Frozen<'_>,
    anon: &Anonymizer<Weight>,
    samples: &[AnonTrainSample],
    embs: &[(Array1<Weight>, Array1<Weight>)],
) -> Result<Validation> {
    let (mut loss, mut action, mut user) = (0.0, 0usize, 0usize);
    for (s, e) in samples.iter().zip(embs) {
        let o = frozen.step(anon, s, e, None)?;
        loss += o.loss;
        action += o.action_hits;
        user += usize::from(o.user_hit);
    }
    let n = samples.len() as f64;
    let mut extra = BTreeMap::new();
    extra.insert("action_agreement".into(), action as f64 / (2.0 * n));
    extra.insert("user_agreement".into(), user as f64 / n);
    Ok(Validation { metric: -loss / n, loss: loss / n, extra })
}

/// Adversarial training against frozen action and user similarity models.
///
/// Minimizes `alpha * [BCE(action(in_A, out_A), 1) + BCE(action(in_B, out_B), 1)]
/// + beta * BCE(user(out_A, out_B), noise_equal)` for `cfg.max_epochs` epochs.
pub fn train_anonymizer(
    pretrained: Anonymizer<Weight>,
    sets: &AnonSets,
    action_sim: &SimilarityModel<Weight>,
    user_sim: &SimilarityModel<Weight>,
    cfg: &TrainConfig,
) -> Result<(Anonymizer<Weight>, TrainReport)> {
    for set in [&sets.train, &sets.validation] {
        require_zscored_all(set.iter().flat_map(|p| [&*p.window_a, &*p.window_b]))?;
    }
    if std::ptr::eq(action_sim, user_sim) {
        return Err(Error::Config("action and user similarity must be distinct models".into()));
    }
    for (name, m) in [("action", action_sim), ("user", user_sim)] {
        if m.config().input_dim != pretrained.channels() {
            return Err(Error::Config(format!("{name} similarity input does not match anonymizer channels")));
        }
    }
    let before = (weight_digest(action_sim), weight_digest(user_sim));
    let frozen = Frozen {
        action: action_sim,
        user: user_sim,
        alpha: cfg.alpha_action as Weight,
        beta: cfg.beta_user as Weight,
    };
    let train_emb = input_embeddings(action_sim, &sets.train)?;
    let val_emb = input_embeddings(action_sim, &sets.validation)?;
    let mut model = pretrained;
    let mut rng = stage_rng(cfg.seed, "anonymizer");
    let mut report = fit(
        &mut model,
        "anonymizer",
        sets.train.len(),
        cfg.max_epochs,
        false,
        cfg,
        &mut rng,
        |m, i, g, rng| {
            let s = &sets.train[i];
            if !cfg.redraw_noise {
                return Ok(frozen.step(m, s, &train_emb[i], Some(g))?.loss);
            }
            let mut fresh = s.clone();
            fresh.noise_a = NoiseVector::sample(rng, s.noise_a.len());
            fresh.noise_b = if s.noise_equal { fresh.noise_a.clone() } else { NoiseVector::sample(rng, s.noise_b.len()) };
            Ok(frozen.step(m, &fresh, &train_emb[i], Some(g))?.loss)
        },
        |m| {
            if sets.validation.is_empty() {
                return Ok(None);
            }
            evaluate(&frozen, m, &sets.validation, &val_emb).map(Some)
        },
    )?;
    if (weight_digest(action_sim), weight_digest(user_sim)) != before {
        return Err(Error::Config("frozen similarity weights changed during anonymizer training".into()));
    }
    let train_eval = evaluate(&frozen, &model, &sets.train, &train_emb)?;
    for (k, v) in train_eval.extra {
        report.metrics.insert(format!("train_{k}"), v);
    }
    if !sets.validation.is_empty() {
        let v = evaluate(&frozen, &model, &sets.validation, &val_emb)?;
        for (k, val) in v.extra {
            report.metrics.insert(format!("validation_{k}"), val);
        }
    }
    Ok((model, report))
}
