//! Pair samplers for the similarity and anonymizer training regimes.
//!
//! Pairs are distinct as unordered recording pairs. Sparse requests use
//! rejection sampling; dense ones enumerate the candidates and shuffle.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::format::RecordingMeta;
use super::store::Dataset;
use crate::error::{Error, Result};
use crate::models::NoiseVector;
use crate::{Weight, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Same,
    Different,
}

impl PairLabel {
    pub fn target(self) -> f64 {
        match self {
            PairLabel::Same => 1.0,
            PairLabel::Different => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairSample {
    pub window_a: Arc<Window>,
    pub window_b: Arc<Window>,
    pub label: PairLabel,
    pub meta_a: RecordingMeta,
    pub meta_b: RecordingMeta,
}

#[derive(Debug, Clone)]
pub struct AnonTrainSample {
    pub window_a: Arc<Window>,
    pub window_b: Arc<Window>,
    pub meta_a: RecordingMeta,
    pub meta_b: RecordingMeta,
    pub noise_a: NoiseVector<Weight>,
    pub noise_b: NoiseVector<Weight>,
    pub noise_equal: bool,
}

/// Which metadata field is the label and which must always differ.
#[derive(Clone, Copy)]
struct Roles {
    label: fn(&RecordingMeta) -> &str,
    differ: fn(&RecordingMeta) -> &str,
}

const ACTION: Roles = Roles { label: |m| &m.activity_id, differ: |m| &m.user_id };
const USER: Roles = Roles { label: |m| &m.user_id, differ: |m| &m.activity_id };

fn choose2(n: usize) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

fn counts<'a>(metas: &'a [&'a RecordingMeta], key: impl Fn(&RecordingMeta) -> String) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for x in metas {
        *m.entry(key(x)).or_insert(0) += 1;
    }
    m
}

/// Number of (same-label, different-label) unordered pairs whose `differ` fields differ.
fn feasible(metas: &[&RecordingMeta], r: Roles) -> (u128, u128) {
    let pair_sum = |c: BTreeMap<String, usize>| c.values().map(|&n| choose2(n)).sum::<u128>();
    let label = pair_sum(counts(metas, |m| (r.label)(m).to_string()));
    let differ = pair_sum(counts(metas, |m| (r.differ)(m).to_string()));
    let both = pair_sum(counts(metas, |m| format!("{}\u{0}{}", (r.label)(m), (r.differ)(m))));
    let all = choose2(metas.len());
    let same = label - both;
    let valid = all - differ;
    (same, valid - same)
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn draw(
    metas: &[&RecordingMeta],
    r: Roles,
    want_same: bool,
    n: usize,
    available: u128,
    used: &mut HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let ok = |a: usize, b: usize| {
        a != b
            && (r.differ)(metas[a]) != (r.differ)(metas[b])
            && ((r.label)(metas[a]) == (r.label)(metas[b])) == want_same
    };
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    // Rejection sampling while candidates are plentiful, enumeration otherwise.
    if (n as u128) * 4 <= available {
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, m) in metas.iter().enumerate() {
            by_label.entry((r.label)(m)).or_default().push(i);
        }
        let budget = 200 * n + 10_000;
        for _ in 0..budget {
            if out.len() == n {
                return out;
            }
            let a = rng.random_range(0..metas.len());
            let b = if want_same {
                let group = &by_label[(r.label)(metas[a])];
                group[rng.random_range(0..group.len())]
            } else {
                rng.random_range(0..metas.len())
            };
            if ok(a, b) && used.insert(key(a, b)) {
                out.push((a, b));
            }
        }
    }
    let mut all: Vec<(usize, usize)> = (0..metas.len())
        .flat_map(|a| (a + 1..metas.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| ok(a, b) && !used.contains(&(a, b)))
        .collect();
    all.shuffle(rng);
    for p in all.into_iter().take(n - out.len()) {
        used.insert(p);
        out.push(p);
    }
    out
}

fn sample_pairs(ds: &Dataset, n_same: usize, n_diff: usize, seed: u64, r: Roles, what: &str) -> Result<Vec<PairSample>> {
    let metas: Vec<&RecordingMeta> = ds.manifest().entries().iter().map(|e| &e.meta).collect();
    let (same, diff) = feasible(&metas, r);
    if n_same as u128 > same || n_diff as u128 > diff {
        return Err(Error::Sampling(format!(
            "{what} pairs: requested {n_same} same / {n_diff} different, only {same} / {diff} exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let same_pairs = draw(&metas, r, true, n_same, same, &mut used, &mut rng);
    let diff_pairs = draw(&metas, r, false, n_diff, diff, &mut used, &mut rng);
    let mut out: Vec<PairSample> = same_pairs
        .into_iter()
        .map(|p| (p, PairLabel::Same))
        .chain(diff_pairs.into_iter().map(|p| (p, PairLabel::Different)))
        .map(|((a, b), label)| PairSample {
            window_a: ds.windows()[a].clone(),
            window_b: ds.windows()[b].clone(),
            label,
            meta_a: metas[a].clone(),
            meta_b: metas[b].clone(),
        })
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Cross-user pairs labeled by whether the activity matches.
pub fn sample_action_pairs(ds: &Dataset, n_same: usize, n_diff: usize, seed: u64) -> Result<Vec<PairSample>> {
    sample_pairs(ds, n_same, n_diff, seed, ACTION, "action")
}

/// Cross-activity pairs labeled by whether the user matches.
pub fn sample_user_pairs(ds: &Dataset, n_same: usize, n_diff: usize, seed: u64) -> Result<Vec<PairSample>> {
    sample_pairs(ds, n_same, n_diff, seed, USER, "user")
}

/// Same-user recording pairs; the first `n / 2` drawn share one noise vector.
pub fn sample_anonymizer_pairs(ds: &Dataset, n: usize, noise_dim: usize, seed: u64) -> Result<Vec<AnonTrainSample>> {
    if noise_dim == 0 {
        return Err(Error::Sampling("noise dimension must be positive".into()));
    }
    let metas: Vec<&RecordingMeta> = ds.manifest().entries().iter().map(|e| &e.meta).collect();
    let available: u128 = ds.manifest().by_user().values().map(|v| choose2(v.len())).sum();
    if n as u128 > available {
        return Err(Error::Sampling(format!("anonymizer pairs: requested {n}, only {available} same-user pairs exist")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut pairs = Vec::with_capacity(n);
    let by_user = ds.manifest().by_user();
    if (n as u128) * 4 <= available {
        let eligible: Vec<&Vec<usize>> = by_user.values().filter(|v| v.len() >= 2).collect();
        // Weight users by their pair count so every pair is equally likely.
        let weights: Vec<u128> = eligible.iter().map(|v| choose2(v.len())).collect();
        let total: u128 = weights.iter().sum();
        let mut tries = 0;
        while pairs.len() < n && tries < 200 * n + 10_000 {
            tries += 1;
            let mut pick = rng.random_range(0..total);
            let mut g = 0;
            while pick >= weights[g] {
                pick -= weights[g];
                g += 1;
            }
            let v = eligible[g];
            let (a, b) = (v[rng.random_range(0..v.len())], v[rng.random_range(0..v.len())]);
            if a != b && used.insert(key(a, b)) {
                pairs.push((a, b));
            }
        }
    }
    if pairs.len() < n {
        let mut rest: Vec<(usize, usize)> = by_user
            .values()
            .flat_map(|v| v.iter().enumerate().flat_map(move |(k, &a)| v[k + 1..].iter().map(move |&b| key(a, b))))
            .filter(|p| !used.contains(p))
            .collect();
        rest.shuffle(&mut rng);
        let k = n - pairs.len();
        pairs.extend(rest.into_iter().take(k));
    }
    let mut out: Vec<AnonTrainSample> = pairs
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let noise_equal = k < n / 2;
            let noise_a = NoiseVector::sample(&mut rng, noise_dim);
            let noise_b = if noise_equal { noise_a.clone() } else { NoiseVector::sample(&mut rng, noise_dim) };
            AnonTrainSample {
                window_a: ds.windows()[a].clone(),
                window_b: ds.windows()[b].clone(),
                meta_a: metas[a].clone(),
                meta_b: metas[b].clone(),
                noise_a,
                noise_b,
                noise_equal,
            }
        })
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}
