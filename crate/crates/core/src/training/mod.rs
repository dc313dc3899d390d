//! Training procedures for every network, plus population-shift fitting.
//!
//! All windows are z-scored. Anything feeding the anonymizer is prefixed
//! with copies of its first frame, matching the deployed warm-up.

mod anonymizer;
mod config;
mod identifier;
mod normalizer;
mod similarity;

pub use anonymizer::{pretrain_anonymizer, train_anonymizer, AnonSets};
pub use config::{EpochRecord, TrainConfig, TrainReport};
pub use identifier::train_identifier;
pub use normalizer::{build_normalizer_pairs, fit_population_shift, normalizer_mse, train_normalizer, NormalizerPair};
pub use similarity::{pair_accuracy, train_action_similarity, train_user_similarity, PairSets};

use ndarray::{s, Array2, ArrayView2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{flatten, Module};
use crate::scalar::Scalar;
use crate::Window;

/// Prepends `k` copies of the first row.
pub(crate) fn warm_up<T: Scalar>(x: &ArrayView2<'_, T>, k: usize) -> Array2<T> {
    let (n, c) = x.dim();
    let mut out = Array2::zeros((n + k, c));
    for mut row in out.slice_mut(s![..k, ..]).rows_mut() {
        row.assign(&x.row(0));
    }
    out.slice_mut(s![k.., ..]).assign(x);
    out
}

pub(crate) fn require_zscored_all<'a>(windows: impl IntoIterator<Item = &'a Window>) -> Result<()> {
    if windows.into_iter().any(|w| !w.is_zscored()) {
        return Err(Error::InvalidInput("training expects z-scored windows".into()));
    }
    Ok(())
}

/// SHA-256 over a module's parameters in visit order.
pub fn weight_digest<T: Scalar, M: Module<T>>(m: &M) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in flatten(m) {
        h.update(v.as_f64().to_le_bytes());
    }
    h.finalize().into()
}
