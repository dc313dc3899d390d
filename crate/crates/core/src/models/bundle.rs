//! Versioned on-disk container for trained networks.
//!
//! Layout:
//!
//! ```text
//! magic      8 bytes  "DMMBNDL\0"
//! version    u32 LE
//! header_len u64 LE
//! header     JSON (configs, statistics, tensor directory, payload digest)
//! payload    f32 LE, row-major, tensors at the offsets listed in the header
//! ```
//!
//! Offsets and lengths in the tensor directory count `f32` elements.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayViewMut1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::anonymizer::Anonymizer;
use super::classifier::Classifier;
use super::config::{AnonymizerConfig, ClassifierConfig, EncoderConfig, NormalizerConfig};
use super::normalizer::Normalizer;
use super::similarity::SimilarityModel;
use crate::error::{Error, Result};
use crate::motion::{DimensionStats, NormalizedWindow, FRAME_DIM};
use crate::nn::Module;
use crate::persist::write_atomic;
use crate::scalar::Scalar;

pub const BUNDLE_MAGIC: &[u8; 8] = b"DMMBNDL\0";
pub const BUNDLE_VERSION: u32 = 1;
const CELL: &str = "lstm gates=i,f,g,o sigmoid/tanh forget_bias=1";
const MAX_DIM: usize = 1 << 16;

/// Per-dimension affine map in z-space from anonymized to unmodified population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationShift {
    pub anonymized: DimensionStats,
    pub original: DimensionStats,
}

impl Default for PopulationShift {
    fn default() -> Self {
        Self::identity()
    }
}

impl PopulationShift {
    pub fn identity() -> Self {
        Self { anonymized: DimensionStats::identity(), original: DimensionStats::identity() }
    }

    pub fn is_identity(&self) -> bool {
        self.anonymized == self.original
    }

    pub fn apply_row<T: Scalar>(&self, row: ArrayViewMut1<'_, T>) {
        DimensionStats::shift_row(&self.anonymized, &self.original, row);
    }

    pub fn apply_window<T: Scalar>(&self, w: &NormalizedWindow<T>) -> Result<NormalizedWindow<T>> {
        if w.data().ncols() != FRAME_DIM {
            return Err(Error::shape(FRAME_DIM, w.data().ncols()));
        }
        let mut d = w.data().clone();
        for row in d.axis_iter_mut(Axis(0)) {
            self.apply_row(row);
        }
        if w.is_zscored() {
            NormalizedWindow::from_zscored(d)
        } else {
            NormalizedWindow::from_motion(d)
        }
    }
}

/// Trained networks plus the statistics needed to run them.
///
/// Weights are stored as `f32`; a bundle of `f32` models round-trips bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub input_stats: DimensionStats,
    pub population_shift: PopulationShift,
    pub classifier: Option<Classifier<T>>,
    pub action_similarity: Option<SimilarityModel<T>>,
    pub user_similarity: Option<SimilarityModel<T>>,
    pub anonymizer: Option<Anonymizer<T>>,
    pub normalizer: Option<Normalizer<T>>,
}

/// Trainable parameter totals per component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub classifier: usize,
    pub action_similarity: usize,
    pub user_similarity: usize,
    pub anonymizer: usize,
    pub normalizer: usize,
    /// Everything deployed or used to train the defense; the attacker's classifier is excluded.
    pub system_total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierSpec {
    config: ClassifierConfig,
    labels: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Components {
    classifier: Option<ClassifierSpec>,
    action_similarity: Option<EncoderConfig>,
    user_similarity: Option<EncoderConfig>,
    anonymizer: Option<AnonymizerConfig>,
    normalizer: Option<NormalizerConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    cell: String,
    input_stats: DimensionStats,
    population_shift: PopulationShift,
    components: Components,
    tensors: Vec<TensorEntry>,
    payload_len: usize,
    payload_sha256: String,
}

impl<T: Scalar> Default for ModelBundle<T> {
    fn default() -> Self {
        Self::empty(DimensionStats::identity())
    }
}

impl<T: Scalar> ModelBundle<T> {
    pub fn empty(input_stats: DimensionStats) -> Self {
        Self {
            input_stats,
            population_shift: PopulationShift::identity(),
            classifier: None,
            action_similarity: None,
            user_similarity: None,
            anonymizer: None,
            normalizer: None,
        }
    }

    /// Untrained defense at full width: both similarity models, anonymizer, normalizer.
    pub fn default_architecture(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = EncoderConfig::default();
        let mut b = Self::empty(DimensionStats::identity());
        b.action_similarity = Some(SimilarityModel::new(&mut rng, &enc)?);
        b.user_similarity = Some(SimilarityModel::new(&mut rng, &enc)?);
        b.anonymizer = Some(Anonymizer::new(&mut rng, &AnonymizerConfig::default())?);
        b.normalizer = Some(Normalizer::new(&mut rng, &NormalizerConfig::default())?);
        Ok(b)
    }

    pub fn anonymizer(&self) -> Result<&Anonymizer<T>> {
        self.anonymizer.as_ref().ok_or_else(|| missing("anonymizer", "train anonymizer"))
    }

    pub fn normalizer(&self) -> Result<&Normalizer<T>> {
        self.normalizer.as_ref().ok_or_else(|| missing("normalizer", "train normalizer"))
    }

    pub fn classifier(&self) -> Result<&Classifier<T>> {
        self.classifier.as_ref().ok_or_else(|| missing("classifier", "train identifier"))
    }

    pub fn action_similarity(&self) -> Result<&SimilarityModel<T>> {
        self.action_similarity.as_ref().ok_or_else(|| missing("action similarity model", "train action-sim"))
    }

    pub fn user_similarity(&self) -> Result<&SimilarityModel<T>> {
        self.user_similarity.as_ref().ok_or_else(|| missing("user similarity model", "train user-sim"))
    }

    /// Copies every component present in `other` over this bundle's, along with statistics
    /// that differ from identity.
    pub fn merge(&mut self, other: ModelBundle<T>) {
        if !other.input_stats.is_identity() {
            self.input_stats = other.input_stats;
        }
        if !other.population_shift.is_identity() {
            self.population_shift = other.population_shift;
        }
        macro_rules! take {
            ($f:ident) => {
                if other.$f.is_some() {
                    self.$f = other.$f;
                }
            };
        }
        take!(classifier);
        take!(action_similarity);
        take!(user_similarity);
        take!(anonymizer);
        take!(normalizer);
    }

    pub fn parameter_report(&self) -> ParameterReport {
        fn count<T: Scalar, M: Module<T>>(m: &Option<M>) -> usize {
            m.as_ref().map_or(0, |m| m.param_count())
        }
        let action_similarity = count(&self.action_similarity);
        let user_similarity = count(&self.user_similarity);
        let anonymizer = count(&self.anonymizer);
        let normalizer = count(&self.normalizer);
        ParameterReport {
            classifier: count(&self.classifier),
            action_similarity,
            user_similarity,
            anonymizer,
            normalizer,
            system_total: action_similarity + user_similarity + anonymizer + normalizer,
        }
    }

    fn visit_all<'a>(&'a self, f: &mut dyn FnMut(String, ndarray::ArrayViewD<'a, T>)) {
        if let Some(m) = &self.classifier {
            m.visit("classifier", f);
        }
        if let Some(m) = &self.action_similarity {
            m.visit("action_similarity", f);
        }
        if let Some(m) = &self.user_similarity {
            m.visit("user_similarity", f);
        }
        if let Some(m) = &self.anonymizer {
            m.visit("anonymizer", f);
        }
        if let Some(m) = &self.normalizer {
            m.visit("normalizer", f);
        }
    }

    fn visit_all_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, ndarray::ArrayViewMutD<'a, T>)) {
        if let Some(m) = &mut self.classifier {
            m.visit_mut("classifier", f);
        }
        if let Some(m) = &mut self.action_similarity {
            m.visit_mut("action_similarity", f);
        }
        if let Some(m) = &mut self.user_similarity {
            m.visit_mut("user_similarity", f);
        }
        if let Some(m) = &mut self.anonymizer {
            m.visit_mut("anonymizer", f);
        }
        if let Some(m) = &mut self.normalizer {
            m.visit_mut("normalizer", f);
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload: Vec<u8> = Vec::new();
        let mut tensors = Vec::new();
        let mut offset = 0;
        self.visit_all(&mut |name, a| {
            tensors.push(TensorEntry { name, shape: a.shape().to_vec(), offset });
            offset += a.len();
            for v in a.iter() {
                payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        });
        let components = Components {
            classifier: self
                .classifier
                .as_ref()
                .map(|c| ClassifierSpec { config: c.config(), labels: c.labels().to_vec() }),
            action_similarity: self.action_similarity.as_ref().map(SimilarityModel::config),
            user_similarity: self.user_similarity.as_ref().map(SimilarityModel::config),
            anonymizer: self.anonymizer.as_ref().map(Anonymizer::config),
            normalizer: self.normalizer.as_ref().map(Normalizer::config),
        };
        let header = Header {
            cell: CELL.into(),
            input_stats: self.input_stats.clone(),
            population_shift: self.population_shift.clone(),
            components,
            tensors,
            payload_len: offset,
            payload_sha256: hex(&Sha256::digest(&payload)),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + header.len() + payload.len());
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Bundle(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != BUNDLE_MAGIC {
            return Err(bad("not a model bundle"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(Error::Bundle(format!("unsupported bundle version {version}, expected {BUNDLE_VERSION}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let hlen = usize::try_from(hlen).map_err(|_| bad("header length overflow"))?;
        let hend = 20usize.checked_add(hlen).filter(|e| *e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..hend]).map_err(|e| Error::Bundle(format!("bad header: {e}")))?;
        if header.cell != CELL {
            return Err(Error::Bundle(format!("unsupported recurrent cell '{}'", header.cell)));
        }
        let payload = &bytes[hend..];
        if header.payload_len.checked_mul(4) != Some(payload.len()) {
            return Err(bad("payload length does not match header"));
        }
        if hex(&Sha256::digest(payload)) != header.payload_sha256 {
            return Err(bad("payload checksum mismatch"));
        }
        check_dims(&header.components)?;
        let declared: usize = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>())
            .sum();
        if declared != header.payload_len {
            return Err(bad("tensor directory does not cover the payload"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = &header.components;
        let mut b = Self::empty(header.input_stats.clone());
        b.population_shift = header.population_shift.clone();
        if let Some(spec) = &c.classifier {
            b.classifier = Some(Classifier::new(&mut rng, &spec.config, spec.labels.clone())?);
        }
        if let Some(cfg) = &c.action_similarity {
            b.action_similarity = Some(SimilarityModel::new(&mut rng, cfg)?);
        }
        if let Some(cfg) = &c.user_similarity {
            b.user_similarity = Some(SimilarityModel::new(&mut rng, cfg)?);
        }
        if let Some(cfg) = &c.anonymizer {
            b.anonymizer = Some(Anonymizer::new(&mut rng, cfg)?);
        }
        if let Some(cfg) = &c.normalizer {
            b.normalizer = Some(Normalizer::new(&mut rng, cfg)?);
        }

        let mut dir: BTreeMap<&str, &TensorEntry> = header.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        if dir.len() != header.tensors.len() {
            return Err(bad("duplicate tensor names"));
        }
        let mut failure: Option<Error> = None;
        b.visit_all_mut(&mut |name, mut a| {
            if failure.is_some() {
                return;
            }
            let Some(entry) = dir.remove(name.as_str()) else {
                failure = Some(Error::Bundle(format!("missing tensor {name}")));
                return;
            };
            if entry.shape != a.shape() {
                failure = Some(Error::Bundle(format!("tensor {name} has shape {:?}, expected {:?}", entry.shape, a.shape())));
                return;
            }
            let start = entry.offset;
            match start.checked_add(a.len()).filter(|e| *e <= header.payload_len) {
                Some(_) => {
                    for (k, v) in a.iter_mut().enumerate() {
                        let p = (start + k) * 4;
                        let f = f32::from_le_bytes(payload[p..p + 4].try_into().unwrap());
                        *v = T::lit(f as f64);
                    }
                }
                None => failure = Some(Error::Bundle(format!("tensor {name} overruns the payload"))),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some(extra) = dir.keys().next() {
            return Err(Error::Bundle(format!("unexpected tensor {extra}")));
        }
        Ok(b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn missing(what: &str, cmd: &str) -> Error {
    Error::Config(format!("bundle has no {what}; run `{cmd}` first"))
}

fn check_dims(c: &Components) -> Result<()> {
    let mut dims: Vec<usize> = Vec::new();
    let enc = |e: &EncoderConfig, d: &mut Vec<usize>| d.extend([e.input_dim, e.frame_state_dim, e.embedding_dim, e.chunk_len]);
    if let Some(s) = &c.classifier {
        enc(&s.config.encoder, &mut dims);
        dims.extend(&s.config.hidden_dense_dims);
        dims.push(s.labels.len());
    }
    for e in [&c.action_similarity, &c.user_similarity].into_iter().flatten() {
        enc(e, &mut dims);
    }
    if let Some(a) = &c.anonymizer {
        dims.extend([a.channels, a.noise_dim, a.conv_filters, a.kernel]);
        dims.extend(&a.dense_dims);
    }
    if let Some(n) = &c.normalizer {
        dims.extend([n.channels, n.state_dim]);
    }
    if dims.iter().any(|d| *d > MAX_DIM) {
        return Err(Error::Bundle("implausible layer size in header".into()));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NoiseVector;
    use ndarray::Array2;

    fn small_bundle() -> ModelBundle<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let enc = EncoderConfig { frame_state_dim: 8, embedding_dim: 8, ..Default::default() };
        let mut b = ModelBundle::empty(DimensionStats::new(vec![0.5; 21], vec![2.0; 21]).unwrap());
        b.classifier = Some(
            Classifier::new(&mut rng, &ClassifierConfig { encoder: enc.clone(), hidden_dense_dims: vec![6] }, vec!["a".into(), "b".into()])
                .unwrap(),
        );
        b.action_similarity = Some(SimilarityModel::new(&mut rng, &enc).unwrap());
        b.anonymizer = Some(Anonymizer::new(&mut rng, &AnonymizerConfig::default()).unwrap());
        b.normalizer = Some(Normalizer::new(&mut rng, &NormalizerConfig { channels: 21, state_dim: 8 }).unwrap());
        b
    }

    fn probe() -> NormalizedWindow<f32> {
        NormalizedWindow::from_zscored(Array2::from_shape_fn((900, 21), |(r, c)| ((r * 21 + c) as f32 * 0.013).sin()))
            .unwrap()
    }

    #[test]
    fn round_trip_reproduces_inference_bitwise() {
        let b = small_bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bundle");
        b.save(&path).unwrap();
        let l = ModelBundle::<f32>::load(&path).unwrap();
        assert_eq!(l, b);
        let w = probe();
        let noise = NoiseVector::new(vec![0.25f32; 32]).unwrap();
        let a1 = b.anonymizer().unwrap().anonymize(&w, &noise).unwrap();
        let a2 = l.anonymizer().unwrap().anonymize(&w, &noise).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b.classifier().unwrap().classify(&w).unwrap(), l.classifier().unwrap().classify(&w).unwrap());
        assert!(l.user_similarity().is_err());
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let bytes = small_bundle().to_bytes().unwrap();
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x40;
        assert!(matches!(ModelBundle::<f32>::from_bytes(&flipped), Err(Error::Bundle(_))));
        let mut v = bytes.clone();
        v[8] = 9;
        let e = ModelBundle::<f32>::from_bytes(&v).unwrap_err();
        assert!(e.to_string().contains("version"));
        assert!(ModelBundle::<f32>::from_bytes(&bytes[..bytes.len() / 2]).is_err());
        assert!(ModelBundle::<f32>::from_bytes(b"garbage").is_err());
        let mut h = bytes.clone();
        h[25] ^= 0x01;
        assert!(ModelBundle::<f32>::from_bytes(&h).is_err());
    }

    #[test]
    fn default_architecture_matches_budget() {
        let r = ModelBundle::<f32>::default_architecture(0).unwrap().parameter_report();
        assert_eq!(r.anonymizer, 66_453);
        assert_eq!(r.normalizer, 290_069);
        assert_eq!(r.action_similarity, 809_984 + 2);
        assert_eq!(r.system_total, 2 * 809_986 + 66_453 + 290_069);
    }

    #[test]
    fn identity_shift_is_exact() {
        let w = probe();
        assert_eq!(PopulationShift::identity().apply_window(&w).unwrap(), w);
    }
}
