//! Network definitions, inference, and weight bundles.
//!
//! Every model consumes z-scored windows in the canonical column order.

mod anonymizer;
mod bundle;
mod classifier;
mod config;
mod encoder;
mod normalizer;
mod similarity;

pub use anonymizer::{Anonymizer, AnonymizerScratch, AnonymizerTrace, FrameRing, NoiseVector};
pub use bundle::{ModelBundle, ParameterReport, PopulationShift, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use classifier::Classifier;
pub use config::{AnonymizerConfig, ClassifierConfig, EncoderConfig, NormalizerConfig};
pub use encoder::{Embedding, Encoder, EncoderTrace};
pub use normalizer::{Normalizer, NormalizerTrace};
pub use similarity::{HeadGrad, SimilarityModel};
