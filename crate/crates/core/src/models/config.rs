use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{FRAME_DIM, WINDOW_FRAMES};

/// LSTM-funnel encoder shape. The pooled summary width equals `frame_state_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub frame_state_dim: usize,
    pub chunk_len: usize,
    pub embedding_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: FRAME_DIM,
            frame_state_dim: 256,
            chunk_len: 30,
            embedding_dim: 256,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.frame_state_dim == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.chunk_len == 0 || WINDOW_FRAMES % self.chunk_len != 0 {
            return Err(Error::Config(format!(
                "chunk length {} must divide {WINDOW_FRAMES}",
                self.chunk_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub encoder: EncoderConfig,
    pub hidden_dense_dims: Vec<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            hidden_dense_dims: vec![256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnonymizerConfig {
    pub channels: usize,
    pub noise_dim: usize,
    pub conv_filters: usize,
    /// Receptive field in frames, current frame included.
    pub kernel: usize,
    pub dense_dims: Vec<usize>,
}

impl Default for AnonymizerConfig {
    fn default() -> Self {
        Self {
            channels: FRAME_DIM,
            noise_dim: 32,
            conv_filters: 64,
            kernel: 31,
            dense_dims: vec![128, 64],
        }
    }
}

impl AnonymizerConfig {
    pub fn hybrid_dim(&self) -> usize {
        self.channels + self.noise_dim + self.conv_filters
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizerConfig {
    pub channels: usize,
    pub state_dim: usize,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self {
            channels: FRAME_DIM,
            state_dim: 256,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_width_is_117() {
        assert_eq!(AnonymizerConfig::default().hybrid_dim(), 117);
    }

    #[test]
    fn chunk_must_divide_window() {
        let mut c = EncoderConfig::default();
        assert!(c.validate().is_ok());
        c.chunk_len = 31;
        assert!(c.validate().is_err());
    }
}
