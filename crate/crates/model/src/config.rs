use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stacked block counts per encoder and for the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub nl: usize,
    pub ast: usize,
    pub test_info: usize,
    pub code: usize,
    pub decoder: usize,
}

impl BlockCounts {
    pub fn uniform(n: usize) -> Self {
        BlockCounts { nl: n, ast: n, test_info: n, code: n, decoder: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding and hidden width.
    pub d: usize,
    /// Attention heads; also the gating head count.
    pub heads: usize,
    /// Convolution window size (odd).
    pub k_window: usize,
    /// Convolution layers per block.
    pub conv_layers: usize,
    pub blocks: BlockCounts,
    /// Hidden width of the decoder feed-forward sublayer.
    pub ff_first: usize,
    pub dropout: f64,
    /// Longest token sequence fed to an encoder; longer inputs are truncated.
    pub l_max: usize,
    /// Characters kept per token.
    pub s_max: usize,
    /// Character embedding width.
    pub char_dim: usize,
    pub n_iterations: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 256,
            heads: 8,
            k_window: 3,
            conv_layers: 1,
            blocks: BlockCounts { nl: 6, ast: 5, test_info: 6, code: 5, decoder: 5 },
            ff_first: 1024,
            dropout: 0.15,
            l_max: 512,
            s_max: cgt_core::text::S_MAX,
            char_dim: 32,
            n_iterations: 3,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("d = {d} is not divisible by heads = {heads}")]
    HeadSplit { d: usize, heads: usize },
    #[error("k_window = {0} must be odd")]
    EvenWindow(usize),
    #[error("dropout {0} outside [0, 1)")]
    Dropout(f64),
    #[error("{0} must be positive")]
    Zero(&'static str),
}

impl ModelConfig {
    /// Small settings for tests and toy runs.
    pub fn tiny() -> Self {
        ModelConfig {
            d: 64,
            heads: 4,
            blocks: BlockCounts::uniform(2),
            ff_first: 128,
            char_dim: 8,
            l_max: 128,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("d", self.d),
            ("heads", self.heads),
            ("k_window", self.k_window),
            ("ff_first", self.ff_first),
            ("l_max", self.l_max),
            ("s_max", self.s_max),
            ("char_dim", self.char_dim),
            ("n_iterations", self.n_iterations),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.d % self.heads != 0 {
            return Err(ConfigError::HeadSplit { d: self.d, heads: self.heads });
        }
        if self.k_window % 2 == 0 {
            return Err(ConfigError::EvenWindow(self.k_window));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Dropout(self.dropout));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d / self.heads
    }
}
