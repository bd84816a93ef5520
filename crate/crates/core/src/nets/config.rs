use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Denominator base of the attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// √(number of tokens), 1377 for full-length records.
    #[default]
    TokenCount,
    /// √(d_model / n_heads), the usual transformer choice.
    HeadWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MhaConfig {
    pub n_heads: usize,
    pub scale: AttentionScale,
}

impl Default for MhaConfig {
    fn default() -> Self {
        Self { n_heads: 2, scale: AttentionScale::TokenCount }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtNnConfig {
    pub signal_len: usize,
    /// Samples per token window.
    pub token_size: usize,
    /// Conv filters, which is also the model width.
    pub n_embeddings: usize,
    pub n_blocks: usize,
    pub mha: MhaConfig,
    pub head_widths: Vec<usize>,
    pub dropout_p: f64,
}

impl Default for AtNnConfig {
    fn default() -> Self {
        Self {
            signal_len: 1501,
            token_size: 125,
            n_embeddings: 128,
            n_blocks: 2,
            mha: MhaConfig::default(),
            head_widths: vec![128, 64, 3],
            dropout_p: 0.1,
        }
    }
}

impl AtNnConfig {
    pub fn n_tokens(&self) -> usize {
        self.signal_len + 1 - self.token_size
    }

    pub fn d_k(&self) -> usize {
        match self.mha.scale {
            AttentionScale::TokenCount => self.n_tokens(),
            AttentionScale::HeadWidth => self.n_embeddings / self.mha.n_heads,
        }
    }

    pub fn flat_len(&self) -> usize {
        self.n_tokens() * self.n_embeddings
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_size == 0 || self.token_size > self.signal_len {
            return arg(format!("token size {} does not fit signal length {}", self.token_size, self.signal_len));
        }
        if self.n_embeddings == 0 || self.mha.n_heads == 0 || !self.n_embeddings.is_multiple_of(self.mha.n_heads) {
            return arg(format!(
                "{} embeddings cannot be split over {} heads",
                self.n_embeddings, self.mha.n_heads
            ));
        }
        if self.n_embeddings < 2 {
            return arg("layer normalisation needs at least 2 embeddings");
        }
        if self.head_widths.last() != Some(&3) || self.head_widths.contains(&0) {
            return arg(format!("head widths must be positive and end in 3, got {:?}", self.head_widths));
        }
        check_p(self.dropout_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnRegConfig {
    pub signal_len: usize,
    /// Width multiplier on 48 conv filters and 30 dense units.
    pub kappa: usize,
    pub pool_window: usize,
    pub dropout_p: f64,
}

impl Default for CnnRegConfig {
    fn default() -> Self {
        Self { signal_len: 1501, kappa: 1, pool_window: 3, dropout_p: 0.25 }
    }
}

pub(crate) const CNN_FILTERS: usize = 48;
pub(crate) const CNN_DENSE: usize = 30;
pub(crate) const CNN_K1: usize = 15;
pub(crate) const CNN_K2: usize = 9;

impl CnnRegConfig {
    pub fn filters(&self) -> usize {
        CNN_FILTERS * self.kappa
    }

    pub fn dense_width(&self) -> usize {
        CNN_DENSE * self.kappa
    }

    /// Sequence lengths after (conv1, pool1, conv2, pool2), or `None` when
    /// some stage runs out of samples.
    pub fn stage_lengths(&self) -> Option<[usize; 4]> {
        let c1 = self.signal_len.checked_sub(CNN_K1 - 1).filter(|&n| n > 0)?;
        let p1 = c1 / self.pool_window.max(1);
        let c2 = p1.checked_sub(CNN_K2 - 1).filter(|&n| n > 0)?;
        let p2 = c2 / self.pool_window.max(1);
        (p2 > 0).then_some([c1, p1, c2, p2])
    }

    pub fn flat_len(&self) -> usize {
        self.stage_lengths().map_or(0, |s| s[3] * self.filters())
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa < 1 || self.pool_window < 1 {
            return arg(format!("kappa and pool window must be at least 1, got {} and {}", self.kappa, self.pool_window));
        }
        if self.stage_lengths().is_none() {
            return Err(crate::Error::Tensor(seastate_autodiff::Error::Shape(format!(
                "signal length {} is too short for CNN-REG with pool window {}",
                self.signal_len, self.pool_window
            ))));
        }
        check_p(self.dropout_p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return arg(format!("dropout probability must lie in [0, 1), got {p}"));
    }
    Ok(())
}

/// Network family and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    AtNn(AtNnConfig),
    CnnReg(CnnRegConfig),
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::AtNn(AtNnConfig::default())
    }
}

impl Architecture {
    pub fn kind(&self) -> &'static str {
        match self {
            Architecture::AtNn(_) => "at_nn",
            Architecture::CnnReg(_) => "cnn_reg",
        }
    }

    pub fn signal_len(&self) -> usize {
        match self {
            Architecture::AtNn(c) => c.signal_len,
            Architecture::CnnReg(c) => c.signal_len,
        }
    }

    pub fn dropout_p(&self) -> f64 {
        match self {
            Architecture::AtNn(c) => c.dropout_p,
            Architecture::CnnReg(c) => c.dropout_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::AtNn(c) => c.validate(),
            Architecture::CnnReg(c) => c.validate(),
        }
    }
}
