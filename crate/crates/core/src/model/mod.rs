//! Self-attentive encoder and span classifier producing span score tables,
//! with hand-written backpropagation for every parameter.

mod checkpoint;
mod encoder;
mod params;
mod table;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::checkpoint::{
    from_bytes, load_checkpoint, save_checkpoint, sidecar_path, to_bytes, Checkpoint,
    CheckpointError, Header, MAGIC,
};
pub use self::encoder::{
    backward, encode, forward, span_scores, EncoderCache, ForwardCache, SpanCache,
};
pub use self::params::{LayerParams, ModelParams};
pub use self::table::{span_count, span_index, SpanScoreTable};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sentence of length {len} exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("cannot encode an empty sentence")]
    Empty,
    #[error("gradient table is {got:?} (length, labels) but the cached forward pass was {want:?}")]
    CacheMismatch {
        got: (usize, usize),
        want: (usize, usize),
    },
}

/// Dropout probabilities of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub attention: f64,
    pub relu: f64,
    pub residual: f64,
    pub embedding: f64,
}

impl Dropout {
    pub const NONE: Dropout = Dropout {
        attention: 0.0,
        relu: 0.0,
        residual: 0.0,
        embedding: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word vocabulary size including the reserved ids.
    pub vocab_size: usize,
    /// Chart labels including the null label.
    pub label_count: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    /// Per-head query/key/value width; `d_model / heads` when absent.
    pub head_dim: Option<usize>,
    pub layers: usize,
    pub label_hidden: usize,
    /// Longest sentence (in words) the positional table covers.
    pub max_len: usize,
    pub dropout: Dropout,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small configuration that trains on a CPU in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            vocab_size: 0,
            label_count: 0,
            d_model: 64,
            d_ff: 128,
            heads: 2,
            head_dim: None,
            layers: 2,
            label_hidden: 32,
            max_len: 64,
            dropout: Dropout {
                attention: 0.1,
                relu: 0.1,
                residual: 0.1,
                embedding: 0.1,
            },
            seed: 1,
        }
    }

    /// The full-size setting tuned on Switchboard. Seven heads do not divide
    /// the model width, so heads use a separate 64-wide projection.
    pub fn paper() -> Self {
        ModelConfig {
            vocab_size: 0,
            label_count: 0,
            d_model: 2048,
            d_ff: 2048,
            heads: 7,
            head_dim: Some(64),
            layers: 4,
            label_hidden: 340,
            max_len: 300,
            dropout: Dropout {
                attention: 0.27,
                relu: 0.09,
                residual: 0.26,
                embedding: 0.2,
            },
            seed: 1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim.unwrap_or(self.d_model / self.heads.max(1))
    }

    /// Total width of the concatenated attention heads.
    pub fn attn_dim(&self) -> usize {
        self.heads * self.head_dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("label_count", self.label_count),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("heads", self.heads),
            ("layers", self.layers),
            ("label_hidden", self.label_hidden),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return err(format!("{name} must be at least 1"));
            }
        }
        if self.label_count < 2 {
            return err("label_count must include the null label and at least one more".into());
        }
        if self.vocab_size < Vocab::RESERVED {
            return err(format!("vocab_size must be at least {}", Vocab::RESERVED));
        }
        if !self.d_model.is_multiple_of(2) {
            return err("d_model must be even (forward/backward halves)".into());
        }
        match self.head_dim {
            None if !self.d_model.is_multiple_of(self.heads) => {
                return err(format!(
                    "d_model {} is not divisible by {} heads",
                    self.d_model, self.heads
                ))
            }
            Some(0) => return err("head_dim must be at least 1".into()),
            _ => {}
        }
        let d = &self.dropout;
        for (name, p) in [
            ("attention", d.attention),
            ("relu", d.relu),
            ("residual", d.residual),
            ("embedding", d.embedding),
        ] {
            if !(0.0..1.0).contains(&p) {
                return err(format!("{name} dropout {p} not in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Word to id mapping. Ids 0, 1 and 2 are reserved for the unknown word and
/// the sentence boundary markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const UNK: usize = 0;
    pub const BOS: usize = 1;
    pub const EOS: usize = 2;
    pub const RESERVED: usize = 3;

    /// Sorted vocabulary of all given words.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: Vec<&str> = words.into_iter().collect();
        set.sort_unstable();
        set.dedup();
        let mut all = vec!["<unk>".to_string(), "<s>".to_string(), "</s>".to_string()];
        all.extend(set.into_iter().map(str::to_string));
        Self::from(all)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= Self::RESERVED
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Ids of a sentence, unknown words mapped to UNK.
    pub fn encode<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        words.into_iter().map(|w| self.id(w)).collect()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .skip(Vocab::RESERVED)
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}
