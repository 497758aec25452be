//! The language-model contract.
//!
//! A backend provides three things: an aggregate sequence representation for
//! one sentence or a sentence pair, masked k-best completion, and (optionally)
//! a decomposition of its representation into trainable embedding rows. The
//! classification head on top lives in [`head`], optimizer stepping in
//! [`train`].

pub mod head;
pub mod mock;
pub mod service;
pub mod train;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{LiicError, Result};

pub use head::{HeadGrads, HeadParams, ParamOrigin};
pub use mock::{CompletionRule, MockBackend, MockConfig};
pub use service::ServiceBackend;
pub use train::{train_step, Adam, AdamConfig, EmbeddingTable, Example, ModelGrads, ModelParams};

pub const DEFAULT_TOP_K: usize = 100;

/// Text fed to the encoder: one utterance, or a premise/hypothesis pair that
/// the backend joins with its separator convention.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncodeInput {
    Single(String),
    Pair(String, String),
}

impl EncodeInput {
    pub fn single(text: impl Into<String>) -> Self {
        EncodeInput::Single(text.into())
    }

    pub fn pair(first: impl Into<String>, second: impl Into<String>) -> Self {
        EncodeInput::Pair(first.into(), second.into())
    }

    fn check_non_empty(&self) -> Result<()> {
        let empty = match self {
            EncodeInput::Single(t) => t.trim().is_empty(),
            EncodeInput::Pair(a, b) => a.trim().is_empty() || b.trim().is_empty(),
        };
        if empty {
            Err(LiicError::Contract("encoder input must be non-empty".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRepr {
    pub vector: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub repr: AggregateRepr,
    /// Input exceeded the backend's maximum length and was cut from the right.
    pub truncated: bool,
}

/// `repr = Σ coeff · E[key]` over rows of the backend's embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledTokens {
    pub entries: Vec<(String, f64)>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskQuery {
    pub text: String,
    pub k: usize,
}

impl MaskQuery {
    pub fn new(text: impl Into<String>, k: usize) -> Self {
        MaskQuery { text: text.into(), k }
    }

    pub fn validate(&self, mask_token: &str) -> Result<()> {
        if self.k == 0 {
            return Err(LiicError::Contract("top-k query needs k >= 1".into()));
        }
        let masks = self.text.matches(mask_token).count();
        if masks != 1 {
            return Err(LiicError::Contract(format!(
                "query must contain exactly one {mask_token}, found {masks}: {:?}",
                self.text
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub token: String,
    pub prob: f64,
}

pub trait LmBackend: Send + Sync {
    /// Stable identifier recorded in checkpoints.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    fn mask_token(&self) -> &str;

    fn encode_batch(&self, inputs: &[EncodeInput]) -> Result<Vec<Encoded>>;

    fn encode(&self, input: &EncodeInput) -> Result<Encoded> {
        let mut out = self.encode_batch(std::slice::from_ref(input))?;
        out.pop()
            .ok_or_else(|| LiicError::Transport("backend returned no vector".into()))
    }

    /// Ranked completions for the single mask position, most probable first.
    fn topk_completions(&self, query: &MaskQuery) -> Result<Vec<Completion>>;

    /// Decomposition of [`encode`](Self::encode) into embedding rows, for
    /// backends whose embedding table can be fine-tuned locally.
    fn pooled_tokens(&self, _input: &EncodeInput) -> Option<PooledTokens> {
        None
    }

    /// Initial value of an embedding row named by [`pooled_tokens`](Self::pooled_tokens).
    fn embedding_row(&self, _key: &str) -> Option<Array1<f64>> {
        None
    }

    /// Inputs cut to the maximum length so far.
    fn truncation_count(&self) -> u64 {
        0
    }
}

impl<T: LmBackend + ?Sized> LmBackend for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn encode_batch(&self, inputs: &[EncodeInput]) -> Result<Vec<Encoded>> {
        (**self).encode_batch(inputs)
    }
    fn topk_completions(&self, query: &MaskQuery) -> Result<Vec<Completion>> {
        (**self).topk_completions(query)
    }
    fn pooled_tokens(&self, input: &EncodeInput) -> Option<PooledTokens> {
        (**self).pooled_tokens(input)
    }
    fn embedding_row(&self, key: &str) -> Option<Array1<f64>> {
        (**self).embedding_row(key)
    }
    fn truncation_count(&self) -> u64 {
        (**self).truncation_count()
    }
}

/// Backend described by configuration; what checkpoints record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Mock(MockConfig),
    Service { url: String },
}

impl BackendSpec {
    pub fn build(&self) -> Result<Box<dyn LmBackend>> {
        Ok(match self {
            BackendSpec::Mock(cfg) => Box::new(MockBackend::new(cfg.clone())),
            BackendSpec::Service { url } => Box::new(ServiceBackend::connect(url)?),
        })
    }
}
