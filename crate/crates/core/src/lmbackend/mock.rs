//! Deterministic in-process backend.
//!
//! Text is tokenized by lowercasing and extracting words (letters/digits,
//! with internal `'`, `’` or `-` joins) plus the literal mask token. Words
//! inside a negation scope (after `not`, `no`, `never` or a `n't` word, up to
//! the next `, ; : . ! ?`) get a `not_` key prefix. The sequence is
//! `<s> a… </s>` for a single text and `<s> a… </s> </s> b#2… </s>` for a
//! pair, where keys of the second segment get a `#2` suffix. The aggregate
//! representation is the sum of the `n` key embeddings scaled by `1/√n`.
//!
//! Embedding rule for a key `k` under seed `s` and dimension `d`:
//!
//! ```text
//! state = fnv1a64(k) ^ (s · 0x9E3779B97F4A7C15)
//! for j in 0..d: state, x = splitmix64(state); E[k][j] = 2·(x >> 11)/2⁵³ − 1
//! ```
//!
//! Masked completion scores every vocabulary word `v` with
//! `4 · mean(E[context]) · E["out:" + v]` and normalizes with a softmax.
//! [`CompletionRule`]s pin chosen tokens to the top for one exact cloze text.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use ndarray::Array1;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Completion, EncodeInput, Encoded, LmBackend, MaskQuery, PooledTokens};
use crate::error::Result;

pub const MOCK_MASK_TOKEN: &str = "<mask>";

const COMPLETION_SCALE: f64 = 4.0;
const PINNED_LOGIT: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRule {
    /// Cloze text, compared after collapsing whitespace.
    pub text: String,
    /// Tokens placed at the top, in this order.
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    pub dim: usize,
    pub seed: u64,
    pub max_len: usize,
    #[serde(default)]
    pub vocab: Vec<String>,
    #[serde(default)]
    pub completions: Vec<CompletionRule>,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            dim: 16,
            seed: 0,
            max_len: 128,
            vocab: Vec::new(),
            completions: Vec::new(),
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    cfg: MockConfig,
    truncations: AtomicU64,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<mask>|[\p{L}\p{N}]+(?:['’\-][\p{L}\p{N}]+)*").unwrap())
}

/// Lowercased word tokens; the mask token survives as a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    word_regex()
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .collect()
}

fn scoped_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<mask>|[\p{L}\p{N}]+(?:['’\-][\p{L}\p{N}]+)*|[,;:.!?]").unwrap())
}

fn is_negation_cue(word: &str) -> bool {
    matches!(word, "not" | "no" | "never") || word.ends_with("n't") || word.ends_with("n’t")
}

/// Encoder keys: [`tokenize`] with negation scopes marked.
pub fn scoped_keys(text: &str) -> Vec<String> {
    let mut keys = Vec::new();
    let mut negated = false;
    for m in scoped_regex().find_iter(text) {
        let tok = m.as_str().to_lowercase();
        if tok.len() == 1 && ",;:.!?".contains(tok.as_str()) {
            negated = false;
            continue;
        }
        let cue = is_negation_cue(&tok);
        keys.push(if negated && tok != MOCK_MASK_TOKEN { format!("not_{tok}") } else { tok });
        negated |= cue;
    }
    keys
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Self {
        MockBackend {
            cfg,
            truncations: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    pub fn hashed_embedding(&self, key: &str) -> Array1<f64> {
        let mut state = fnv1a64(key.as_bytes()) ^ self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Array1::from_iter((0..self.cfg.dim).map(|_| {
            let x = splitmix64(&mut state);
            2.0 * ((x >> 11) as f64 / (1u64 << 53) as f64) - 1.0
        }))
    }

    fn keys(&self, input: &EncodeInput) -> (Vec<String>, bool) {
        let mut keys = vec!["<s>".to_string()];
        match input {
            EncodeInput::Single(a) => {
                keys.extend(scoped_keys(a));
                keys.push("</s>".into());
            }
            EncodeInput::Pair(a, b) => {
                keys.extend(scoped_keys(a));
                keys.push("</s>".into());
                keys.push("</s>".into());
                keys.extend(scoped_keys(b).into_iter().map(|t| format!("{t}#2")));
                keys.push("</s>".into());
            }
        }
        let truncated = keys.len() > self.cfg.max_len;
        if truncated {
            keys.truncate(self.cfg.max_len.max(1));
        }
        (keys, truncated)
    }

    fn pool(&self, input: &EncodeInput) -> PooledTokens {
        let (keys, truncated) = self.keys(input);
        if truncated {
            self.truncations.fetch_add(1, Ordering::Relaxed);
            log::warn!("mock backend truncated input to {} tokens", self.cfg.max_len);
        }
        let coeff = 1.0 / (keys.len() as f64).sqrt();
        PooledTokens {
            entries: keys.into_iter().map(|k| (k, coeff)).collect(),
            truncated,
        }
    }
}

impl LmBackend for MockBackend {
    fn id(&self) -> String {
        format!("mock(d={},seed={})", self.cfg.dim, self.cfg.seed)
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn mask_token(&self) -> &str {
        MOCK_MASK_TOKEN
    }

    fn encode_batch(&self, inputs: &[EncodeInput]) -> Result<Vec<Encoded>> {
        inputs
            .iter()
            .map(|input| {
                input.check_non_empty()?;
                let pooled = self.pool(input);
                let mut v = Array1::zeros(self.cfg.dim);
                for (key, c) in &pooled.entries {
                    v.scaled_add(*c, &self.hashed_embedding(key));
                }
                Ok(Encoded {
                    repr: super::AggregateRepr { vector: v },
                    truncated: pooled.truncated,
                })
            })
            .collect()
    }

    fn topk_completions(&self, query: &MaskQuery) -> Result<Vec<Completion>> {
        query.validate(MOCK_MASK_TOKEN)?;
        let context: Vec<String> = tokenize(&query.text)
            .into_iter()
            .filter(|t| t != MOCK_MASK_TOKEN)
            .collect();
        let mut ctx = Array1::zeros(self.cfg.dim);
        if !context.is_empty() {
            for t in &context {
                ctx += &self.hashed_embedding(t);
            }
            ctx /= context.len() as f64;
        }

        let normalized = normalize_ws(&query.text);
        let pinned: &[String] = self
            .cfg
            .completions
            .iter()
            .find(|r| normalize_ws(&r.text) == normalized)
            .map(|r| r.tokens.as_slice())
            .unwrap_or(&[]);

        let mut candidates: Vec<(String, f64)> = Vec::new();
        let mut seen = HashSet::new();
        for (rank, tok) in pinned.iter().enumerate() {
            if seen.insert(tok.as_str()) {
                candidates.push((tok.clone(), PINNED_LOGIT - rank as f64));
            }
        }
        for word in &self.cfg.vocab {
            if !seen.insert(word.as_str()) {
                continue;
            }
            let logit = COMPLETION_SCALE * ctx.dot(&self.hashed_embedding(&format!("out:{word}")));
            candidates.push((word.clone(), logit));
        }
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let max = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = candidates.iter().map(|c| (c.1 - max).exp()).sum();
        let mut out: Vec<Completion> = candidates
            .into_iter()
            .map(|(token, logit)| Completion {
                token,
                prob: (logit - max).exp() / total,
            })
            .collect();
        out.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
        out.truncate(query.k);
        Ok(out)
    }

    fn pooled_tokens(&self, input: &EncodeInput) -> Option<PooledTokens> {
        Some(self.pool(input))
    }

    fn embedding_row(&self, key: &str) -> Option<Array1<f64>> {
        Some(self.hashed_embedding(key))
    }

    fn truncation_count(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend(vocab: &[&str]) -> MockBackend {
        MockBackend::new(MockConfig {
            dim: 4,
            vocab: vocab.iter().map(|s| s.to_string()).collect(),
            ..MockConfig::default()
        })
    }

    #[test]
    fn tokenizer_keeps_mask_and_hyphen_words() {
        assert_eq!(
            tokenize("Community-acquired pneumonia, <mask> it's"),
            vec!["community-acquired", "pneumonia", "<mask>", "it's"]
        );
        assert_eq!(tokenize("community-<mask> x"), vec!["community", "<mask>", "x"]);
        assert_eq!(
            scoped_keys("It is not sure that A won, B doesn't play C. D"),
            vec!["it", "is", "not", "not_sure", "not_that", "not_a", "not_won", "b", "doesn't", "not_play", "not_c", "d"]
        );
    }

    #[test]
    fn encode_is_deterministic_and_order_sensitive() {
        let b = backend(&[]);
        let a1 = b.encode(&EncodeInput::single("a")).unwrap();
        let a2 = b.encode(&EncodeInput::single("a")).unwrap();
        assert_eq!(a1, a2);
        let ph = b.encode(&EncodeInput::pair("p", "h")).unwrap();
        let hp = b.encode(&EncodeInput::pair("h", "p")).unwrap();
        assert_ne!(ph.repr, hp.repr);
        assert!(b.encode(&EncodeInput::single("  ")).is_err());
    }

    #[test]
    fn truncation_is_counted() {
        let b = MockBackend::new(MockConfig {
            max_len: 4,
            ..MockConfig::default()
        });
        let e = b.encode(&EncodeInput::single("one two three four five")).unwrap();
        assert!(e.truncated);
        assert_eq!(b.truncation_count(), 1);
        assert!(!b.encode(&EncodeInput::single("one")).unwrap().truncated);
        assert_eq!(b.truncation_count(), 1);
    }

    #[test]
    fn topk_sorted_and_saturates() {
        let b = backend(&["alpha", "beta", "gamma", "delta"]);
        let q = MaskQuery::new("the <mask> ran", 10);
        let out = b.topk_completions(&q).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.windows(2).all(|w| w[0].prob >= w[1].prob));
        assert!(out.iter().all(|c| c.prob > 0.0 && c.prob <= 1.0));
        let one = b.topk_completions(&MaskQuery::new("the <mask> ran", 1)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], out[0]);
    }

    #[test]
    fn pinned_completion_is_top() {
        let text = "Catchers <mask> the field; they control the plays and tell everyone where to be.";
        let b = MockBackend::new(MockConfig {
            vocab: vec!["own".into(), "play".into()],
            completions: vec![CompletionRule {
                text: text.into(),
                tokens: vec!["rule".into()],
            }],
            ..MockConfig::default()
        });
        let out = b.topk_completions(&MaskQuery::new(text, 100)).unwrap();
        assert_eq!(out[0].token, "rule");
        let other = b.topk_completions(&MaskQuery::new("They <mask> it.", 100)).unwrap();
        assert!(other.iter().all(|c| c.token != "rule"));
    }

    #[test]
    fn query_without_mask_is_contract_violation() {
        let b = backend(&["a"]);
        assert!(b.topk_completions(&MaskQuery::new("no mask here", 3)).is_err());
        assert!(b.topk_completions(&MaskQuery::new("<mask> <mask>", 3)).is_err());
        assert!(b.topk_completions(&MaskQuery::new("<mask>", 0)).is_err());
    }
}
