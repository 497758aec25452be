//! HTTP adapter for a remote masked-LM / encoder server.
//!
//! ```text
//! POST /encode {"texts": [["a"], ["p", "h"]]}                  -> {"vectors": [[f64; d], ...]}
//! POST /topk   {"text": "...", "mask_token": "<mask>", "k": 100} -> {"tokens": [...], "probs": [...]}
//! ```
//!
//! The server has no remote training endpoint contract here; heads are trained
//! locally on the served vectors.

use std::time::Duration;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{AggregateRepr, Completion, EncodeInput, Encoded, LmBackend, MaskQuery};
use crate::error::{LiicError, Result};

pub const DEFAULT_MASK_TOKEN: &str = "<mask>";

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: Vec<Vec<&'a str>>,
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TopkRequest<'a> {
    text: &'a str,
    mask_token: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct TopkResponse {
    tokens: Vec<String>,
    probs: Vec<f64>,
}

#[derive(Debug)]
pub struct ServiceBackend {
    base_url: String,
    mask_token: String,
    dim: usize,
    agent: ureq::Agent,
}

fn transport(e: impl std::fmt::Display) -> LiicError {
    LiicError::Transport(e.to_string())
}

impl ServiceBackend {
    /// Connects and discovers the representation size with a probe request.
    pub fn connect(base_url: &str) -> Result<Self> {
        let mut backend = ServiceBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
            dim: 0,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
        };
        let probe = backend.request_vectors(&[EncodeInput::single(".")])?;
        backend.dim = probe
            .first()
            .map(Vec::len)
            .filter(|&d| d > 0)
            .ok_or_else(|| transport("server returned no probe vector"))?;
        Ok(backend)
    }

    pub fn with_mask_token(mut self, mask: impl Into<String>) -> Self {
        self.mask_token = mask.into();
        self
    }

    fn post<T: Serialize, R: for<'de> Deserialize<'de>>(&self, route: &str, body: &T) -> Result<R> {
        let url = format!("{}{}", self.base_url, route);
        let resp = self.agent.post(&url).send_json(body).map_err(transport)?;
        resp.into_json::<R>().map_err(transport)
    }

    fn request_vectors(&self, inputs: &[EncodeInput]) -> Result<Vec<Vec<f64>>> {
        let texts = inputs
            .iter()
            .map(|i| match i {
                EncodeInput::Single(a) => vec![a.as_str()],
                EncodeInput::Pair(a, b) => vec![a.as_str(), b.as_str()],
            })
            .collect();
        let resp: EncodeResponse = self.post("/encode", &EncodeRequest { texts })?;
        if resp.vectors.len() != inputs.len() {
            return Err(transport(format!(
                "/encode returned {} vectors for {} inputs",
                resp.vectors.len(),
                inputs.len()
            )));
        }
        Ok(resp.vectors)
    }
}

impl LmBackend for ServiceBackend {
    fn id(&self) -> String {
        format!("service({})", self.base_url)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn encode_batch(&self, inputs: &[EncodeInput]) -> Result<Vec<Encoded>> {
        for i in inputs {
            i.check_non_empty()?;
        }
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        self.request_vectors(inputs)?
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(transport(format!("vector of size {} (expected {})", v.len(), self.dim)));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(LiicError::Numeric("server returned a non-finite vector".into()));
                }
                Ok(Encoded {
                    repr: AggregateRepr {
                        vector: Array1::from(v),
                    },
                    truncated: false,
                })
            })
            .collect()
    }

    fn topk_completions(&self, query: &MaskQuery) -> Result<Vec<Completion>> {
        query.validate(&self.mask_token)?;
        let resp: TopkResponse = self.post(
            "/topk",
            &TopkRequest {
                text: &query.text,
                mask_token: &self.mask_token,
                k: query.k,
            },
        )?;
        if resp.tokens.len() != resp.probs.len() {
            return Err(transport("/topk tokens and probs differ in length"));
        }
        let mut out: Vec<Completion> = resp
            .tokens
            .into_iter()
            .zip(resp.probs)
            .map(|(token, prob)| Completion { token, prob })
            .collect();
        out.sort_by(|a, b| b.prob.total_cmp(&a.prob));
        out.truncate(query.k);
        Ok(out)
    }
}
